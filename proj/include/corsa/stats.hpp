#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "corsa/common.hpp"

namespace corsa {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  std::string method;
};

// Standard normal CDF and its inverse (Wichura's PPND16 rational
// approximation, accurate to ~1e-16 over (0,1)).
double normal_cdf(double z);
double normal_quantile(double p);

// Regularized incomplete beta I_x(a,b) by continued fraction.
double incomplete_beta(double a, double b, double x);

// CDF of Student's t with nu degrees of freedom.
double student_t_cdf(double t, double nu);

// W statistic and p-value via Royston's approximation, valid for
// 3 <= n <= 5000. Throws InvalidInput outside that range or for
// (near-)constant samples.
TestResult shapiro_wilk(const std::vector<double>& sample);

// Two-sample pooled-variance t-test, two-sided.
TestResult students_t(const std::vector<double>& a, const std::vector<double>& b);

// Mann-Whitney U with midranks. Exact two-sided p by enumeration when
// n1+n2 <= 16 and the pooled sample is tie-free, otherwise a normal
// approximation with tie and continuity corrections. The statistic is U
// of the first sample.
TestResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);

// Normality-gated comparison: Student's t iff both groups pass
// Shapiro-Wilk at the given level, Mann-Whitney otherwise.
struct GroupComparison {
  TestResult normality_a;
  TestResult normality_b;
  TestResult comparison;
  Flags flags;
};

GroupComparison compare_groups(const std::vector<double>& a, const std::vector<double>& b,
                               double alpha = 0.05);

}  // namespace corsa
