#pragma once

#include <functional>
#include <vector>

namespace corsa {

// Box-constrained limited-memory BFGS (L-BFGS-B): gradient-projection
// Cauchy point, direct primal subspace minimization, strong Wolfe line
// search restricted to the feasible segment. Deterministic for a fixed
// objective.
struct LbfgsbOptions {
  int max_iterations = 100;
  int history = 5;
  double pg_tol = 1e-9;    // sup-norm of the projected gradient
  double f_tol = 1e-12;    // relative decrease of f between iterations
  int max_line_search = 25;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
};

struct LbfgsbResult {
  std::vector<double> x;
  double fx = 0.0;
  int iterations = 0;
  bool converged = false;
};

using Objective = std::function<double(const std::vector<double>&)>;
using Gradient = std::function<std::vector<double>(const std::vector<double>&)>;

LbfgsbResult lbfgsb_minimize(const Objective& f, const Gradient& grad,
                             std::vector<double> x0,
                             const std::vector<double>& lower,
                             const std::vector<double>& upper,
                             const LbfgsbOptions& options = {});

// Central-difference gradient with per-axis steps, clamped to the box;
// divides by the actual displacement so bound-adjacent points stay valid.
Gradient numerical_gradient(const Objective& f, const std::vector<double>& lower,
                            const std::vector<double>& upper,
                            const std::vector<double>& steps);

}  // namespace corsa
