#include "corsa/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace corsa {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("normal quantile needs p in (0,1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -v : v;
}

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double sample_mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Midranks of the pooled sample, in pooled order.
std::vector<double> midranks(const std::vector<double>& pooled) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// P(U <= u) over all equally likely assignments of tie-free ranks, via a
// subset-sum count.
double exact_u_cdf(std::size_t n1, std::size_t n2, double u) {
  const std::size_t n = n1 + n2;
  const std::size_t umax = n1 * n2;
  // ways[j][s]: subsets of size j of the ranks seen so far whose U sums to s.
  std::vector<std::vector<double>> ways(n1 + 1, std::vector<double>(umax + 1, 0.0));
  ways[0][0] = 1.0;
  for (std::size_t r = 1; r <= n; ++r) {
    for (std::size_t j = std::min(r, n1); j >= 1; --j) {
      for (std::size_t s = umax + 1; s-- > 0;) {
        // Picking rank r as the j-th member adds r - j to U.
        if (ways[j - 1][s] == 0.0) continue;
        const std::size_t add = r - j;
        if (s + add <= umax) ways[j][s + add] += ways[j - 1][s];
      }
    }
  }
  double total = 0.0, at_or_below = 0.0;
  for (std::size_t s = 0; s <= umax; ++s) {
    total += ways[n1][s];
    if (static_cast<double>(s) <= u + 1e-12) at_or_below += ways[n1][s];
  }
  return at_or_below / total;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidInput("incomplete beta needs positive shape");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = a * std::log(x) + b * std::log1p(-x) -
                          (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) -
                        (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b))) *
                   beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double nu) {
  if (!(nu > 0.0)) throw InvalidInput("t distribution needs positive degrees of freedom");
  const double x = nu / (nu + t * t);
  const double tail = 0.5 * incomplete_beta(nu / 2.0, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

TestResult shapiro_wilk(const std::vector<double>& sample) {
  const std::size_t n = sample.size();
  if (n < 3 || n > 5000) throw InvalidInput("shapiro_wilk needs 3 <= n <= 5000");
  std::vector<double> x = sample;
  std::sort(x.begin(), x.end());
  const double range = x.back() - x.front();
  if (range <= 0.0) throw InvalidInput("shapiro_wilk: degenerate (constant) sample");

  // Expected normal order statistics (Blom scores) and the weight vector.
  const double dn = static_cast<double>(n);
  std::vector<double> m(n);
  double ssumm2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (dn + 0.25));
    ssumm2 += m[i] * m[i];
  }
  std::vector<double> a(n);
  if (n == 3) {
    a[0] = -std::sqrt(0.5);
    a[1] = 0.0;
    a[2] = std::sqrt(0.5);
  } else {
    const double rsn = 1.0 / std::sqrt(dn);
    const double an =
        -2.706056 * std::pow(rsn, 5) + 4.434685 * std::pow(rsn, 4) -
        2.071190 * std::pow(rsn, 3) - 0.147981 * rsn * rsn + 0.221157 * rsn +
        m[n - 1] / std::sqrt(ssumm2);
    if (n > 5) {
      const double an1 =
          -3.582633 * std::pow(rsn, 5) + 5.682633 * std::pow(rsn, 4) -
          1.752461 * std::pow(rsn, 3) - 0.293762 * rsn * rsn + 0.042981 * rsn +
          m[n - 2] / std::sqrt(ssumm2);
      const double phi = (ssumm2 - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) /
                         (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
      const double fac = std::sqrt(phi);
      a[n - 1] = an;
      a[n - 2] = an1;
      a[0] = -an;
      a[1] = -an1;
      for (std::size_t i = 2; i + 2 < n; ++i) a[i] = m[i] / fac;
    } else {
      const double phi = (ssumm2 - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * an * an);
      const double fac = std::sqrt(phi);
      a[n - 1] = an;
      a[0] = -an;
      for (std::size_t i = 1; i + 1 < n; ++i) a[i] = m[i] / fac;
    }
  }

  const double mean = sample_mean(x);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += a[i] * x[i];
    den += (x[i] - mean) * (x[i] - mean);
  }
  if (den <= 0.0) throw InvalidInput("shapiro_wilk: degenerate (constant) sample");
  double w = num * num / den;
  w = std::min(w, 1.0);

  double p;
  if (n == 3) {
    constexpr double pi6 = 1.90985931710274;   // 6/pi
    constexpr double stqr = 1.04719755119660;  // asin(sqrt(3/4))
    p = pi6 * (std::asin(std::sqrt(w)) - stqr);
    p = std::clamp(p, 0.0, 1.0);
  } else if (n <= 11) {
    const double g = -2.273 + 0.459 * dn;
    const double y0 = std::log1p(-w);
    if (y0 >= g) {
      p = 1e-99;  // transform breaks down only for extreme departures
    } else {
      const double y = -std::log(g - y0);
      const double mu = 0.5440 - 0.39978 * dn + 0.025054 * dn * dn - 0.0006714 * dn * dn * dn;
      const double sigma =
          std::exp(1.3822 - 0.77857 * dn + 0.062767 * dn * dn - 0.0020322 * dn * dn * dn);
      p = 1.0 - normal_cdf((y - mu) / sigma);
    }
  } else {
    const double ln = std::log(dn);
    const double y = std::log1p(-w);
    const double mu = -1.5861 - 0.31082 * ln - 0.083751 * ln * ln + 0.0038915 * ln * ln * ln;
    const double sigma = std::exp(-0.4803 - 0.082676 * ln + 0.0030302 * ln * ln);
    p = 1.0 - normal_cdf((y - mu) / sigma);
  }
  return {w, p, n, 0, "shapiro_wilk"};
}

TestResult students_t(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n1 = a.size(), n2 = b.size();
  if (n1 < 2 || n2 < 2) throw InvalidInput("students_t needs at least 2 per group");
  const double m1 = sample_mean(a), m2 = sample_mean(b);
  double ss = 0.0;
  for (double v : a) ss += (v - m1) * (v - m1);
  for (double v : b) ss += (v - m2) * (v - m2);
  const double nu = static_cast<double>(n1 + n2 - 2);
  const double sp2 = ss / nu;
  if (sp2 <= 0.0) throw InvalidInput("students_t: zero pooled variance");
  const double se = std::sqrt(sp2 * (1.0 / n1 + 1.0 / n2));
  const double t = (m1 - m2) / se;
  const double p = incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
  return {t, std::min(p, 1.0), n1, n2, "students_t"};
}

TestResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n1 = a.size(), n2 = b.size();
  if (n1 < 1 || n2 < 1) throw InvalidInput("mann_whitney_u needs nonempty samples");
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::vector<double> ranks = midranks(pooled);
  double r1 = 0.0;
  for (std::size_t i = 0; i < n1; ++i) r1 += ranks[i];
  const double u1 = r1 - static_cast<double>(n1) * (n1 + 1) / 2.0;
  const double u2 = static_cast<double>(n1) * n2 - u1;

  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  const bool has_ties = std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();

  double p;
  if (!has_ties && n1 + n2 <= 16) {
    p = std::min(1.0, 2.0 * exact_u_cdf(n1, n2, std::min(u1, u2)));
  } else {
    const double n = static_cast<double>(n1 + n2);
    double tie_sum = 0.0;
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_sum += t * t * t - t;
      i = j + 1;
    }
    const double mean = static_cast<double>(n1) * n2 / 2.0;
    const double var = static_cast<double>(n1) * n2 / 12.0 *
                       ((n + 1.0) - tie_sum / (n * (n - 1.0)));
    if (var <= 0.0) {
      p = 1.0;  // everything tied; U is forced to its mean
    } else {
      const double z = std::max(0.0, std::abs(u1 - mean) - 0.5) / std::sqrt(var);
      p = std::min(1.0, 2.0 * (1.0 - normal_cdf(z)));
    }
  }
  return {u1, p, n1, n2, "mann_whitney_u"};
}

GroupComparison compare_groups(const std::vector<double>& a, const std::vector<double>& b,
                               double alpha) {
  GroupComparison out;
  bool normal = true;
  try {
    out.normality_a = shapiro_wilk(a);
    out.normality_b = shapiro_wilk(b);
    normal = out.normality_a.p_value > alpha && out.normality_b.p_value > alpha;
  } catch (const InvalidInput& e) {
    normal = false;
    out.flags.push_back(std::string("normality test unavailable: ") + e.what());
  }
  if (normal) {
    try {
      out.comparison = students_t(a, b);
      return out;
    } catch (const InvalidInput& e) {
      out.flags.push_back(std::string("t-test unavailable: ") + e.what());
    }
  }
  out.comparison = mann_whitney_u(a, b);
  return out;
}

}  // namespace corsa
