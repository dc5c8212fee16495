#pragma once

// Deliberately naive reference implementations used only by tests. They
// restate the contracts from scratch (direct summation, exhaustive scans)
// so a shared bug with the library is unlikely.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include "corsa/pcat.hpp"
#include "corsa/vec3.hpp"

namespace oracle {

struct NaiveRegression {
  std::vector<double> r_max;
  std::vector<double> w;
  std::vector<double> r_h;
};

// Direct double-loop transliteration of the regression formulas.
inline NaiveRegression naive_healthy_radius(const std::vector<double>& r, double sigma_x,
                                            double sigma_max, double sigma_r, double kappa) {
  const std::size_t n = r.size();
  NaiveRegression out;
  out.r_max.resize(n);
  out.w.resize(n);
  out.r_h.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      const double g = std::exp(-d * d / (2.0 * sigma_max * sigma_max));
      num += g * r[j];
      den += g;
    }
    out.r_max[i] = num / den + kappa;
  }

  for (std::size_t i = 0; i < n; ++i) {
    const double d = r[i] - out.r_max[i];
    out.w[i] = std::exp(-d * d / (2.0 * sigma_r * sigma_r)) /
               (sigma_r * std::sqrt(2.0 * std::numbers::pi));
  }

  for (std::size_t i = 0; i < n; ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      const double g = std::exp(-d * d / (2.0 * sigma_x * sigma_x));
      num += g * out.w[j] * r[j];
      den += g * out.w[j];
    }
    out.r_h[i] = num / den;
  }
  return out;
}

// Interior local maxima, plateaus represented by their leftmost index.
inline std::vector<std::size_t> maxima_by_scan(const std::vector<double>& s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    if (!(s[i] > s[i - 1])) continue;
    std::size_t j = i;
    while (j + 1 < s.size() && s[j + 1] == s[i]) ++j;
    if (j + 1 < s.size() && s[j + 1] < s[i]) out.push_back(i);
  }
  return out;
}

// Topographic prominence from the definition: walk outward to the nearest
// strictly higher ground on each side, track the lowest point passed, and
// measure the drop to the higher of the two valley floors.
inline double prominence_by_definition(const std::vector<double>& s, std::size_t p) {
  const double h = s[p];
  double left_min = h;
  for (std::size_t i = p; i-- > 0;) {
    if (s[i] > h) break;
    if (s[i] < left_min) left_min = s[i];
  }
  double right_min = h;
  for (std::size_t i = p + 1; i < s.size(); ++i) {
    if (s[i] > h) break;
    if (s[i] < right_min) right_min = s[i];
  }
  return h - std::max(left_min, right_min);
}

// Peak thinning restated: tallest-first greedy acceptance under a minimum
// abscissa separation, then a 25%-of-max prominence gate.
inline std::vector<std::size_t> peaks_by_greedy(const std::vector<double>& abscissa,
                                                const std::vector<double>& r) {
  const std::vector<std::size_t> raw = maxima_by_scan(r);
  if (raw.empty()) return {};
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(r.size());
  const double min_sep = 2.5 * 2.0 * mean;

  std::vector<std::size_t> by_height = raw;
  std::stable_sort(by_height.begin(), by_height.end(),
                   [&](std::size_t a, std::size_t b) { return r[a] > r[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t c : by_height) {
    bool ok = true;
    for (std::size_t k : kept)
      if (std::abs(abscissa[c] - abscissa[k]) < min_sep) ok = false;
    if (ok) kept.push_back(c);
  }

  double max_prom = 0.0;
  for (std::size_t k : kept) max_prom = std::max(max_prom, prominence_by_definition(r, k));
  std::vector<std::size_t> out;
  for (std::size_t k : kept)
    if (prominence_by_definition(r, k) >= 0.25 * max_prom) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

namespace detail {

inline double t_pdf(double x, double nu) {
  const double ln = std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) -
                    0.5 * std::log(nu * std::numbers::pi);
  return std::exp(ln - (nu + 1.0) / 2.0 * std::log1p(x * x / nu));
}

inline double simpson(double a, double b, double fa, double fm, double fb, double nu,
                      double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = t_pdf(lm, nu), frm = t_pdf(rm, nu);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson(a, m, fa, flm, fm, nu, left, tol / 2.0, depth - 1) +
         simpson(m, b, fm, frm, fb, nu, right, tol / 2.0, depth - 1);
}

}  // namespace detail

// Student t CDF by adaptive Simpson quadrature of the density.
inline double t_cdf_by_quadrature(double t, double nu) {
  const double hi = std::abs(t);
  if (hi == 0.0) return 0.5;
  const double fa = detail::t_pdf(0.0, nu);
  const double fb = detail::t_pdf(hi, nu);
  const double fm = detail::t_pdf(hi / 2.0, nu);
  const double whole = hi / 6.0 * (fa + 4.0 * fm + fb);
  const double integral = detail::simpson(0.0, hi, fa, fm, fb, nu, whole, 1e-13, 48);
  return t >= 0.0 ? 0.5 + integral : 0.5 - integral;
}

// Exhaustive two-sided Mann-Whitney p for tie-free samples: enumerate every
// assignment of pooled ranks to the first group and count U at or below the
// observed smaller statistic.
inline double mwu_exact_p_by_enumeration(const std::vector<double>& a,
                                         const std::vector<double>& b) {
  const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  auto rank_of = [&](double v) {
    return static_cast<double>(std::lower_bound(sorted.begin(), sorted.end(), v) -
                               sorted.begin()) + 1.0;
  };
  double r1 = 0.0;
  for (std::size_t i = 0; i < n1; ++i) r1 += rank_of(a[i]);
  const double u1 = r1 - static_cast<double>(n1) * (n1 + 1) / 2.0;
  const double u2 = static_cast<double>(n1) * n2 - u1;
  const double u_obs = std::min(u1, u2);

  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(n1), true);
  std::sort(pick.begin(), pick.end());  // lowest lexicographic mask first
  double total = 0.0, at_or_below = 0.0;
  do {
    double rsum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (pick[i]) rsum += static_cast<double>(i) + 1.0;
    const double u = rsum - static_cast<double>(n1) * (n1 + 1) / 2.0;
    total += 1.0;
    if (u <= u_obs + 1e-12) at_or_below += 1.0;
  } while (std::next_permutation(pick.begin(), pick.end()));
  return std::min(1.0, 2.0 * at_or_below / total);
}

// AUC restated as the exhaustive pairwise comparison with half credit for
// tied scores.
inline double auc_by_pairwise(const std::vector<double>& p, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (p[i] > p[j])
        wins += 1.0;
      else if (p[i] == p[j])
        wins += 0.5;
    }
  }
  return wins / pairs;
}

// Tube membership restated from the contract: inside both end planes and
// within the interpolated outer radius at the closest path point.
inline bool in_tube(const corsa::Vec3& p, const std::vector<corsa::Vec3>& pts,
                    const std::vector<double>& outer) {
  const std::size_t n = pts.size();
  const corsa::Vec3 t0 = (pts[1] - pts[0]).normalized();
  const corsa::Vec3 tn = (pts[n - 1] - pts[n - 2]).normalized();
  if ((p - pts.front()).dot(t0) < 0.0) return false;
  if ((p - pts.back()).dot(tn) > 0.0) return false;
  double best_d2 = std::numeric_limits<double>::infinity(), best_r = 0.0;
  for (std::size_t s = 0; s + 1 < n; ++s) {
    const corsa::Vec3 ab = pts[s + 1] - pts[s];
    const double t = std::clamp((p - pts[s]).dot(ab) / ab.norm2(), 0.0, 1.0);
    const double d2 = (p - (pts[s] + ab * t)).norm2();
    if (d2 < best_d2) {
      best_d2 = d2;
      best_r = outer[s] + t * (outer[s + 1] - outer[s]);
    }
  }
  return best_d2 <= best_r * best_r;
}

// Tube volume inside the grid domain, estimated by subdividing every voxel
// into factor^3 sample points.
inline double supersampled_tube_volume(const std::vector<corsa::Vec3>& pts,
                                       const std::vector<double>& outer,
                                       const corsa::VoxelVolume& grid, int factor) {
  const double f = static_cast<double>(factor);
  std::size_t inside = 0;
  for (std::size_t iz = 0; iz < grid.dims[2]; ++iz)
    for (std::size_t iy = 0; iy < grid.dims[1]; ++iy)
      for (std::size_t ix = 0; ix < grid.dims[0]; ++ix)
        for (int a = 0; a < factor; ++a)
          for (int b = 0; b < factor; ++b)
            for (int c = 0; c < factor; ++c) {
              const corsa::Vec3 local{
                  (static_cast<double>(ix) + (a + 0.5) / f - 0.5) * grid.spacing.x,
                  (static_cast<double>(iy) + (b + 0.5) / f - 0.5) * grid.spacing.y,
                  (static_cast<double>(iz) + (c + 0.5) / f - 0.5) * grid.spacing.z};
              if (in_tube(grid.origin + grid.direction * local, pts, outer)) ++inside;
            }
  return static_cast<double>(inside) / (f * f * f) * grid.voxel_volume();
}

// Percentile by linear interpolation on the sorted values, restated from
// the h = (n - 1) q / 100 rule.
inline double percentile_linear(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * q / 100.0;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

}  // namespace oracle
