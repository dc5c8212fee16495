#include "corsa/stenosis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "corsa/lbfgsb.hpp"

namespace corsa {

namespace {

constexpr double kTiny = std::numeric_limits<double>::min();

// Kernel values by index distance, so the O(n^2) passes reduce to
// multiply-adds instead of transcendentals.
std::vector<double> kernel_table(std::size_t n, double sigma) {
  std::vector<double> k(n);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t d = 0; d < n; ++d) {
    const double dd = static_cast<double>(d);
    k[d] = std::exp(-dd * dd * inv);
  }
  return k;
}

double smoothed_at(std::size_t i, const std::vector<double>& r, const std::vector<double>& k) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    const std::size_t d = i > j ? i - j : j - i;
    num += k[d] * r[j];
    den += k[d];
  }
  return num / den;
}

// Healthy radius at one point; falls back to unweighted smoothing when the
// weighted denominator underflows.
double healthy_at(std::size_t i, const std::vector<double>& r, const std::vector<double>& w,
                  const std::vector<double>& k, bool* fallback) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    const std::size_t d = i > j ? i - j : j - i;
    num += k[d] * w[j] * r[j];
    den += k[d] * w[j];
  }
  if (den <= kTiny) {
    if (fallback) *fallback = true;
    return smoothed_at(i, r, k);
  }
  if (fallback) *fallback = false;
  return num / den;
}

struct RegressionCore {
  std::vector<double> r_max;
  std::vector<double> w;
  std::vector<double> k_x;  // healthy-radius kernel table
};

RegressionCore regression_core(const RadiusProfile& p, const RegressionParams& params,
                               bool parallel) {
  const std::size_t n = p.size();
  const std::vector<double>& r = p.radius;
  RegressionCore core;
  core.r_max.resize(n);
  const std::vector<double> k_max = kernel_table(n, params.sigma_max);

#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    core.r_max[static_cast<std::size_t>(i)] =
        smoothed_at(static_cast<std::size_t>(i), r, k_max) + params.kappa;
  }

  core.w.resize(n);
  const double inv_r = 1.0 / (2.0 * params.sigma_r * params.sigma_r);
  const double norm = 1.0 / (params.sigma_r * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t i = 0; i < n; ++i) {
    const double d = r[i] - core.r_max[i];
    core.w[i] = norm * std::exp(-d * d * inv_r);
  }

  core.k_x = kernel_table(n, params.sigma_x);
  return core;
}

RegressionIntermediates healthy_radius_impl(const RadiusProfile& p,
                                            const RegressionParams& params, bool parallel) {
  p.validate();
  if (!(params.sigma_x > 0.0) || !(params.sigma_max > 0.0) || !(params.sigma_r > 0.0))
    throw InvalidInput("regression kernel widths must be positive");

  const std::size_t n = p.size();
  RegressionCore core = regression_core(p, params, parallel);

  RegressionIntermediates out;
  out.r_max = std::move(core.r_max);
  out.w = std::move(core.w);
  out.r_h.resize(n);
  std::vector<unsigned char> fell(n, 0);

#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    bool fb = false;
    out.r_h[static_cast<std::size_t>(i)] =
        healthy_at(static_cast<std::size_t>(i), p.radius, out.w, core.k_x, &fb);
    fell[static_cast<std::size_t>(i)] = fb ? 1 : 0;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (fell[i]) out.fallback_points.push_back(i);
  return out;
}

double loss_impl(const RadiusProfile& p, const RegressionParams& params,
                 const std::vector<std::size_t>& peaks) {
  if (peaks.empty()) throw InvalidInput("regression loss needs at least one support point");
  RegressionCore core = regression_core(p, params, false);
  double sum = 0.0;
  for (std::size_t idx : peaks) {
    if (idx >= p.size()) throw InvalidInput("peak index out of range");
    const double rh = healthy_at(idx, p.radius, core.w, core.k_x, nullptr);
    const double e = rh - p.radius[idx];
    sum += e * e;
  }
  return sum / static_cast<double>(peaks.size());
}

std::vector<double> log_uniform_axis(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int k = 0; k < n; ++k) {
    const double t = n == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n - 1);
    v[static_cast<std::size_t>(k)] = std::exp(llo + t * (lhi - llo));
  }
  return v;
}

OptimizeResult optimize_impl(const RadiusProfile& p, const ParameterBounds& bounds, int grid_n,
                             bool parallel) {
  p.validate();
  if (grid_n < 1) throw InvalidInput("grid resolution must be at least 1");
  if (!(bounds.sigma_x_lo > 0.0 && bounds.sigma_x_lo <= bounds.sigma_x_hi) ||
      !(bounds.sigma_max_lo > 0.0 && bounds.sigma_max_lo <= bounds.sigma_max_hi) ||
      !(bounds.sigma_r_lo > 0.0 && bounds.sigma_r_lo <= bounds.sigma_r_hi))
    throw InvalidInput("parameter bounds must be positive and ordered");

  OptimizeResult out;
  const double kappa = compute_kappa(p);
  const PeakDetection peaks = detect_peaks(p);
  out.peaks_endpoint_fallback = peaks.endpoint_fallback;
  if (peaks.endpoint_fallback) out.flags.push_back("peaks: no local maxima, endpoints used");

  const std::vector<double> ax = log_uniform_axis(bounds.sigma_x_lo, bounds.sigma_x_hi, grid_n);
  const std::vector<double> amax =
      log_uniform_axis(bounds.sigma_max_lo, bounds.sigma_max_hi, grid_n);
  const std::vector<double> ar = log_uniform_axis(bounds.sigma_r_lo, bounds.sigma_r_hi, grid_n);

  // Losses for every cell, then a serial scan in lexicographic order. The
  // first strict improvement wins, so ties resolve to the smallest
  // (sigma_x, sigma_max, sigma_r) regardless of the evaluation schedule.
  const std::size_t cells = static_cast<std::size_t>(grid_n) * grid_n * grid_n;
  std::vector<double> losses(cells);
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(cells); ++c) {
    const std::size_t cc = static_cast<std::size_t>(c);
    const std::size_t ix = cc / (static_cast<std::size_t>(grid_n) * grid_n);
    const std::size_t im = (cc / grid_n) % grid_n;
    const std::size_t ir = cc % grid_n;
    losses[cc] = loss_impl(p, {ax[ix], amax[im], ar[ir], kappa}, peaks.indices);
  }

  std::size_t best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cells; ++c) {
    if (std::isfinite(losses[c]) && losses[c] < best_loss) {
      best_loss = losses[c];
      best = c;
    }
  }
  if (!std::isfinite(best_loss)) throw Error("no finite loss on the parameter grid");
  const std::size_t bx = best / (static_cast<std::size_t>(grid_n) * grid_n);
  const std::size_t bm = (best / grid_n) % grid_n;
  const std::size_t br = best % grid_n;
  RegressionParams grid_params{ax[bx], amax[bm], ar[br], kappa};
  out.grid_loss = best_loss;
  out.params = grid_params;
  out.loss = best_loss;

  bool non_finite = false;
  Objective f = [&](const std::vector<double>& x) {
    const double v = loss_impl(p, {x[0], x[1], x[2], kappa}, peaks.indices);
    if (!std::isfinite(v)) {
      non_finite = true;
      return std::numeric_limits<double>::infinity();
    }
    return v;
  };
  const std::vector<double> lower{bounds.sigma_x_lo, bounds.sigma_max_lo, bounds.sigma_r_lo};
  const std::vector<double> upper{bounds.sigma_x_hi, bounds.sigma_max_hi, bounds.sigma_r_hi};
  const std::vector<double> steps{1e-3 * (upper[0] - lower[0]), 1e-3 * (upper[1] - lower[1]),
                                  1e-3 * (upper[2] - lower[2])};
  const std::vector<double> x0{grid_params.sigma_x, grid_params.sigma_max, grid_params.sigma_r};

  const LbfgsbResult res =
      lbfgsb_minimize(f, numerical_gradient(f, lower, upper, steps), x0, lower, upper);
  if (non_finite) {
    out.flags.push_back("refinement: non-finite loss encountered, grid optimum kept");
    return out;
  }
  if (std::isfinite(res.fx) && res.fx < out.grid_loss) {
    out.params = {res.x[0], res.x[1], res.x[2], kappa};
    out.loss = res.fx;
    out.refined = true;
  }
  return out;
}

}  // namespace

void RadiusProfile::validate() const {
  if (abscissa.size() != radius.size())
    throw InvalidInput("profile abscissa and radius lengths differ");
  if (radius.size() < 5) throw InvalidInput("profile needs at least 5 points");
  for (std::size_t i = 0; i < radius.size(); ++i) {
    if (!std::isfinite(radius[i]) || radius[i] <= 0.0)
      throw InvalidInput("profile radii must be positive and finite");
    if (!std::isfinite(abscissa[i])) throw InvalidInput("profile abscissa must be finite");
    if (i > 0 && abscissa[i] <= abscissa[i - 1])
      throw InvalidInput("profile abscissa must be strictly increasing");
  }
}

RadiusProfile resample_uniform(const RadiusProfile& p, double spacing) {
  p.validate();
  if (!(spacing > 0.0)) throw InvalidInput("resampling spacing must be positive");
  const double start = p.abscissa.front();
  const double span = p.abscissa.back() - start;
  const std::size_t count = static_cast<std::size_t>(std::floor(span / spacing + 1e-9)) + 1;

  RadiusProfile out;
  out.abscissa.resize(count);
  out.radius.resize(count);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double s = start + static_cast<double>(k) * spacing;
    while (seg + 2 < p.abscissa.size() && p.abscissa[seg + 1] < s) ++seg;
    const double s0 = p.abscissa[seg], s1 = p.abscissa[seg + 1];
    const double t = std::clamp((s - s0) / (s1 - s0), 0.0, 1.0);
    out.abscissa[k] = s;
    out.radius[k] = p.radius[seg] + t * (p.radius[seg + 1] - p.radius[seg]);
  }
  if (out.size() < 5) throw InvalidInput("profile too short for the resampling spacing");
  return out;
}

std::vector<std::size_t> find_local_maxima(const std::vector<double>& s) {
  std::vector<std::size_t> peaks;
  const std::size_t n = s.size();
  std::size_t i = 1;
  while (n >= 3 && i + 1 < n) {
    if (s[i] > s[i - 1]) {
      // Plateau scan: the run keeps its leftmost index.
      std::size_t j = i;
      while (j + 1 < n && s[j + 1] == s[i]) ++j;
      if (j + 1 < n && s[j + 1] < s[i]) {
        peaks.push_back(i);
        i = j + 1;
        continue;
      }
      i = j + 1;
      continue;
    }
    ++i;
  }
  return peaks;
}

double peak_prominence(const std::vector<double>& s, std::size_t peak) {
  if (peak >= s.size()) throw InvalidInput("peak index out of range");
  const double h = s[peak];
  double left = h;
  for (std::size_t i = peak; i-- > 0;) {
    if (s[i] > h) break;
    left = std::min(left, s[i]);
  }
  double right = h;
  for (std::size_t i = peak + 1; i < s.size(); ++i) {
    if (s[i] > h) break;
    right = std::min(right, s[i]);
  }
  return h - std::max(left, right);
}

double compute_kappa(const RadiusProfile& p) {
  p.validate();
  const auto [lo, hi] = std::minmax_element(p.radius.begin(), p.radius.end());
  const double range = *hi - *lo;

  std::vector<double> inverted(p.radius.size());
  std::transform(p.radius.begin(), p.radius.end(), inverted.begin(), [](double r) { return -r; });
  const std::vector<std::size_t> dips = find_local_maxima(inverted);
  if (dips.empty()) return range / 2.0;

  double max_prom = 0.0;
  for (std::size_t d : dips) max_prom = std::max(max_prom, peak_prominence(inverted, d));
  return (max_prom + range) / 2.0;
}

PeakDetection detect_peaks(const RadiusProfile& p) {
  p.validate();
  PeakDetection out;
  const std::vector<std::size_t> raw = find_local_maxima(p.radius);
  if (raw.empty()) {
    out.indices = {0, p.size() - 1};
    out.endpoint_fallback = true;
    return out;
  }

  const double mean_r = std::accumulate(p.radius.begin(), p.radius.end(), 0.0) /
                        static_cast<double>(p.size());
  const double min_sep = 2.5 * 2.0 * mean_r;

  // Greedy thinning, tallest first; equal heights keep the leftmost.
  std::vector<std::size_t> order = raw;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return p.radius[a] > p.radius[b];
  });
  std::vector<std::size_t> kept;
  for (std::size_t cand : order) {
    const bool clear = std::none_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return std::abs(p.abscissa[cand] - p.abscissa[k]) < min_sep;
    });
    if (clear) kept.push_back(cand);
  }

  double max_prom = 0.0;
  std::vector<double> proms(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    proms[i] = peak_prominence(p.radius, kept[i]);
    max_prom = std::max(max_prom, proms[i]);
  }
  for (std::size_t i = 0; i < kept.size(); ++i)
    if (proms[i] >= 0.25 * max_prom) out.indices.push_back(kept[i]);
  std::sort(out.indices.begin(), out.indices.end());
  return out;
}

RegressionIntermediates healthy_radius(const RadiusProfile& p, const RegressionParams& params) {
  return healthy_radius_impl(p, params, true);
}

namespace serial {
RegressionIntermediates healthy_radius(const RadiusProfile& p, const RegressionParams& params) {
  return healthy_radius_impl(p, params, false);
}
}  // namespace serial

std::vector<double> stenosis_degree(const RadiusProfile& p, const std::vector<double>& r_h) {
  if (r_h.size() != p.size()) throw InvalidInput("healthy radius length differs from profile");
  std::vector<double> sd(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(r_h[i]) || r_h[i] <= 0.0)
      throw InvalidInput("healthy radius must be positive and finite");
    sd[i] = 1.0 - p.radius[i] / r_h[i];
  }
  return sd;
}

double regression_loss(const RadiusProfile& p, const RegressionParams& params,
                       const std::vector<std::size_t>& peaks) {
  p.validate();
  return loss_impl(p, params, peaks);
}

OptimizeResult optimize_params(const RadiusProfile& p, const ParameterBounds& bounds, int grid_n) {
  return optimize_impl(p, bounds, grid_n, true);
}

namespace serial {
OptimizeResult optimize_params(const RadiusProfile& p, const ParameterBounds& bounds, int grid_n) {
  return optimize_impl(p, bounds, grid_n, false);
}
}  // namespace serial

std::vector<LesionInterval> detect_lesions(const std::vector<double>& sd, const RadiusProfile& p,
                                           const LesionFilterConfig& cfg) {
  if (sd.size() != p.size()) throw InvalidInput("stenosis degree length differs from profile");
  const std::size_t n = sd.size();

  std::vector<LesionInterval> runs;
  std::size_t i = 0;
  while (i < n) {
    if (sd[i] > cfg.sd_core) {
      std::size_t j = i;
      while (j + 1 < n && sd[j + 1] > cfg.sd_core) ++j;
      LesionInterval iv{i, j};
      while (iv.start_idx > 0 && sd[iv.start_idx - 1] > cfg.sd_extend) --iv.start_idx;
      while (iv.end_idx + 1 < n && sd[iv.end_idx + 1] > cfg.sd_extend) ++iv.end_idx;
      runs.push_back(iv);
      i = j + 1;
    } else {
      ++i;
    }
  }

  std::vector<LesionInterval> merged;
  for (const LesionInterval& iv : runs) {
    if (!merged.empty() && iv.start_idx <= merged.back().end_idx + 1)
      merged.back().end_idx = std::max(merged.back().end_idx, iv.end_idx);
    else
      merged.push_back(iv);
  }

  std::vector<LesionInterval> out;
  for (const LesionInterval& iv : merged) {
    std::size_t peak = iv.start_idx;
    for (std::size_t k = iv.start_idx; k <= iv.end_idx; ++k)
      if (sd[k] > sd[peak]) peak = k;
    double mean_r = 0.0;
    for (std::size_t k = iv.start_idx; k <= iv.end_idx; ++k) mean_r += p.radius[k];
    mean_r /= static_cast<double>(iv.end_idx - iv.start_idx + 1);
    const double margin = cfg.boundary_diameters * 2.0 * mean_r;
    if (p.abscissa[peak] - p.abscissa.front() < margin) continue;
    if (p.abscissa.back() - p.abscissa[peak] < margin) continue;
    if (p.abscissa[iv.end_idx] - p.abscissa[iv.start_idx] < cfg.min_length_mm) continue;
    out.push_back(iv);
  }
  return out;
}

Lesion lesion_morphometrics(const LesionInterval& interval, const RadiusProfile& p,
                            const std::vector<double>& sd, const Centerline& centerline) {
  if (interval.end_idx >= p.size() || interval.start_idx > interval.end_idx)
    throw InvalidInput("lesion interval out of range");
  if (sd.size() != p.size()) throw InvalidInput("stenosis degree length differs from profile");

  Lesion les;
  les.start_mm = p.abscissa[interval.start_idx];
  les.end_mm = p.abscissa[interval.end_idx];
  les.length_mm = les.end_mm - les.start_mm;

  std::size_t peak = interval.start_idx;
  double min_r = p.radius[interval.start_idx];
  for (std::size_t k = interval.start_idx; k <= interval.end_idx; ++k) {
    if (sd[k] > sd[peak]) peak = k;
    min_r = std::min(min_r, p.radius[k]);
  }
  les.max_sd = sd[peak];
  les.mla_mm2 = std::numbers::pi * min_r * min_r;
  les.dist_ostium_mm = p.abscissa[peak];

  const Vec3 a = centerline.position_at(les.start_mm);
  const Vec3 b = centerline.position_at(les.end_mm);
  les.tortuosity = les.length_mm > 0.0 ? (b - a).norm() / les.length_mm : 1.0;
  return les;
}

}  // namespace corsa
