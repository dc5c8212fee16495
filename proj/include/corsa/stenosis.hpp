#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "corsa/common.hpp"
#include "corsa/geometry.hpp"

namespace corsa {

// Radius samples along one vessel. `abscissa` keeps the absolute
// curvilinear coordinate so analysis intervals that start past the ostium
// still report ostium-referenced distances.
struct RadiusProfile {
  std::vector<double> abscissa;
  std::vector<double> radius;

  std::size_t size() const { return radius.size(); }
  void validate() const;
};

// Linear resampling onto a uniform abscissa grid. The regression kernels
// act in point-index space, so a fixed 0.5 mm spacing gives the kernel
// widths a consistent physical meaning across vessels.
RadiusProfile resample_uniform(const RadiusProfile& p, double spacing = 0.5);

struct RegressionParams {
  double sigma_x = 10.4;    // index-space width of the healthy-radius kernel
  double sigma_max = 21.5;  // index-space width of the reference smoothing
  double sigma_r = 0.296;   // mm, radius-space width of the weights
  double kappa = 0.0;       // mm, additive correction of the reference radius
};

struct ParameterBounds {
  double sigma_x_lo = 10.0, sigma_x_hi = 17.5;
  double sigma_max_lo = 3.67, sigma_max_hi = 50.0;
  double sigma_r_lo = 0.25, sigma_r_hi = 0.556;
};

struct RegressionIntermediates {
  std::vector<double> r_max;  // smoothed radius + kappa
  std::vector<double> w;      // per-point weights
  std::vector<double> r_h;    // estimated healthy radius
  std::vector<std::size_t> fallback_points;  // weight underflow, unweighted fallback
};

// Additive correction: mean of the deepest dip prominence (peaks of the
// inverted radius signal) and the radius range, halved.
double compute_kappa(const RadiusProfile& p);

struct PeakDetection {
  std::vector<std::size_t> indices;
  bool endpoint_fallback = false;  // no local maxima; endpoints returned instead
};

// Local maxima of the radius, thinned to a minimum abscissa separation of
// 2.5 mean diameters (higher peak wins) and to prominences of at least
// 25% of the maximum.
PeakDetection detect_peaks(const RadiusProfile& p);

// Robust weighted Gaussian kernel regression of the healthy radius.
RegressionIntermediates healthy_radius(const RadiusProfile& p, const RegressionParams& params);
namespace serial {
RegressionIntermediates healthy_radius(const RadiusProfile& p, const RegressionParams& params);
}

// SD_i = 1 - r_i / r_h_i.
std::vector<double> stenosis_degree(const RadiusProfile& p, const std::vector<double>& r_h);

// MSE between estimated healthy radius and observed radius at the peak
// support points.
double regression_loss(const RadiusProfile& p, const RegressionParams& params,
                       const std::vector<std::size_t>& peaks);

struct OptimizeResult {
  RegressionParams params;
  double loss = 0.0;
  double grid_loss = 0.0;
  bool refined = false;  // refinement produced the returned parameters
  bool peaks_endpoint_fallback = false;
  Flags flags;
};

// Two-stage fit of the kernel widths: exhaustive log-uniform grid over the
// bounds followed by bound-constrained quasi-Newton refinement with
// central-difference gradients. kappa is held fixed at compute_kappa(p).
OptimizeResult optimize_params(const RadiusProfile& p, const ParameterBounds& bounds = {},
                               int grid_n = 8);
namespace serial {
OptimizeResult optimize_params(const RadiusProfile& p, const ParameterBounds& bounds = {},
                               int grid_n = 8);
}

struct LesionInterval {
  std::size_t start_idx = 0;
  std::size_t end_idx = 0;  // inclusive
};

struct LesionFilterConfig {
  double sd_core = 0.20;          // run threshold
  double sd_extend = 0.10;        // extension threshold
  double boundary_diameters = 2.5;  // ostial / distal exclusion, in local mean diameters
  double min_length_mm = 2.0;
};

// Runs of SD above the core threshold, extended while SD stays above the
// extension threshold, merged, then filtered against the ostial, distal
// and minimum-length rules.
std::vector<LesionInterval> detect_lesions(const std::vector<double>& sd,
                                           const RadiusProfile& p,
                                           const LesionFilterConfig& cfg = {});

struct Lesion {
  int id = 0;
  BranchLabel branch = BranchLabel::UNCLASSIFIED;
  double start_mm = 0.0;
  double end_mm = 0.0;
  double max_sd = 0.0;
  double length_mm = 0.0;
  double mla_mm2 = 0.0;
  double dist_ostium_mm = 0.0;
  double tortuosity = 1.0;
};

Lesion lesion_morphometrics(const LesionInterval& interval, const RadiusProfile& p,
                            const std::vector<double>& sd, const Centerline& centerline);

// Shared 1-D peak helpers (plateau peaks take their leftmost index).
std::vector<std::size_t> find_local_maxima(const std::vector<double>& s);
double peak_prominence(const std::vector<double>& s, std::size_t peak);

}  // namespace corsa
