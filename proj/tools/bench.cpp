#include <chrono>
#include <cmath>
#include <cstdio>

#include "corsa/pcat.hpp"
#include "corsa/phantom.hpp"
#include "corsa/stenosis.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int report(const char* name, std::size_t n, double ts, double tp, bool identical) {
  std::printf("%-16s n=%-8zu serial %8.4fs parallel %8.4fs speedup %5.2fx identical %s\n", name, n,
              ts, tp, ts / tp, identical ? "yes" : "no");
  return identical ? 0 : 1;
}

int bench_healthy_radius() {
  corsa::RadiusProfile p;
  const std::size_t n = 600;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = 0.5 * static_cast<double>(i);
    p.abscissa.push_back(s);
    p.radius.push_back(2.0 - 0.003 * s + 0.15 * std::sin(s / 7.0));
  }
  const corsa::RegressionParams params;

  auto t0 = Clock::now();
  const auto serial = corsa::serial::healthy_radius(p, params);
  const double ts = seconds_since(t0);

  t0 = Clock::now();
  const auto parallel = corsa::healthy_radius(p, params);
  const double tp = seconds_since(t0);

  return report("healthy_radius", n, ts, tp, serial.r_h == parallel.r_h);
}

int bench_optimize_params() {
  corsa::VesselSpec spec;
  spec.length_mm = 120.0;
  spec.lesions = {{45.0, 0.45, 9.0, corsa::LesionShape::gaussian},
                  {85.0, 0.30, 7.0, corsa::LesionShape::cosine}};
  const corsa::RadiusProfile p = corsa::gen_radius_profile(spec).profile;

  auto t0 = Clock::now();
  const auto serial = corsa::serial::optimize_params(p);
  const double ts = seconds_since(t0);

  t0 = Clock::now();
  const auto parallel = corsa::optimize_params(p);
  const double tp = seconds_since(t0);

  const bool identical = serial.params.sigma_x == parallel.params.sigma_x &&
                         serial.params.sigma_max == parallel.params.sigma_max &&
                         serial.params.sigma_r == parallel.params.sigma_r &&
                         serial.loss == parallel.loss;
  return report("optimize_params", p.size(), ts, tp, identical);
}

int bench_rasterize_tube() {
  corsa::TubeROI roi;
  const std::size_t pts = 101;
  for (std::size_t i = 0; i < pts; ++i) {
    const double s = 0.4 * static_cast<double>(i);
    roi.points.push_back({s, 4.0 * std::sin(s / 11.0), 1.5 * std::cos(s / 17.0)});
    roi.outer_radius.push_back(6.0 + 0.5 * std::sin(s / 5.0));
    roi.lumen_radius.push_back(2.0);
  }
  roi.end_abscissa = 40.0;

  corsa::VolumeSpec spec;
  spec.spacing = {0.25, 0.25, 0.25};
  spec.seed = 11;
  const corsa::VolumePhantom ph = corsa::gen_pcat_volume(spec, roi);

  auto t0 = Clock::now();
  const auto serial = corsa::serial::rasterize_tube(roi, ph.volume, ph.lumen);
  const double ts = seconds_since(t0);

  t0 = Clock::now();
  const auto parallel = corsa::rasterize_tube(roi, ph.volume, ph.lumen);
  const double tp = seconds_since(t0);

  return report("rasterize_tube", ph.volume.data.size(), ts, tp,
                serial.mask.data == parallel.mask.data);
}

}  // namespace

int main() {
  int failures = 0;
  failures += bench_healthy_radius();
  failures += bench_optimize_params();
  failures += bench_rasterize_tube();
  return failures;
}
