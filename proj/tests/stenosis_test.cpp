#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "corsa/rng.hpp"
#include "corsa/stenosis.hpp"
#include "oracles.hpp"

using namespace corsa;

namespace {

RadiusProfile make_profile(std::vector<double> radius, double spacing = 1.0) {
  RadiusProfile p;
  for (std::size_t i = 0; i < radius.size(); ++i)
    p.abscissa.push_back(spacing * static_cast<double>(i));
  p.radius = std::move(radius);
  return p;
}

RadiusProfile random_profile(Rng& rng, std::size_t n) {
  std::vector<double> r(n);
  for (double& v : r) v = rng.uniform(0.8, 3.2);
  return make_profile(std::move(r), 0.5);
}

// Smooth tapering baseline with multiplicative dips.
struct Dip {
  double center, depth, width;
};

RadiusProfile dipped_profile(double length, double spacing, double r0, double taper,
                             const std::vector<Dip>& dips) {
  RadiusProfile p;
  for (double s = 0.0; s <= length + 1e-9; s += spacing) {
    double r = r0 - taper * s;
    for (const Dip& d : dips) {
      const double sigma = d.width / 6.0;
      r *= 1.0 - d.depth * std::exp(-(s - d.center) * (s - d.center) / (2.0 * sigma * sigma));
    }
    p.abscissa.push_back(s);
    p.radius.push_back(r);
  }
  return p;
}

}  // namespace

TEST_CASE("profile validation") {
  CHECK_THROWS_AS(make_profile({1, 2, 1, 2}).validate(), InvalidInput);  // too short
  CHECK_THROWS_AS(make_profile({1, 2, -1, 2, 1}).validate(), InvalidInput);
  RadiusProfile bad = make_profile({1, 1, 1, 1, 1});
  bad.abscissa[3] = bad.abscissa[2];
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  CHECK_NOTHROW(make_profile({1, 2, 1, 2, 1}).validate());
}

TEST_CASE("uniform resampling hits the grid and interpolates linearly") {
  RadiusProfile p;
  p.abscissa = {0.0, 1.0, 3.0, 4.0, 6.0};
  p.radius = {2.0, 2.0, 4.0, 4.0, 1.0};
  const RadiusProfile u = resample_uniform(p, 0.5);
  REQUIRE(u.size() == 13);
  CHECK(u.abscissa.front() == 0.0);
  CHECK(u.abscissa.back() == doctest::Approx(6.0));
  CHECK(u.radius[0] == doctest::Approx(2.0));
  CHECK(u.radius[4] == doctest::Approx(3.0));   // s = 2, halfway up the ramp
  CHECK(u.radius[12] == doctest::Approx(1.0));
  for (std::size_t i = 1; i < u.size(); ++i)
    CHECK(u.abscissa[i] - u.abscissa[i - 1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("resampling preserves the start offset of partial profiles") {
  RadiusProfile p;
  p.abscissa = {10.0, 12.0, 14.0, 16.0, 18.0, 20.0};
  p.radius = {2, 2, 2, 2, 2, 2};
  const RadiusProfile u = resample_uniform(p, 0.5);
  CHECK(u.abscissa.front() == 10.0);
  CHECK(u.abscissa.back() == doctest::Approx(20.0));
}

TEST_CASE("kappa of a constant profile is zero") {
  CHECK(compute_kappa(make_profile({2, 2, 2, 2, 2, 2})) == 0.0);
}

TEST_CASE("kappa of a single dip averages prominence and range") {
  CHECK(compute_kappa(make_profile({2, 2, 2, 1, 2, 2, 2})) == doctest::Approx(1.0));
}

TEST_CASE("monotone profile has no interior dip") {
  // No local maximum of -r; kappa falls back to half the range.
  CHECK(compute_kappa(make_profile({3.0, 2.5, 2.0, 1.5, 1.0})) == doctest::Approx(1.0));
}

TEST_CASE("kappa matches the exhaustive prominence oracle on random profiles") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const RadiusProfile p = random_profile(rng, 20 + trial);
    std::vector<double> inverted(p.radius.size());
    std::transform(p.radius.begin(), p.radius.end(), inverted.begin(),
                   [](double r) { return -r; });
    const auto dips = oracle::maxima_by_scan(inverted);
    const double range = *std::max_element(p.radius.begin(), p.radius.end()) -
                         *std::min_element(p.radius.begin(), p.radius.end());
    double expected;
    if (dips.empty()) {
      expected = range / 2.0;
    } else {
      double max_prom = 0.0;
      for (std::size_t d : dips)
        max_prom = std::max(max_prom, oracle::prominence_by_definition(inverted, d));
      expected = (max_prom + range) / 2.0;
    }
    CHECK(compute_kappa(p) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("plateau peaks report their leftmost index") {
  const std::vector<double> s{0, 1, 2, 2, 2, 1, 0};
  const auto peaks = find_local_maxima(s);
  REQUIRE(peaks.size() == 1);
  CHECK(peaks[0] == 2);
  CHECK(peak_prominence(s, 2) == doctest::Approx(2.0));
}

TEST_CASE("monotone profiles fall back to endpoint support") {
  const auto det = detect_peaks(make_profile({3.0, 2.5, 2.0, 1.5, 1.0}));
  CHECK(det.endpoint_fallback);
  CHECK(det.indices == std::vector<std::size_t>{0, 4});
}

TEST_CASE("close peaks are thinned by the separation rule") {
  // Mean radius 1.5 mm -> minimum separation 7.5 mm; two peaks 1 mm apart.
  RadiusProfile p;
  const double step = 0.5;
  for (int i = 0; i <= 40; ++i) {
    const double s = step * i;
    double r = 1.5;
    if (i == 20) r = 1.58;  // taller peak at 10 mm
    if (i == 22) r = 1.56;  // smaller peak at 11 mm
    if (i == 21) r = 1.45;  // valley between them
    p.abscissa.push_back(s);
    p.radius.push_back(r);
  }
  // Keep the mean at 1.5 by construction error margin; peaks dominate.
  const auto det = detect_peaks(p);
  CHECK_FALSE(det.endpoint_fallback);
  REQUIRE(det.indices.size() == 1);
  CHECK(det.indices[0] == 20);
}

TEST_CASE("low-prominence peaks are dropped") {
  RadiusProfile p;
  for (int i = 0; i <= 200; ++i) {
    const double s = 0.25 * i;
    double r = 2.0;
    r += 1.0 * std::exp(-std::pow(s - 10.0, 2) / 2.0);
    r += 0.1 * std::exp(-std::pow(s - 40.0, 2) / 2.0);
    p.abscissa.push_back(s);
    p.radius.push_back(r);
  }
  const auto det = detect_peaks(p);
  REQUIRE(det.indices.size() == 1);
  CHECK(p.abscissa[det.indices[0]] == doctest::Approx(10.0).epsilon(0.03));
}

TEST_CASE("peak detection agrees with the greedy oracle on random profiles") {
  Rng rng(7321);
  for (int trial = 0; trial < 200; ++trial) {
    const RadiusProfile p = random_profile(rng, 30 + (trial % 60));
    const auto det = detect_peaks(p);
    const auto expected = oracle::peaks_by_greedy(p.abscissa, p.radius);
    if (expected.empty()) {
      CHECK(det.endpoint_fallback);
    } else {
      CHECK(det.indices == expected);
    }
  }
}

TEST_CASE("constant profile is a regression fixed point") {
  const RadiusProfile p = make_profile({2, 2, 2, 2, 2, 2, 2, 2});
  const auto reg = healthy_radius(p, {3.0, 5.0, 0.4, 0.0});
  const auto sd = stenosis_degree(p, reg.r_h);
  for (double v : sd) CHECK(std::abs(v) < 1e-12);
  CHECK(reg.fallback_points.empty());
}

TEST_CASE("five-point worked example matches the naive double loop") {
  const RadiusProfile p = make_profile({2, 2, 1, 2, 2});
  const double kappa = compute_kappa(p);
  const auto reg = healthy_radius(p, {1.0, 2.0, 0.3, kappa});
  const auto naive = oracle::naive_healthy_radius(p.radius, 1.0, 2.0, 0.3, kappa);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(reg.r_max[i] == doctest::Approx(naive.r_max[i]).epsilon(1e-12));
    CHECK(reg.w[i] == doctest::Approx(naive.w[i]).epsilon(1e-12));
    CHECK(reg.r_h[i] == doctest::Approx(naive.r_h[i]).epsilon(1e-12));
  }
}

TEST_CASE("regression matches the naive oracle on random profiles") {
  Rng rng(5150);
  for (int trial = 0; trial < 20; ++trial) {
    const RadiusProfile p = random_profile(rng, 50 + 7 * trial);
    const RegressionParams params{rng.uniform(2.0, 15.0), rng.uniform(2.0, 30.0),
                                  rng.uniform(0.2, 0.6), rng.uniform(0.0, 0.5)};
    const auto reg = healthy_radius(p, params);
    const auto naive = oracle::naive_healthy_radius(p.radius, params.sigma_x, params.sigma_max,
                                                    params.sigma_r, params.kappa);
    for (std::size_t i = 0; i < p.size(); ++i)
      CHECK(reg.r_h[i] == doctest::Approx(naive.r_h[i]).epsilon(1e-12));
  }
}

TEST_CASE("healthy radius stays within the observed radius range") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const RadiusProfile p = random_profile(rng, 80);
    const auto reg = healthy_radius(p, {10.4, 21.5, 0.296, compute_kappa(p)});
    const double lo = *std::min_element(p.radius.begin(), p.radius.end());
    const double hi = *std::max_element(p.radius.begin(), p.radius.end());
    for (double v : reg.r_h) {
      CHECK(v >= lo - 1e-9);
      CHECK(v <= hi + 1e-9);
    }
  }
}

TEST_CASE("serial and parallel regression agree bitwise") {
  Rng rng(314);
  const RadiusProfile p = random_profile(rng, 217);
  const RegressionParams params{10.4, 21.5, 0.296, compute_kappa(p)};
  const auto a = healthy_radius(p, params);
  const auto b = serial::healthy_radius(p, params);
  CHECK(a.r_max == b.r_max);
  CHECK(a.w == b.w);
  CHECK(a.r_h == b.r_h);
  CHECK(a.fallback_points == b.fallback_points);
}

TEST_CASE("scale equivariance of the regression") {
  Rng rng(12);
  const RadiusProfile p = random_profile(rng, 90);
  const double s = 3.7;
  RadiusProfile q = p;
  for (double& r : q.radius) r *= s;
  const double kappa = compute_kappa(p);
  const auto a = healthy_radius(p, {10.4, 21.5, 0.296, kappa});
  const auto b = healthy_radius(q, {10.4, 21.5, 0.296 * s, kappa * s});
  const auto sd_a = stenosis_degree(p, a.r_h);
  const auto sd_b = stenosis_degree(q, b.r_h);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(b.r_h[i] == doctest::Approx(s * a.r_h[i]).epsilon(1e-12));
    CHECK(sd_b[i] == doctest::Approx(sd_a[i]).epsilon(1e-11));
  }
}

TEST_CASE("weight underflow falls back to unweighted smoothing") {
  // sigma_r far below the radius variation underflows every weight.
  std::vector<double> r;
  for (int i = 0; i < 40; ++i) r.push_back(i % 2 ? 3.0 : 1.0);
  const RadiusProfile p = make_profile(std::move(r));
  const auto reg = healthy_radius(p, {3.0, 5.0, 1e-4, 0.0});
  CHECK(reg.fallback_points.size() == p.size());
  for (double v : reg.r_h) CHECK(std::isfinite(v));
}

TEST_CASE("stenosis degree substitutions") {
  const RadiusProfile p = make_profile({1, 1, 1, 1, 1});
  CHECK(stenosis_degree(p, {2, 2, 2, 2, 2}) == std::vector<double>{0.5, 0.5, 0.5, 0.5, 0.5});
  CHECK(stenosis_degree(p, {1, 1, 1, 1, 1}) == std::vector<double>{0, 0, 0, 0, 0});
  CHECK_THROWS_AS(stenosis_degree(p, {1, 1, 1, 1}), InvalidInput);
  CHECK_THROWS_AS(stenosis_degree(p, {1, 1, 0, 1, 1}), InvalidInput);
}

TEST_CASE("regression loss equals its naive recomputation") {
  Rng rng(808);
  const RadiusProfile p = random_profile(rng, 60);
  const RegressionParams params{8.0, 12.0, 0.4, 0.1};
  const auto peaks = detect_peaks(p);
  const double loss = regression_loss(p, params, peaks.indices);
  const auto naive = oracle::naive_healthy_radius(p.radius, params.sigma_x, params.sigma_max,
                                                  params.sigma_r, params.kappa);
  double expected = 0.0;
  for (std::size_t idx : peaks.indices) {
    const double e = naive.r_h[idx] - p.radius[idx];
    expected += e * e;
  }
  expected /= static_cast<double>(peaks.indices.size());
  CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(regression_loss(p, params, {}), InvalidInput);
}

TEST_CASE("healthy phantom optimizes to near-zero loss") {
  const RadiusProfile p = dipped_profile(80.0, 0.5, 2.2, 0.0, {});
  const auto res = optimize_params(p);
  CHECK(res.peaks_endpoint_fallback);
  CHECK(res.loss < 1e-6);
  CHECK(res.params.sigma_x >= 10.0);
  CHECK(res.params.sigma_x <= 17.5);
  CHECK(res.params.sigma_max >= 3.67);
  CHECK(res.params.sigma_max <= 50.0);
  CHECK(res.params.sigma_r >= 0.25);
  CHECK(res.params.sigma_r <= 0.556);
}

TEST_CASE("optimization is deterministic and refinement never hurts") {
  const RadiusProfile p = dipped_profile(90.0, 0.5, 2.0, 0.002, {{45.0, 0.5, 10.0}});
  const auto a = optimize_params(p);
  const auto b = optimize_params(p);
  CHECK(a.params.sigma_x == b.params.sigma_x);
  CHECK(a.params.sigma_max == b.params.sigma_max);
  CHECK(a.params.sigma_r == b.params.sigma_r);
  CHECK(a.loss == b.loss);
  CHECK(a.loss <= a.grid_loss);
}

TEST_CASE("serial and parallel optimization agree bitwise") {
  const RadiusProfile p = dipped_profile(90.0, 0.5, 2.0, 0.002, {{40.0, 0.4, 9.0}});
  const auto a = optimize_params(p);
  const auto b = serial::optimize_params(p);
  CHECK(a.params.sigma_x == b.params.sigma_x);
  CHECK(a.params.sigma_max == b.params.sigma_max);
  CHECK(a.params.sigma_r == b.params.sigma_r);
  CHECK(a.loss == b.loss);
}

TEST_CASE("two-dip phantom recovers the baseline") {
  const double r0 = 2.1, taper = 0.003;
  const RadiusProfile p =
      dipped_profile(120.0, 0.5, r0, taper, {{40.0, 0.45, 9.0}, {80.0, 0.35, 8.0}});
  const auto res = optimize_params(p);
  const auto reg = healthy_radius(p, res.params);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double baseline = r0 - taper * p.abscissa[i];
    if (std::abs(reg.r_h[i] - baseline) / baseline < 0.05) ++ok;
  }
  CHECK(static_cast<double>(ok) / static_cast<double>(p.size()) >= 0.95);
}

TEST_CASE("no lesions on a flat stenosis profile") {
  const RadiusProfile p = make_profile(std::vector<double>(30, 2.0));
  CHECK(detect_lesions(std::vector<double>(30, 0.0), p).empty());
  CHECK(detect_lesions(std::vector<double>(30, 0.15), p).empty());
}

TEST_CASE("a mid-vessel pulse yields one lesion bounded by the 0.10 crossings") {
  RadiusProfile p;
  std::vector<double> sd;
  const double step = 0.5;
  for (int i = 0; i <= 160; ++i) {
    const double s = step * i;
    p.abscissa.push_back(s);
    p.radius.push_back(1.0);
    sd.push_back(0.30 * std::exp(-std::pow(s - 40.0, 2) / (2.0 * 3.0 * 3.0)));
  }
  const auto lesions = detect_lesions(sd, p);
  REQUIRE(lesions.size() == 1);
  // 0.30 * exp(-d^2/18) = 0.10 at d = sqrt(18 ln 3) ~ 4.446 mm.
  const double d = std::sqrt(18.0 * std::log(3.0));
  CHECK(std::abs(p.abscissa[lesions[0].start_idx] - (40.0 - d)) <= step + 1e-9);
  CHECK(std::abs(p.abscissa[lesions[0].end_idx] - (40.0 + d)) <= step + 1e-9);
}

TEST_CASE("touching extended runs merge") {
  RadiusProfile p;
  std::vector<double> sd;
  for (int i = 0; i <= 200; ++i) {
    const double s = 0.5 * i;
    p.abscissa.push_back(s);
    p.radius.push_back(1.0);
    double v = 0.0;
    if (s >= 40.0 && s <= 44.0) v = 0.3;
    if (s > 44.0 && s < 48.0) v = 0.15;  // bridge above the extension threshold
    if (s >= 48.0 && s <= 52.0) v = 0.3;
    sd.push_back(v);
  }
  const auto lesions = detect_lesions(sd, p);
  REQUIRE(lesions.size() == 1);
  CHECK(p.abscissa[lesions[0].start_idx] == doctest::Approx(40.0));
  CHECK(p.abscissa[lesions[0].end_idx] == doctest::Approx(52.0));
}

TEST_CASE("boundary and length filters drop lesions") {
  const double step = 0.5;
  const auto pulse_case = [&](double center, double half_width) {
    RadiusProfile p;
    std::vector<double> sd;
    for (int i = 0; i <= 200; ++i) {
      const double s = step * i;
      p.abscissa.push_back(s);
      p.radius.push_back(1.0);  // diameter 2 mm -> 5 mm boundary margin
      sd.push_back(0.3 * std::max(0.0, 1.0 - std::abs(s - center) / half_width));
    }
    return std::make_pair(p, sd);
  };

  auto [p1, sd1] = pulse_case(3.0, 2.0);  // peak 3 mm from the ostium end
  CHECK(detect_lesions(sd1, p1).empty());

  auto [p2, sd2] = pulse_case(97.0, 2.0);  // peak 3 mm from the distal end
  CHECK(detect_lesions(sd2, p2).empty());

  auto [p3, sd3] = pulse_case(50.0, 0.7);  // 0.93 mm above the 0.10 line
  CHECK(detect_lesions(sd3, p3).empty());

  auto [p4, sd4] = pulse_case(50.0, 2.0);  // same pulse mid-vessel survives
  CHECK(detect_lesions(sd4, p4).size() == 1);
}

TEST_CASE("detected lesions are disjoint, sorted, and filter-clean") {
  Rng rng(4242);
  for (int trial = 0; trial < 50; ++trial) {
    RadiusProfile p;
    std::vector<double> sd;
    for (int i = 0; i < 160; ++i) {
      p.abscissa.push_back(0.5 * i);
      p.radius.push_back(1.0);
      sd.push_back(rng.uniform(-0.1, 0.35));
    }
    const LesionFilterConfig cfg;
    const auto lesions = detect_lesions(sd, p, cfg);
    for (std::size_t k = 0; k < lesions.size(); ++k) {
      if (k > 0) CHECK(lesions[k].start_idx > lesions[k - 1].end_idx + 1);
      std::size_t peak = lesions[k].start_idx;
      double mean_r = 0.0;
      for (std::size_t i = lesions[k].start_idx; i <= lesions[k].end_idx; ++i) {
        if (sd[i] > sd[peak]) peak = i;
        mean_r += p.radius[i];
      }
      mean_r /= static_cast<double>(lesions[k].end_idx - lesions[k].start_idx + 1);
      CHECK(sd[peak] > cfg.sd_core);
      CHECK(p.abscissa[peak] - p.abscissa.front() >= cfg.boundary_diameters * 2.0 * mean_r);
      CHECK(p.abscissa.back() - p.abscissa[peak] >= cfg.boundary_diameters * 2.0 * mean_r);
      CHECK(p.abscissa[lesions[k].end_idx] - p.abscissa[lesions[k].start_idx] >=
            cfg.min_length_mm);
    }
  }
}

TEST_CASE("morphometrics of a straight lesion") {
  RadiusProfile p;
  std::vector<double> sd;
  std::vector<Vec3> pts;
  for (int i = 0; i <= 100; ++i) {
    const double s = 0.5 * i;
    p.abscissa.push_back(s);
    p.radius.push_back(s >= 20 && s <= 26 ? 1.0 : 2.0);
    sd.push_back(s >= 20 && s <= 26 ? 0.5 : 0.0);
    pts.push_back({0, 0, s});
  }
  const Centerline c = make_centerline(pts, p.radius);
  const LesionInterval iv{40, 52};  // abscissa 20 .. 26
  const Lesion les = lesion_morphometrics(iv, p, sd, c);
  CHECK(les.length_mm == doctest::Approx(6.0));
  CHECK(les.max_sd == doctest::Approx(0.5));
  CHECK(les.mla_mm2 == doctest::Approx(M_PI));
  CHECK(les.dist_ostium_mm == doctest::Approx(20.0));
  CHECK(les.tortuosity == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("semicircular lesions report chord over arc") {
  const double R = 10.0;
  RadiusProfile p;
  std::vector<double> sd;
  std::vector<Vec3> pts;
  const int n = static_cast<int>(std::ceil(M_PI * R / 0.05));
  for (int i = 0; i <= n; ++i) {
    const double theta = M_PI * static_cast<double>(i) / static_cast<double>(n);
    pts.push_back({R * std::sin(theta), 0.0, R * (1.0 - std::cos(theta))});
  }
  const Centerline c = make_centerline(pts, std::vector<double>(pts.size(), 1.0));
  p.abscissa = c.abscissa;
  p.radius = c.radius;
  sd.assign(p.size(), 0.4);
  const LesionInterval iv{0, p.size() - 1};
  const Lesion les = lesion_morphometrics(iv, p, sd, c);
  CHECK(les.tortuosity == doctest::Approx(2.0 / M_PI).epsilon(1e-3));
}
