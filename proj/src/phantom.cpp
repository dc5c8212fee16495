#include "corsa/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>

#include "corsa/rng.hpp"

namespace corsa {

namespace {

double shape_value(const LesionSpec& l, double s) {
  const double d = s - l.center_mm;
  if (l.shape == LesionShape::gaussian) {
    const double sigma = l.width_mm / 6.0;
    return std::exp(-d * d / (2.0 * sigma * sigma));
  }
  if (std::abs(d) >= 0.5 * l.width_mm) return 0.0;
  return 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * d / l.width_mm));
}

double lesion_factor(const std::vector<LesionSpec>& lesions, double s) {
  double f = 1.0;
  for (const auto& l : lesions) f *= 1.0 - l.depth * shape_value(l, s);
  return f;
}

void validate_lesions(const std::vector<LesionSpec>& lesions) {
  for (const auto& l : lesions) {
    if (!(l.depth > 0.0) || !(l.depth < 1.0))
      throw InvalidInput("lesion depth must be in (0, 1)");
    if (!(l.width_mm > 2.0)) throw InvalidInput("lesion width must exceed 2 mm");
  }
  std::vector<LesionSpec> sorted = lesions;
  std::sort(sorted.begin(), sorted.end(),
            [](const LesionSpec& a, const LesionSpec& b) { return a.center_mm < b.center_mm; });
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
    if (sorted[i].center_mm + 0.5 * sorted[i].width_mm >
        sorted[i + 1].center_mm - 0.5 * sorted[i + 1].width_mm)
      throw InvalidInput("overlapping lesions after width expansion");
}

}  // namespace

std::optional<std::array<double, 2>> lesion_sd_interval(const LesionSpec& lesion,
                                                        double threshold) {
  if (!(threshold > 0.0) || !(threshold < lesion.depth)) return std::nullopt;
  double half = 0.0;
  if (lesion.shape == LesionShape::gaussian) {
    const double sigma = lesion.width_mm / 6.0;
    half = sigma * std::sqrt(2.0 * std::log(lesion.depth / threshold));
  } else {
    half = lesion.width_mm / (2.0 * std::numbers::pi) *
           std::acos(2.0 * threshold / lesion.depth - 1.0);
  }
  return std::array<double, 2>{lesion.center_mm - half, lesion.center_mm + half};
}

RadiusPhantom gen_radius_profile(const VesselSpec& spec) {
  if (!(spec.spacing_mm > 0.0)) throw InvalidInput("vessel spacing must be positive");
  if (!(spec.length_mm > 0.0)) throw InvalidInput("vessel length must be positive");
  if (!(spec.radius_start > 0.0) || !(spec.radius_end > 0.0))
    throw InvalidInput("vessel radii must be positive");
  validate_lesions(spec.lesions);

  const std::size_t n =
      static_cast<std::size_t>(std::floor(spec.length_mm / spec.spacing_mm)) + 1;
  if (n < 5) throw InvalidInput("vessel too short for a radius profile");

  RadiusPhantom out;
  out.truth.lesions = spec.lesions;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) * spec.spacing_mm;
    const double base =
        spec.radius_start + (spec.radius_end - spec.radius_start) * s / spec.length_mm;
    out.profile.abscissa.push_back(s);
    out.profile.radius.push_back(base * lesion_factor(spec.lesions, s));
    out.truth.baseline.push_back(base);
  }
  out.profile.validate();
  return out;
}

namespace {

constexpr double kStep = 0.5;  // mm per centerline sample

// Unit direction rotated from d0 toward d1 by the fraction t of the angle
// between them.
Vec3 turn_dir(const Vec3& d0, const Vec3& d1, double t) {
  const Vec3 axis = d0.cross(d1);
  const double n = axis.norm();
  if (n < 1e-12) return d0;
  const double angle = std::atan2(n, d0.dot(d1));
  return Mat3::axis_angle(axis, angle * t) * d0;
}

// Extends the polyline from its last point along a smoothly turning
// direction, in exact 0.5 mm hops.
void grow(std::vector<Vec3>& pts, const Vec3& d0, const Vec3& d1, double length) {
  const int n = std::max(2, static_cast<int>(std::lround(length / kStep)));
  Vec3 p = pts.back();
  for (int k = 1; k <= n; ++k) {
    p += turn_dir(d0, d1, (static_cast<double>(k) - 0.5) / static_cast<double>(n)) * kStep;
    pts.push_back(p);
  }
}

// Appends a linear radius ramp ending at r_end, continuing from r_start.
void taper(std::vector<double>& radii, double r_start, double r_end, std::size_t count) {
  for (std::size_t k = 1; k <= count; ++k)
    radii.push_back(r_start + (r_end - r_start) * static_cast<double>(k) /
                                  static_cast<double>(count));
}

Vec3 jitter(Rng& rng, const Vec3& d, double amount) {
  const Vec3 j{rng.normal(), rng.normal(), rng.normal()};
  return (d.normalized() + j * amount).normalized();
}

// Direction rotated away from `d` by `angle` around a random perpendicular
// axis, for side-branch takeoffs.
Vec3 branch_dir(Rng& rng, const Vec3& d, double angle) {
  const Vec3 r{rng.normal(), rng.normal(), rng.normal()};
  Vec3 axis = d.cross(r);
  if (axis.norm() < 1e-9) axis = d.cross(Vec3{1.0, 0.0, 0.0});
  return Mat3::axis_angle(axis, angle) * d.normalized();
}

Vec3 segment_dir(const std::vector<Vec3>& pts, std::size_t i) {
  const std::size_t a = std::min(i, pts.size() - 2);
  return (pts[a + 1] - pts[a]).normalized();
}

struct Branch {
  std::vector<Vec3> pts;
  std::vector<double> radii;
  BranchLabel label = BranchLabel::UNCLASSIFIED;
};

double mean_diameter(const std::vector<double>& radii, std::size_t from) {
  double acc = 0.0;
  for (std::size_t i = from; i < radii.size(); ++i) acc += 2.0 * radii[i];
  return acc / static_cast<double>(radii.size() - from);
}

TreePhantom assemble(std::vector<Branch> branches, std::size_t target, const Vec3& ostium,
                     Side side, Rng& rng, GroundTruth truth) {
  // Shuffled centerline order so classification cannot rely on it.
  std::vector<std::size_t> order(branches.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  TreePhantom out;
  out.tree.side = side;
  out.tree.ostium = ostium;
  out.truth = std::move(truth);
  out.truth.labels.clear();
  for (std::size_t i = 0; i < order.size(); ++i) {
    Branch& b = branches[order[i]];
    out.tree.centerlines.push_back(make_centerline(std::move(b.pts), std::move(b.radii)));
    out.truth.labels.push_back(b.label);
    if (order[i] == target) out.target = i;
  }
  out.tree.bifurcations = find_bifurcations(out.tree);
  return out;
}

TreePhantom gen_right_tree(const TreeSpec& spec, Rng& rng) {
  const Vec3 ostium{-8.0 + 3.0 * rng.normal(), -2.0 + 3.0 * rng.normal(),
                    24.0 + 3.0 * rng.normal()};
  const double trunk_len = rng.uniform(72.0, 98.0);
  const Vec3 d0 = jitter(rng, {-0.62, 0.22, -0.76}, 0.06);
  const Vec3 d1 = jitter(rng, {-0.18, 0.72, -0.64}, 0.06);

  Branch trunk;
  trunk.pts.push_back(ostium);
  grow(trunk.pts, d0, d1, trunk_len);
  const double r_prox = rng.uniform(1.9, 2.3);
  const double r_bif = r_prox * rng.uniform(0.78, 0.88);
  trunk.radii.push_back(r_prox);
  taper(trunk.radii, r_prox, r_bif, trunk.pts.size() - 1);

  for (const auto& l : spec.lesions) {
    const double lo = l.center_mm - 0.5 * l.width_mm, hi = l.center_mm + 0.5 * l.width_mm;
    if (lo <= 0.0 || hi >= trunk_len)
      throw InvalidInput("lesion outside the RCA trunk segment");
  }
  for (std::size_t i = 0; i < trunk.radii.size(); ++i)
    trunk.radii[i] *= lesion_factor(spec.lesions, kStep * static_cast<double>(i));

  // Caliber ratio of the second distal branch. The classification rule
  // compares mean distal diameters, which fold in the independent taper
  // draws, so the ranges keep a margin around the 40% threshold.
  double ratio = 0.0;
  if (spec.ambiguous)
    ratio = rng.uniform(0.57, 0.63);
  else if (spec.dominance == Dominance::left)
    ratio = rng.uniform(0.42, 0.52);
  else
    ratio = rng.uniform(0.86, 0.99);

  const Vec3 d_end = segment_dir(trunk.pts, trunk.pts.size() - 2);
  const double len_a = rng.uniform(46.0, 60.0);
  const double len_b = rng.uniform(30.0, len_a - 6.0);

  Branch child_a = trunk;
  {
    const Vec3 c0 = branch_dir(rng, d_end, rng.uniform(0.30, 0.45));
    const Vec3 c1 = jitter(rng, c0, 0.10);
    const std::size_t before = child_a.pts.size();
    grow(child_a.pts, c0, c1, len_a);
    taper(child_a.radii, r_bif, r_bif * rng.uniform(0.62, 0.72), child_a.pts.size() - before);
  }
  Branch child_b = trunk;
  {
    const Vec3 c0 = branch_dir(rng, d_end, -rng.uniform(0.40, 0.60));
    const Vec3 c1 = jitter(rng, c0, 0.10);
    const std::size_t before = child_b.pts.size();
    grow(child_b.pts, c0, c1, len_b);
    taper(child_b.radii, ratio * r_bif, ratio * r_bif * rng.uniform(0.62, 0.72),
          child_b.pts.size() - before);
  }
  Branch conus;
  {
    const std::size_t kc = static_cast<std::size_t>(std::lround(rng.uniform(14.0, 24.0) / kStep));
    conus.pts.assign(trunk.pts.begin(), trunk.pts.begin() + kc + 1);
    conus.radii.assign(trunk.radii.begin(), trunk.radii.begin() + kc + 1);
    const double angle = rng.uniform(0.9, 1.2);
    const Vec3 c0 = branch_dir(rng, segment_dir(trunk.pts, kc), angle);
    const Vec3 c1 = jitter(rng, c0, 0.08);
    const double len = rng.uniform(14.0, 22.0);
    const std::size_t before = conus.pts.size();
    grow(conus.pts, c0, c1, len);
    taper(conus.radii, 0.85, 0.6, conus.pts.size() - before);
  }

  // Dominance by the same caliber rule classification applies, evaluated on
  // the exact generated radii past the trunk.
  const std::size_t trunk_n = trunk.pts.size();
  const double da = mean_diameter(child_a.radii, trunk_n);
  const double db = mean_diameter(child_b.radii, trunk_n);
  const double rel_diff = std::abs(da - db) / std::max(da, db);

  GroundTruth truth;
  truth.lesions = spec.lesions;
  truth.rca_bifurcation_abscissa = kStep * static_cast<double>(trunk_n - 1);
  if (rel_diff > 0.40) {
    truth.dominance = Dominance::left;
    child_a.label = da >= db ? BranchLabel::RCA : BranchLabel::AMB;
    child_b.label = da >= db ? BranchLabel::AMB : BranchLabel::RCA;
  } else {
    truth.dominance = Dominance::right_or_codominant;
    child_a.label = BranchLabel::RCA;  // the longer of the two mains
    child_b.label = BranchLabel::PDA_PLB;
  }
  if (spec.ambiguous)
    truth.flags.push_back("ambiguous: caliber ratio near the 40% dominance rule");

  std::vector<Branch> branches;
  branches.push_back(std::move(child_a));
  branches.push_back(std::move(child_b));
  branches.push_back(std::move(conus));
  return assemble(std::move(branches), 0, ostium, Side::right, rng, std::move(truth));
}

TreePhantom gen_left_tree(const TreeSpec& spec, Rng& rng) {
  const Vec3 ostium{14.0 + 3.0 * rng.normal(), 1.0 + 3.0 * rng.normal(),
                    26.0 + 3.0 * rng.normal()};
  const double lm_len = rng.uniform(8.0, 14.0);
  const Vec3 d_lm = jitter(rng, {0.88, 0.18, -0.24}, 0.06);

  std::vector<Vec3> lm_pts{ostium};
  grow(lm_pts, d_lm, d_lm, lm_len);
  const double r_lm = rng.uniform(2.1, 2.5);
  std::vector<double> lm_radii{r_lm};
  taper(lm_radii, r_lm, r_lm * 0.95, lm_pts.size() - 1);
  const std::size_t lm_n = lm_pts.size();
  const double lm_end = kStep * static_cast<double>(lm_n - 1);
  const Vec3 d_lm_end = segment_dir(lm_pts, lm_n - 2);

  // LAD: anterior and long, in ambiguous mode hovering at the 80 mm filter.
  const double lad_len =
      spec.ambiguous ? rng.uniform(66.0, 76.0) : rng.uniform(102.0, 128.0);
  Branch lad;
  lad.pts = lm_pts;
  lad.radii = lm_radii;
  {
    const Vec3 a0 = (d_lm_end * 0.6 + Vec3{0.0, -1.25, -0.65} + Vec3{0.12 * rng.normal(),
                     0.12 * rng.normal(), 0.12 * rng.normal()}).normalized();
    const Vec3 a1 = (a0 + Vec3{-0.1, -0.35, -0.15}).normalized();
    grow(lad.pts, a0, a1, lad_len);
    const double r0 = rng.uniform(1.8, 2.0);
    const double r1 = rng.uniform(0.9, 1.1);
    taper(lad.radii, r0, r1, lad.pts.size() - lm_n);
  }
  for (const auto& l : spec.lesions) {
    const double lo = l.center_mm - 0.5 * l.width_mm, hi = l.center_mm + 0.5 * l.width_mm;
    if (lo <= lm_end || hi >= lm_end + lad_len)
      throw InvalidInput("lesion outside the LAD segment");
  }
  for (std::size_t i = 0; i < lad.radii.size(); ++i)
    lad.radii[i] *= lesion_factor(spec.lesions, kStep * static_cast<double>(i));
  lad.label = BranchLabel::LAD;

  // Diagonal off the LAD; in ambiguous mode at a grazing angle so the
  // smoothness argmax runs close.
  Branch diag;
  {
    const double takeoff = rng.uniform(24.0, 40.0);
    const std::size_t kd = lm_n - 1 + static_cast<std::size_t>(std::lround(takeoff / kStep));
    diag.pts.assign(lad.pts.begin(), lad.pts.begin() + kd + 1);
    diag.radii.assign(lad.radii.begin(), lad.radii.begin() + kd + 1);
    const double angle = spec.ambiguous ? rng.uniform(0.10, 0.20) : rng.uniform(0.75, 1.05);
    Vec3 c0 = branch_dir(rng, segment_dir(lad.pts, kd), angle);
    if (c0.y > -0.05) c0 = (c0 + Vec3{0.0, -0.4, 0.0}).normalized();  // keep it anterior
    const Vec3 c1 = jitter(rng, c0, 0.08);
    const double len = rng.uniform(38.0, 52.0);
    const std::size_t before = diag.pts.size();
    grow(diag.pts, c0, c1, len);
    taper(diag.radii, diag.radii.back() * 0.8, 0.7, diag.pts.size() - before);
  }

  // LCx: posterior, with an obtuse marginal that heads lateral.
  Branch lcx;
  lcx.pts = lm_pts;
  lcx.radii = lm_radii;
  {
    const Vec3 c0 = (d_lm_end * 0.5 + Vec3{0.35, 1.35, -0.4} + Vec3{0.12 * rng.normal(),
                     0.12 * rng.normal(), 0.12 * rng.normal()}).normalized();
    const Vec3 c1 = (c0 + Vec3{-0.25, 0.3, -0.25}).normalized();
    const double len = rng.uniform(62.0, 88.0);
    grow(lcx.pts, c0, c1, len);
    const double r0 = rng.uniform(1.6, 1.8);
    const double r1 = rng.uniform(0.9, 1.1);
    taper(lcx.radii, r0, r1, lcx.pts.size() - lm_n);
  }
  lcx.label = BranchLabel::LCx;

  Branch om;
  {
    const double takeoff = rng.uniform(20.0, 34.0);
    const std::size_t ko = lm_n - 1 + static_cast<std::size_t>(std::lround(takeoff / kStep));
    om.pts.assign(lcx.pts.begin(), lcx.pts.begin() + ko + 1);
    om.radii.assign(lcx.radii.begin(), lcx.radii.begin() + ko + 1);
    const double lateral = spec.ambiguous ? 0.45 : 1.1;
    Vec3 c0 = (segment_dir(lcx.pts, ko) + Vec3{lateral, -0.25, 0.1}).normalized();
    if (c0.y < 0.02) c0 = (c0 + Vec3{0.0, 0.25, 0.0}).normalized();  // stay posterior
    const Vec3 c1 = jitter(rng, c0, 0.08);
    const double len = rng.uniform(26.0, 38.0);
    const std::size_t before = om.pts.size();
    grow(om.pts, c0, c1, len);
    taper(om.radii, om.radii.back() * 0.75, 0.65, om.pts.size() - before);
  }

  GroundTruth truth;
  truth.lesions = spec.lesions;
  truth.lm_end_abscissa = lm_end;
  truth.dominance = Dominance::unknown;
  if (spec.ambiguous)
    truth.flags.push_back("ambiguous: LAD length and takeoff angles near decision boundaries");

  std::vector<Branch> branches;
  branches.push_back(std::move(lad));
  branches.push_back(std::move(diag));
  branches.push_back(std::move(lcx));
  branches.push_back(std::move(om));
  return assemble(std::move(branches), 0, ostium, Side::left, rng, std::move(truth));
}

}  // namespace

TreePhantom gen_coronary_tree(const TreeSpec& spec) {
  validate_lesions(spec.lesions);
  Rng rng(spec.seed);
  if (spec.side == Side::right) {
    if (spec.dominance == Dominance::unknown)
      throw InvalidInput("right tree template needs a dominance");
    return gen_right_tree(spec, rng);
  }
  return gen_left_tree(spec, rng);
}

namespace {

// Same center-point membership rule the rasterizer applies, reimplemented
// for painting: closest segment (first wins ties), radii interpolated at
// the closest point, end planes from the end tangents.
struct TubeProbe {
  Vec3 p_front, p_back, t_front, t_back;
  const TubeROI* roi;

  explicit TubeProbe(const TubeROI& r) : roi(&r) {
    p_front = r.points.front();
    p_back = r.points.back();
    t_front = (r.points[1] - p_front).normalized();
    t_back = (p_back - r.points[r.points.size() - 2]).normalized();
  }

  // Interpolated (lumen, outer) radii at the closest path point, or
  // nullopt outside the end planes.
  std::optional<std::array<double, 3>> hit(const Vec3& p) const {
    if ((p - p_front).dot(t_front) < 0.0) return std::nullopt;
    if ((p - p_back).dot(t_back) > 0.0) return std::nullopt;
    double best_d2 = std::numeric_limits<double>::infinity();
    double lumen = 0.0, outer = 0.0;
    for (std::size_t s = 0; s + 1 < roi->points.size(); ++s) {
      const Vec3& a = roi->points[s];
      const Vec3 ab = roi->points[s + 1] - a;
      const double t = std::clamp((p - a).dot(ab) / ab.norm2(), 0.0, 1.0);
      const double d2 = (p - (a + ab * t)).norm2();
      if (d2 < best_d2) {
        best_d2 = d2;
        lumen = roi->lumen_radius[s] + t * (roi->lumen_radius[s + 1] - roi->lumen_radius[s]);
        outer = roi->outer_radius[s] + t * (roi->outer_radius[s + 1] - roi->outer_radius[s]);
      }
    }
    return std::array<double, 3>{best_d2, lumen, outer};
  }
};

}  // namespace

VolumePhantom gen_pcat_volume(const VolumeSpec& spec, const TubeROI& roi) {
  roi.validate();
  if (spec.hu_values.empty() || spec.hu_values.size() != spec.hu_weights.size())
    throw InvalidInput("HU sampler needs matching values and weights");
  for (int v : spec.hu_values)
    if (v < -1024 || v > 3071) throw InvalidInput("HU sampler support outside [-1024, 3071]");
  for (double w : spec.hu_weights)
    if (!(w > 0.0)) throw InvalidInput("HU sampler weights must be positive");
  if (!(spec.spacing.x > 0.0) || !(spec.spacing.y > 0.0) || !(spec.spacing.z > 0.0))
    throw InvalidInput("grid spacing must be positive");

  VolumePhantom out;
  if (spec.spacing.x > 1.0 || spec.spacing.y > 1.0 || spec.spacing.z > 1.0)
    out.truth.flags.push_back("coarse grid: spacing above 1 mm");

  double max_r = 0.0;
  for (double r : roi.outer_radius) max_r = std::max(max_r, r);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Vec3 lo{kInf, kInf, kInf}, hi{-kInf, -kInf, -kInf};
  for (const Vec3& p : roi.points) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  const double pad = max_r + spec.margin_mm;

  VoxelVolume& vol = out.volume;
  vol.spacing = spec.spacing;
  vol.origin = lo - Vec3{pad, pad, pad};
  for (int a = 0; a < 3; ++a) {
    const double extent = (a == 0 ? hi.x - lo.x : a == 1 ? hi.y - lo.y : hi.z - lo.z) + 2.0 * pad;
    const double sp = a == 0 ? spec.spacing.x : a == 1 ? spec.spacing.y : spec.spacing.z;
    vol.dims[a] = static_cast<std::size_t>(std::ceil(extent / sp)) + 1;
  }
  vol.data.assign(vol.dims[0] * vol.dims[1] * vol.dims[2],
                  static_cast<std::int16_t>(spec.background_hu));
  out.lumen = BinaryMask::empty_like(vol);

  const TubeProbe probe(roi);
  DiscreteSampler sampler(spec.hu_values, spec.hu_weights);
  Rng rng(spec.seed);
  std::map<int, std::size_t> counts;
  for (std::size_t kz = 0; kz < vol.dims[2]; ++kz)
    for (std::size_t jy = 0; jy < vol.dims[1]; ++jy)
      for (std::size_t ix = 0; ix < vol.dims[0]; ++ix) {
        const auto h = probe.hit(vol.voxel_center(ix, jy, kz));
        if (!h) continue;
        const auto [d2, lumen_r, outer_r] = *h;
        const std::size_t idx = vol.index(ix, jy, kz);
        if (d2 <= lumen_r * lumen_r) {
          vol.data[idx] = static_cast<std::int16_t>(spec.lumen_hu);
          out.lumen.data[idx] = 1;
          ++out.truth.lumen_voxels;
        } else if (d2 <= outer_r * outer_r) {
          const int hu = sampler.sample(rng);
          vol.data[idx] = static_cast<std::int16_t>(hu);
          ++counts[hu];
          ++out.truth.annulus_voxels;
        }
      }
  out.truth.hu_counts.assign(counts.begin(), counts.end());
  return out;
}

DatasetPhantom gen_feature_dataset(const DatasetSpec& spec) {
  if (spec.features == 0) throw InvalidInput("dataset needs at least one feature");
  if (spec.patients == 0 || spec.lesions_per_patient == 0)
    throw InvalidInput("dataset needs at least one row");
  if (spec.rule != DatasetSpec::Rule::noise) {
    if (spec.signal_cols.empty()) throw InvalidInput("signal rule needs signal columns");
    if (spec.rule == DatasetSpec::Rule::xor_rule && spec.signal_cols.size() != 2)
      throw InvalidInput("xor rule needs exactly two signal columns");
    for (std::size_t c : spec.signal_cols)
      if (c >= spec.features) throw InvalidInput("signal column out of range");
  }

  DatasetPhantom out;
  FeatureTable& t = out.table;
  for (std::size_t j = 0; j < spec.features; ++j)
    t.feature_names.push_back("f" + std::to_string(j));

  Rng rng(spec.seed);
  if (spec.rule == DatasetSpec::Rule::linear) {
    out.truth.rule = "linear";
    for (std::size_t k = 0; k < spec.signal_cols.size(); ++k) {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      out.truth.rule_weights.push_back(sign * rng.uniform(0.8, 1.5));
    }
  } else if (spec.rule == DatasetSpec::Rule::xor_rule) {
    out.truth.rule = "xor";
  } else {
    out.truth.rule = "noise";
  }
  if (spec.rule != DatasetSpec::Rule::noise) out.truth.signal_cols = spec.signal_cols;

  double wnorm = 0.0;
  for (double w : out.truth.rule_weights) wnorm += w * w;
  wnorm = std::sqrt(wnorm);

  static const char* kBranches[] = {"LAD", "RCA", "LCx"};
  for (std::size_t p = 0; p < spec.patients; ++p) {
    char patient[16];
    std::snprintf(patient, sizeof(patient), "p%04zu", p);
    for (std::size_t l = 0; l < spec.lesions_per_patient; ++l) {
      std::vector<double> row(spec.features);
      for (double& v : row) v = rng.normal();

      int y = 0;
      if (spec.rule == DatasetSpec::Rule::linear) {
        double z = 0.0;
        for (std::size_t k = 0; k < spec.signal_cols.size(); ++k)
          z += out.truth.rule_weights[k] * row[spec.signal_cols[k]];
        y = z > 0.0 ? 1 : 0;
        // Push the signal part away from the boundary for a clean margin.
        const double shift = 0.2 * (y ? 1.0 : -1.0) / wnorm;
        for (std::size_t k = 0; k < spec.signal_cols.size(); ++k)
          row[spec.signal_cols[k]] += shift * out.truth.rule_weights[k];
      } else if (spec.rule == DatasetSpec::Rule::xor_rule) {
        const bool s0 = rng.uniform() < 0.5, s1 = rng.uniform() < 0.5;
        row[spec.signal_cols[0]] = (s0 ? 1.0 : -1.0) + 0.25 * rng.normal();
        row[spec.signal_cols[1]] = (s1 ? 1.0 : -1.0) + 0.25 * rng.normal();
        y = (s0 != s1) ? 1 : 0;
      } else {
        y = rng.uniform() < 0.5 ? 1 : 0;
      }
      if (spec.feature_noise > 0.0 && spec.rule != DatasetSpec::Rule::noise)
        for (std::size_t c : spec.signal_cols) row[c] += spec.feature_noise * rng.normal();

      t.rows.push_back(std::move(row));
      t.functional.push_back(y ? FeatureTable::Functional{0.70, 20.0, 0.10}
                               : FeatureTable::Functional{0.90, 10.0, 0.02});
      t.provenance.push_back(
          {patient, kBranches[p % 3], static_cast<int>(l)});
      out.truth.planted_labels.push_back(y);
    }
  }
  t.validate();
  return out;
}

PhantomCase gen_case(const CaseSpec& spec) {
  if (spec.n_lesions == 0 || spec.n_lesions > 2)
    throw InvalidInput("case supports 1 or 2 planted lesions");
  if (!(spec.depth_range[0] > 0.0) || !(spec.depth_range[1] < 1.0) ||
      !(spec.depth_range[0] <= spec.depth_range[1]))
    throw InvalidInput("bad lesion depth range");
  if (!(spec.width_range[0] > 2.0) || !(spec.width_range[0] <= spec.width_range[1]))
    throw InvalidInput("bad lesion width range");

  Rng rng(Rng::splitmix64(spec.seed ^ 0x9e3779b97f4a7c15ULL));
  TreeSpec ts;
  ts.side = spec.side;
  ts.ambiguous = spec.ambiguous;
  ts.dominance = rng.uniform() < 0.5 ? Dominance::left : Dominance::right_or_codominant;
  ts.seed = spec.seed;

  // The clean tree fixes the window origin and the healthy calibers; the
  // lesioned rebuild with the same seed shares its exact geometry.
  const TreePhantom clean = gen_coronary_tree(ts);
  const double ref = spec.side == Side::right ? 0.0 : clean.truth.lm_end_abscissa;

  std::vector<LesionSpec> lesions;
  for (int attempt = 0; attempt < 100 && lesions.size() < spec.n_lesions; ++attempt) {
    LesionSpec l;
    l.depth = rng.uniform(spec.depth_range[0], spec.depth_range[1]);
    l.width_mm = rng.uniform(spec.width_range[0], spec.width_range[1]);
    l.center_mm = rng.uniform(ref + 14.0, ref + 46.0);
    l.shape = rng.uniform() < 0.5 ? LesionShape::gaussian : LesionShape::cosine;
    bool clear = true;
    for (const auto& other : lesions)
      if (std::abs(other.center_mm - l.center_mm) <
          0.5 * (other.width_mm + l.width_mm) + 1.0)
        clear = false;
    if (clear) lesions.push_back(l);
  }
  std::sort(lesions.begin(), lesions.end(),
            [](const LesionSpec& a, const LesionSpec& b) { return a.center_mm < b.center_mm; });

  ts.lesions = lesions;
  TreePhantom lesioned = gen_coronary_tree(ts);

  PhantomCase out;
  out.tree = std::move(lesioned.tree);
  out.truth = std::move(lesioned.truth);
  out.target = lesioned.target;
  out.target_label = spec.side == Side::right ? BranchLabel::RCA : BranchLabel::LAD;
  if (lesions.size() < spec.n_lesions)
    out.truth.flags.push_back("case: lesion placement fell back to fewer lesions");

  const Centerline& c_clean = clean.tree.centerlines[clean.target];
  const Centerline& c_les = out.tree.centerlines[out.target];
  const TubeROI roi_clean = vessel_roi(out.target_label, c_clean, ref);
  TubeROI paint = vessel_roi(out.target_label, c_les, ref);
  // Paint the annulus out to three healthy radii so both the vessel window
  // (three lumen radii) and any lesion tube (three estimated healthy
  // radii) stay inside sampled fat.
  paint.outer_radius = roi_clean.outer_radius;

  VolumeSpec vs = spec.volume;
  vs.seed = Rng::splitmix64(spec.seed ^ 0x517cc1b727220a95ULL);
  VolumePhantom vp = gen_pcat_volume(vs, paint);
  out.volume = std::move(vp.volume);
  out.lumen = std::move(vp.lumen);
  out.truth.hu_counts = std::move(vp.truth.hu_counts);
  out.truth.annulus_voxels = vp.truth.annulus_voxels;
  out.truth.lumen_voxels = vp.truth.lumen_voxels;
  for (const auto& f : vp.truth.flags) out.truth.flags.push_back(f);

  for (const auto& l : lesions) {
    FeatureTable::Functional f;
    f.vffr = std::clamp(0.95 - 0.40 * l.depth + 0.02 * rng.normal(), 0.05, 1.0);
    f.wss = std::max(0.0, 4.0 + 24.0 * l.depth + 1.5 * rng.normal());
    f.dffr = std::clamp(0.015 + 0.11 * l.depth + 0.008 * rng.normal(), 0.0, 1.0);
    out.functional.push_back(f);
  }
  return out;
}

}  // namespace corsa
