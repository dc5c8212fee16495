#include "corsa/pcat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace corsa {

void VoxelVolume::validate() const {
  if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0)
    throw InvalidInput("volume dims must be positive");
  if (!(spacing.x > 0.0) || !(spacing.y > 0.0) || !(spacing.z > 0.0))
    throw InvalidInput("volume spacing must be positive");
  if (!direction.is_orthonormal(1e-6))
    throw InvalidInput("volume direction must be orthonormal");
  if (data.size() != dims[0] * dims[1] * dims[2])
    throw InvalidInput("volume data length must match dims");
}

Vec3 VoxelVolume::voxel_center(std::size_t ix, std::size_t iy, std::size_t iz) const {
  const Vec3 local{static_cast<double>(ix) * spacing.x, static_cast<double>(iy) * spacing.y,
                   static_cast<double>(iz) * spacing.z};
  return origin + direction * local;
}

BinaryMask BinaryMask::empty_like(const VoxelVolume& vol) {
  BinaryMask m;
  m.dims = vol.dims;
  m.spacing = vol.spacing;
  m.origin = vol.origin;
  m.direction = vol.direction;
  m.data.assign(vol.dims[0] * vol.dims[1] * vol.dims[2], 0);
  return m;
}

bool BinaryMask::same_grid(const VoxelVolume& vol) const {
  return dims == vol.dims && spacing == vol.spacing && origin == vol.origin &&
         direction == vol.direction;
}

bool BinaryMask::same_grid(const BinaryMask& other) const {
  return dims == other.dims && spacing == other.spacing && origin == other.origin &&
         direction == other.direction;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(
      std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

void TubeROI::validate() const {
  const std::size_t n = points.size();
  if (n < 2) throw InvalidInput("tube path needs at least 2 points");
  if (outer_radius.size() != n || lumen_radius.size() != n)
    throw InvalidInput("tube radius arrays must match the path");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(outer_radius[i]) || !std::isfinite(lumen_radius[i]) ||
        !(lumen_radius[i] > 0.0))
      throw InvalidInput("tube radii must be positive and finite");
    if (!(outer_radius[i] > lumen_radius[i]))
      throw InvalidInput("tube outer radius must exceed the lumen radius");
  }
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!((points[i + 1] - points[i]).norm2() > 0.0))
      throw InvalidInput("tube path points must be distinct");
  if (!(start_abscissa < end_abscissa)) throw InvalidInput("tube needs a nonempty span");
}

namespace {

// Appends the tube sample at abscissa s: interpolated center point, the
// local lumen radius and an outer radius from the caller's rule.
template <typename OuterFn>
void push_sample(TubeROI& roi, const Centerline& c, double s, OuterFn&& outer) {
  roi.points.push_back(c.position_at(s));
  const double lumen = c.radius_at(s);
  roi.lumen_radius.push_back(lumen);
  roi.outer_radius.push_back(outer(s, lumen));
}

}  // namespace

TubeROI vessel_roi(BranchLabel branch, const Centerline& c, double ref_abscissa) {
  double offset = 0.0;
  switch (branch) {
    case BranchLabel::RCA:
    case BranchLabel::LAD:
      offset = 10.0;
      break;
    case BranchLabel::LCx:
      offset = 0.0;
      break;
    default:
      throw InvalidInput("vessel_roi: no window rule for branch " + to_string(branch));
  }
  if (c.size() < 2) throw InvalidInput("vessel_roi: degenerate centerline");

  const double start = ref_abscissa + offset;
  const double extent = c.abscissa.back();
  if (!(start < extent)) throw InvalidInput("vessel_roi: branch ends before the window start");

  TubeROI roi;
  roi.kind = RoiKind::per_vessel;
  double end = start + 40.0;
  if (end > extent) {
    end = extent;
    roi.flags.push_back("vessel window truncated at " + format_double(end) + " mm");
  }
  roi.start_abscissa = start;
  roi.end_abscissa = end;

  const auto outer = [](double, double lumen) { return 3.0 * lumen; };
  constexpr double kEps = 1e-9;
  push_sample(roi, c, start, outer);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double s = c.abscissa[i];
    if (s > start + kEps && s < end - kEps) push_sample(roi, c, s, outer);
  }
  push_sample(roi, c, end, outer);
  roi.validate();
  return roi;
}

TubeROI lesion_roi(const Lesion& lesion, const Centerline& c, const RadiusProfile& resampled,
                   const std::vector<double>& r_h) {
  resampled.validate();
  if (r_h.size() != resampled.size())
    throw InvalidInput("lesion_roi: healthy radius array must match the profile");
  if (!(lesion.start_mm < lesion.end_mm))
    throw InvalidInput("lesion_roi: empty lesion interval");

  TubeROI roi;
  roi.kind = RoiKind::per_lesion;
  roi.start_abscissa = lesion.start_mm;
  roi.end_abscissa = lesion.end_mm;
  constexpr double kEps = 1e-9;
  for (std::size_t i = 0; i < resampled.size(); ++i) {
    const double s = resampled.abscissa[i];
    if (s < lesion.start_mm - kEps || s > lesion.end_mm + kEps) continue;
    roi.points.push_back(c.position_at(s));
    roi.lumen_radius.push_back(resampled.radius[i]);
    roi.outer_radius.push_back(3.0 * r_h[i]);
  }
  if (roi.points.size() < 2)
    throw InvalidInput("lesion_roi: interval covers fewer than two profile points");
  roi.validate();
  return roi;
}

namespace {

RasterResult rasterize_impl(const TubeROI& roi, const VoxelVolume& vol, const BinaryMask& lumen,
                            bool parallel) {
  roi.validate();
  vol.validate();
  if (!lumen.same_grid(vol))
    throw InvalidInput("rasterize_tube: lumen mask grid differs from the volume");

  RasterResult out;
  out.mask = BinaryMask::empty_like(vol);

  // Conservative world bounds of the tube, then index bounds of the grid.
  Vec3 wlo = roi.points[0], whi = roi.points[0];
  for (std::size_t i = 0; i < roi.points.size(); ++i) {
    const Vec3& p = roi.points[i];
    const double r = roi.outer_radius[i];
    wlo = {std::min(wlo.x, p.x - r), std::min(wlo.y, p.y - r), std::min(wlo.z, p.z - r)};
    whi = {std::max(whi.x, p.x + r), std::max(whi.y, p.y + r), std::max(whi.z, p.z + r)};
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Vec3 llo{kInf, kInf, kInf}, lhi{-kInf, -kInf, -kInf};
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 w{(corner & 1) ? whi.x : wlo.x, (corner & 2) ? whi.y : wlo.y,
                 (corner & 4) ? whi.z : wlo.z};
    const Vec3 l = vol.direction.tmul(w - vol.origin);
    llo = {std::min(llo.x, l.x), std::min(llo.y, l.y), std::min(llo.z, l.z)};
    lhi = {std::max(lhi.x, l.x), std::max(lhi.y, l.y), std::max(lhi.z, l.z)};
  }
  const auto lo_idx = [](double v, double sp, std::size_t dim) {
    return std::min<long>(static_cast<long>(dim) - 1,
                          std::max<long>(0, static_cast<long>(std::floor(v / sp)) - 1));
  };
  const auto hi_idx = [](double v, double sp, std::size_t dim) {
    return std::max<long>(0, std::min<long>(static_cast<long>(dim) - 1,
                                            static_cast<long>(std::ceil(v / sp)) + 1));
  };
  const long i0 = lo_idx(llo.x, vol.spacing.x, vol.dims[0]);
  const long i1 = hi_idx(lhi.x, vol.spacing.x, vol.dims[0]);
  const long j0 = lo_idx(llo.y, vol.spacing.y, vol.dims[1]);
  const long j1 = hi_idx(lhi.y, vol.spacing.y, vol.dims[1]);
  const long k0 = lo_idx(llo.z, vol.spacing.z, vol.dims[2]);
  const long k1 = hi_idx(lhi.z, vol.spacing.z, vol.dims[2]);
  if (lhi.x < 0.0 || lhi.y < 0.0 || lhi.z < 0.0 ||
      llo.x > static_cast<double>(vol.dims[0] - 1) * vol.spacing.x ||
      llo.y > static_cast<double>(vol.dims[1] - 1) * vol.spacing.y ||
      llo.z > static_cast<double>(vol.dims[2] - 1) * vol.spacing.z) {
    out.flags.push_back("empty rasterization: roi outside volume");
    return out;
  }

  const Vec3 p_front = roi.points.front(), p_back = roi.points.back();
  const Vec3 t_front = (roi.points[1] - p_front).normalized();
  const Vec3 t_back = (p_back - roi.points[roi.points.size() - 2]).normalized();
  const std::size_t nseg = roi.points.size() - 1;

#pragma omp parallel for schedule(static) if (parallel)
  for (long kz = k0; kz <= k1; ++kz) {
    for (long jy = j0; jy <= j1; ++jy) {
      for (long ix = i0; ix <= i1; ++ix) {
        const Vec3 p = vol.voxel_center(static_cast<std::size_t>(ix),
                                        static_cast<std::size_t>(jy),
                                        static_cast<std::size_t>(kz));
        if ((p - p_front).dot(t_front) < 0.0) continue;
        if ((p - p_back).dot(t_back) > 0.0) continue;
        double best_d2 = kInf, best_r = 0.0;
        for (std::size_t s = 0; s < nseg; ++s) {
          const Vec3& a = roi.points[s];
          const Vec3 ab = roi.points[s + 1] - a;
          const double t = std::clamp((p - a).dot(ab) / ab.norm2(), 0.0, 1.0);
          const double d2 = (p - (a + ab * t)).norm2();
          if (d2 < best_d2) {
            best_d2 = d2;
            best_r = roi.outer_radius[s] + t * (roi.outer_radius[s + 1] - roi.outer_radius[s]);
          }
        }
        if (best_d2 > best_r * best_r) continue;
        const std::size_t idx = vol.index(static_cast<std::size_t>(ix),
                                          static_cast<std::size_t>(jy),
                                          static_cast<std::size_t>(kz));
        if (lumen.data[idx]) continue;
        out.mask.data[idx] = 1;
      }
    }
  }
  if (out.mask.count() == 0) out.flags.push_back("empty rasterization: roi outside volume");
  return out;
}

}  // namespace

RasterResult rasterize_tube(const TubeROI& roi, const VoxelVolume& vol, const BinaryMask& lumen) {
  return rasterize_impl(roi, vol, lumen, true);
}

namespace serial {
RasterResult rasterize_tube(const TubeROI& roi, const VoxelVolume& vol, const BinaryMask& lumen) {
  return rasterize_impl(roi, vol, lumen, false);
}
}  // namespace serial

PcatFeatures pcat_features(const BinaryMask& mask, const VoxelVolume& vol) {
  vol.validate();
  if (!mask.same_grid(vol))
    throw InvalidInput("pcat_features: mask grid differs from the volume");

  PcatFeatures f;
  std::vector<std::int16_t> fat;
  long long sum = 0;
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    if (!mask.data[i]) continue;
    ++f.roi_voxels;
    const std::int16_t hu = vol.data[i];
    if (hu >= kFatHuLo && hu <= kFatHuHi) {
      fat.push_back(hu);
      sum += hu;
    }
  }
  f.fat_voxels = fat.size();
  f.fat_volume_mm3 = static_cast<double>(f.fat_voxels) * vol.voxel_volume();
  f.fat_fraction =
      f.roi_voxels ? static_cast<double>(f.fat_voxels) / static_cast<double>(f.roi_voxels) : 0.0;
  if (fat.empty()) return f;

  std::sort(fat.begin(), fat.end());
  f.fai = static_cast<double>(sum) / static_cast<double>(fat.size());
  const auto pct = [&](double q) {
    const double h = static_cast<double>(fat.size() - 1) * q / 100.0;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, fat.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return static_cast<double>(fat[lo]) + frac * static_cast<double>(fat[hi] - fat[lo]);
  };
  f.p10 = pct(10.0);
  f.p25 = pct(25.0);
  f.p50 = pct(50.0);
  f.p75 = pct(75.0);
  f.p90 = pct(90.0);
  f.p95 = pct(95.0);
  return f;
}

}  // namespace corsa
