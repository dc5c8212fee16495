#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "corsa/common.hpp"
#include "corsa/geometry.hpp"
#include "corsa/stenosis.hpp"
#include "corsa/vec3.hpp"

namespace corsa {

// HU grid with affine placement. Voxel (0,0,0) has its center at `origin`
// (LPS mm); data is stored x-fastest.
struct VoxelVolume {
  std::array<std::size_t, 3> dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  Mat3 direction;  // row-major direction cosines
  std::vector<std::int16_t> data;

  void validate() const;
  std::size_t index(std::size_t ix, std::size_t iy, std::size_t iz) const {
    return ix + dims[0] * (iy + dims[1] * iz);
  }
  Vec3 voxel_center(std::size_t ix, std::size_t iy, std::size_t iz) const;
  double voxel_volume() const { return spacing.x * spacing.y * spacing.z; }
};

// Voxel selection on the same grid as a companion volume.
struct BinaryMask {
  std::array<std::size_t, 3> dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  Mat3 direction;
  std::vector<std::uint8_t> data;

  static BinaryMask empty_like(const VoxelVolume& vol);
  bool same_grid(const VoxelVolume& vol) const;
  bool same_grid(const BinaryMask& other) const;
  std::size_t index(std::size_t ix, std::size_t iy, std::size_t iz) const {
    return ix + dims[0] * (iy + dims[1] * iz);
  }
  std::size_t count() const;
};

enum class RoiKind { per_vessel, per_lesion };

// Pericoronary tube: polyline path with per-point lumen and outer radii.
struct TubeROI {
  std::vector<Vec3> points;
  std::vector<double> outer_radius;
  std::vector<double> lumen_radius;
  double start_abscissa = 0.0;
  double end_abscissa = 0.0;
  RoiKind kind = RoiKind::per_vessel;
  Flags flags;

  void validate() const;
};

// 40 mm analysis window along the classified branch. `ref_abscissa` locates
// the branch's reference point on its own abscissa: the ostium for the RCA,
// the LM bifurcation for the LAD and LCx. The window starts 10 mm past the
// reference for RCA and LAD and immediately at it for LCx; windows running
// past the end of the centerline are truncated and flagged. Outer radius is
// three times the local lumen radius.
TubeROI vessel_roi(BranchLabel branch, const Centerline& c, double ref_abscissa = 0.0);

// Tube over the lesion interval with outer radius three times the estimated
// healthy radius. `resampled` and `r_h` are the parallel arrays the lesion
// was detected on.
TubeROI lesion_roi(const Lesion& lesion, const Centerline& c, const RadiusProfile& resampled,
                   const std::vector<double>& r_h);

struct RasterResult {
  BinaryMask mask;
  Flags flags;
};

// Center-point membership: a voxel is selected iff its center lies between
// the end planes (normal to the path tangent at each end), its minimum
// distance to the piecewise-linear path is at most the outer radius
// interpolated at the closest point, and it is not a lumen voxel.
RasterResult rasterize_tube(const TubeROI& roi, const VoxelVolume& vol, const BinaryMask& lumen);
namespace serial {
RasterResult rasterize_tube(const TubeROI& roi, const VoxelVolume& vol, const BinaryMask& lumen);
}

// Adipose statistics of the masked voxels within the fat HU window.
// Attenuation features are null when the window captures nothing.
struct PcatFeatures {
  std::optional<double> fai;
  std::optional<double> p10, p25, p50, p75, p90, p95;
  double fat_fraction = 0.0;
  double fat_volume_mm3 = 0.0;
  std::size_t roi_voxels = 0;
  std::size_t fat_voxels = 0;
};

inline constexpr double kFatHuLo = -190.0;
inline constexpr double kFatHuHi = -30.0;

PcatFeatures pcat_features(const BinaryMask& mask, const VoxelVolume& vol);

}  // namespace corsa
