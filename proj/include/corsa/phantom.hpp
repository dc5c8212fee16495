#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "corsa/classifier.hpp"
#include "corsa/common.hpp"
#include "corsa/geometry.hpp"
#include "corsa/pcat.hpp"
#include "corsa/stenosis.hpp"

namespace corsa {

// Synthetic inputs with analytic ground truth so every pipeline stage can
// be scored without clinical data. All generators are pure functions of
// their spec (and its seed).

enum class LesionShape { gaussian, cosine };

// One planted narrowing. The shape is a unit bump centered at `center_mm`:
// a gaussian with sigma = width/6 or a raised cosine supported on
// [center - width/2, center + width/2]. The local radius is multiplied by
// (1 - depth * shape).
struct LesionSpec {
  double center_mm = 0.0;
  double depth = 0.3;
  double width_mm = 8.0;
  LesionShape shape = LesionShape::gaussian;
};

// Abscissa interval where the lesion's analytic stenosis degree (depth *
// shape against the baseline) exceeds `threshold`; nullopt when the depth
// never reaches it.
std::optional<std::array<double, 2>> lesion_sd_interval(const LesionSpec& lesion,
                                                        double threshold);

struct VesselSpec {
  double length_mm = 100.0;
  double radius_start = 2.0;
  double radius_end = 2.0;  // linear taper toward the distal end
  double spacing_mm = 0.5;
  std::vector<LesionSpec> lesions;
};

struct TreeSpec {
  Side side = Side::right;
  // Right trees only; left dominance makes the second distal branch an AMB
  // with a caliber gap above the 40% rule.
  Dominance dominance = Dominance::right_or_codominant;
  // Near-tie construction (caliber ratio, LAD length, branch angles close
  // to the decision boundaries) for documenting failure modes.
  bool ambiguous = false;
  std::uint64_t seed = 0;
  // Planted on the target branch (RCA trunk / LAD), centers on that
  // branch's own abscissa.
  std::vector<LesionSpec> lesions;
};

struct VolumeSpec {
  Vec3 spacing{0.5, 0.5, 0.5};
  double margin_mm = 2.0;  // grid margin beyond the tube extent
  int lumen_hu = 300;
  int background_hu = 50;
  std::vector<int> hu_values{-120, -95, -70, -45};
  std::vector<double> hu_weights{1.0, 1.0, 1.0, 1.0};
  std::uint64_t seed = 0;
};

struct DatasetSpec {
  enum class Rule { linear, xor_rule, noise };

  std::size_t patients = 60;
  std::size_t lesions_per_patient = 2;
  std::size_t features = 10;
  std::vector<std::size_t> signal_cols{0, 1};
  Rule rule = Rule::linear;
  double feature_noise = 0.0;  // sd of noise added to signal features after labeling
  std::uint64_t seed = 0;
};

// Everything a test needs to score the stages downstream of a generator.
// Fields are filled by the generator that applies.
struct GroundTruth {
  // gen_radius_profile: healthy radius per sample and the planted lesions.
  std::vector<double> baseline;
  std::vector<LesionSpec> lesions;

  // gen_coronary_tree: intended label per centerline.
  std::vector<BranchLabel> labels;
  Dominance dominance = Dominance::unknown;
  double lm_end_abscissa = 0.0;
  double rca_bifurcation_abscissa = 0.0;

  // gen_pcat_volume: exact HU multiset of the annulus voxels, sorted by HU.
  std::vector<std::pair<int, std::size_t>> hu_counts;
  std::size_t annulus_voxels = 0;
  std::size_t lumen_voxels = 0;

  // gen_feature_dataset: the planted labeling rule.
  std::string rule;
  std::vector<std::size_t> signal_cols;
  std::vector<double> rule_weights;
  std::vector<int> planted_labels;

  Flags flags;
};

struct RadiusPhantom {
  RadiusProfile profile;
  GroundTruth truth;
};

// Baseline taper multiplied by the planted lesion bumps. Lesion supports
// (center +- width/2) must not overlap.
RadiusPhantom gen_radius_profile(const VesselSpec& spec);

struct TreePhantom {
  CoronaryTree tree;
  GroundTruth truth;
  std::size_t target = 0;  // centerline carrying the planted lesions
};

// Seeded tree satisfying the classification rules by construction: right
// trees with a shared trunk and two distal branches plus a short conus;
// left trees with LM, LAD (>= 100 mm, anterior), a diagonal, LCx
// (posterior) and an obtuse marginal. Centerline order is shuffled.
TreePhantom gen_coronary_tree(const TreeSpec& spec);

struct VolumePhantom {
  VoxelVolume volume;
  BinaryMask lumen;
  GroundTruth truth;
};

// Grid covering the tube with margin; lumen voxels at lumen_hu, annulus
// voxels (inside the outer radius, outside the lumen, between the end
// planes) drawn from the HU sampler, the rest background. The truth
// records the exact annulus HU multiset in draw order aggregation.
VolumePhantom gen_pcat_volume(const VolumeSpec& spec, const TubeROI& roi);

struct DatasetPhantom {
  FeatureTable table;
  GroundTruth truth;
};

// Feature rows grouped into patients with labels planted by a linear or
// XOR rule on the signal columns (or coin flips for the noise rule); the
// functional columns encode the label consistently for all criteria.
DatasetPhantom gen_feature_dataset(const DatasetSpec& spec);

struct CaseSpec {
  std::uint64_t seed = 0;
  Side side = Side::right;
  bool ambiguous = false;
  std::size_t n_lesions = 1;
  std::array<double, 2> depth_range{0.35, 0.65};
  std::array<double, 2> width_range{6.0, 12.0};
  VolumeSpec volume;
};

// Complete case: tree with lesions planted inside the target branch's
// analysis window, a volume covering that window, the lumen mask and
// per-lesion functional values correlated with lesion depth.
struct PhantomCase {
  CoronaryTree tree;
  VoxelVolume volume;
  BinaryMask lumen;
  std::vector<FeatureTable::Functional> functional;  // per planted lesion
  GroundTruth truth;
  std::size_t target = 0;
  BranchLabel target_label = BranchLabel::RCA;
};

PhantomCase gen_case(const CaseSpec& spec);

}  // namespace corsa
