#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "corsa/common.hpp"
#include "corsa/vec3.hpp"

namespace corsa {

// Centerline of one coronary branch, sampled from the ostium outward.
// `radius` is the maximal inscribed sphere radius at each point, `abscissa`
// the curvilinear (arc-length) coordinate starting at 0 at the ostium and
// `tangents` the local unit direction of the path.
struct Centerline {
  std::vector<Vec3> points;
  std::vector<double> radius;
  std::vector<double> abscissa;
  std::vector<Vec3> tangents;

  std::size_t size() const { return points.size(); }
  double length() const { return abscissa.empty() ? 0.0 : abscissa.back(); }

  // Index of the sample closest to the given abscissa.
  std::size_t index_at(double s) const;

  // Position interpolated along the polyline at the given abscissa.
  Vec3 position_at(double s) const;
  double radius_at(double s) const;
};

enum class Side { left, right };

struct Bifurcation {
  Vec3 position;
  double abscissa = 0.0;               // along any participating centerline
  std::vector<std::size_t> centerlines;  // indices into CoronaryTree::centerlines
};

struct CoronaryTree {
  Side side = Side::left;
  Vec3 ostium;
  std::vector<Centerline> centerlines;
  std::vector<Bifurcation> bifurcations;
};

// Local geometry at a bifurcation node used for path selection: the
// kernel-averaged tangents on either side and their cosine similarity,
// plus the direction from the node to the distal center of mass.
struct BifurcationGeometry {
  Vec3 v_o;
  Vec3 t_up;
  Vec3 t_down;
  double s_c = 0.0;
};

enum class BranchLabel { RCA, LAD, LCx, AMB, PDA_PLB, UNCLASSIFIED };

// The distal-caliber rule can tell left dominance apart but cannot split
// right dominance from codominance, so those are reported as one value.
enum class Dominance { left, right_or_codominant, unknown };

std::string to_string(BranchLabel label);
std::string to_string(Dominance d);
BranchLabel branch_label_from_string(const std::string& s);

struct ClassificationResult {
  // One label per centerline of the tree.
  std::vector<BranchLabel> labels;
  Dominance dominance = Dominance::unknown;
  // Right tree: abscissa where the RCA proper ends (the PDA/PLB
  // bifurcation) when dominance is right/codominant.
  std::optional<double> rca_end_abscissa;
  // Left tree: abscissa of the LMCA bifurcation; the shared trunk before
  // it is the left main and is excluded from branch analysis.
  std::optional<double> lm_end_abscissa;
  bool failed = false;
  Flags flags;

  std::optional<std::size_t> index_of(BranchLabel label) const;
};

// --- Operations ---------------------------------------------------------

// Cumulative arc length. Throws InvalidInput for fewer than 2 points or
// duplicate consecutive points.
std::vector<double> arc_length_parameterize(const std::vector<Vec3>& points);

// Builds a centerline from raw samples, computing abscissa and tangents
// and validating the invariants (positive radii, strictly increasing
// abscissa).
Centerline make_centerline(std::vector<Vec3> points, std::vector<double> radius);

// Arc-length-weighted average of unit segment directions over
// [abscissa[i] - half_kernel, abscissa[i]] (up) and
// [abscissa[i], abscissa[i] + half_kernel] (down). The default window is
// 5 mm on each side, a 1 cm kernel centered at the node. Throws
// InvalidInput when a side has no support (endpoint node).
std::pair<Vec3, Vec3> kernel_tangent(const Centerline& c, std::size_t i,
                                     double half_kernel = 5.0);

inline double cosine_similarity(const Vec3& a, const Vec3& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

// For each centerline pair, locates the last point of the shared prefix
// (inter-centerline distance <= tol, default half a voxel-ish 0.5 mm).
// Nearby nodes from different pairs are merged; result sorted by abscissa.
std::vector<Bifurcation> find_bifurcations(const CoronaryTree& tree, double tol = 0.5);

// Tube-approximation volume of a centerline: sum of pi*r^2*dgamma.
double centerline_volume(const Centerline& c);

// Anterior / posterior unit directions in the LPS frame.
inline constexpr Vec3 kAnterior{0.0, -1.0, 0.0};
inline constexpr Vec3 kPosterior{0.0, 1.0, 0.0};

// RCA identification on a right tree: the two longest centerlines are
// compared by mean distal diameter from their mutual bifurcation; a
// relative difference above 40% designates the smaller one as the acute
// marginal branch (left dominance), otherwise the shared trunk is the RCA
// and the patient is right-dominant or codominant.
ClassificationResult classify_rca(const CoronaryTree& tree, double bif_tol = 0.5);

struct LcaCandidates {
  std::vector<std::size_t> lad;  // anterior-heading centerlines
  std::vector<std::size_t> lcx;  // posterior-heading centerlines
  std::optional<Bifurcation> lmca_bifurcation;
  std::vector<Vec3> v_o;  // per centerline, bifurcation -> distal center of mass
};

// Splits a left tree into candidate LAD / LCx sets by the alignment of
// each branch's direction vector with the anterior or posterior axis.
LcaCandidates split_lca_candidates(const CoronaryTree& tree, double bif_tol = 0.5);

// Among anterior candidates longer than min_length (80 mm), walks the
// divergence nodes proximal to distal and keeps, at each node, the
// centerline with maximal tangent cosine similarity among those splitting
// there. Returns nullopt if every candidate fails the length filter.
std::optional<std::size_t> classify_lad(const CoronaryTree& tree,
                                        const LcaCandidates& candidates,
                                        double min_length = 80.0,
                                        double half_kernel = 5.0,
                                        double tol = 0.5);

// Among the two largest-volume posterior candidates, picks the one whose
// direction vector aligns best with the posterior axis.
std::optional<std::size_t> classify_lcx(const CoronaryTree& tree,
                                        const LcaCandidates& candidates);

// Full-tree classification dispatching on side.
ClassificationResult classify_tree(const CoronaryTree& tree, double bif_tol = 0.5);

}  // namespace corsa
