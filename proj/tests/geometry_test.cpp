#include <doctest.h>

#include <cmath>
#include <vector>

#include "corsa/geometry.hpp"
#include "corsa/rng.hpp"

using namespace corsa;

namespace {

// Straight polyline from `from` along unit `dir`, n points, step mm apart.
std::vector<Vec3> straight(const Vec3& from, const Vec3& dir, std::size_t n, double step) {
  const Vec3 u = dir.normalized();
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back(from + u * (step * static_cast<double>(i)));
  return pts;
}

Centerline straight_centerline(const Vec3& from, const Vec3& dir, double length, double step,
                               double r) {
  const std::size_t n = static_cast<std::size_t>(std::llround(length / step)) + 1;
  return make_centerline(straight(from, dir, n, step), std::vector<double>(n, r));
}

// Shared trunk along +z to `split_mm`, then a branch along `branch_dir`.
// Radii switch from r_trunk to r_branch past the split.
Centerline branched_centerline(double split_mm, const Vec3& branch_dir, double branch_len,
                               double step, double r_trunk, double r_branch) {
  std::vector<Vec3> pts;
  std::vector<double> radii;
  const std::size_t n_trunk = static_cast<std::size_t>(std::llround(split_mm / step));
  for (std::size_t i = 0; i <= n_trunk; ++i) {
    pts.push_back({0.0, 0.0, step * static_cast<double>(i)});
    radii.push_back(r_trunk);
  }
  const Vec3 u = branch_dir.normalized();
  const Vec3 fork = pts.back();
  const std::size_t n_branch = static_cast<std::size_t>(std::llround(branch_len / step));
  for (std::size_t i = 1; i <= n_branch; ++i) {
    pts.push_back(fork + u * (step * static_cast<double>(i)));
    radii.push_back(r_branch);
  }
  return make_centerline(pts, radii);
}

CoronaryTree rotated(const CoronaryTree& tree, const Mat3& rot) {
  CoronaryTree out = tree;
  out.ostium = rot * tree.ostium;
  for (Centerline& c : out.centerlines) {
    std::vector<Vec3> pts;
    for (const Vec3& p : c.points) pts.push_back(rot * p);
    c = make_centerline(pts, c.radius);
  }
  out.bifurcations.clear();
  return out;
}

CoronaryTree scaled(const CoronaryTree& tree, double s) {
  CoronaryTree out = tree;
  out.ostium = tree.ostium * s;
  for (Centerline& c : out.centerlines) {
    std::vector<Vec3> pts;
    std::vector<double> radii;
    for (const Vec3& p : c.points) pts.push_back(p * s);
    for (double r : c.radius) radii.push_back(r * s);
    c = make_centerline(pts, radii);
  }
  out.bifurcations.clear();
  return out;
}

}  // namespace

TEST_CASE("arc length of an equispaced straight segment") {
  const auto abscissa = arc_length_parameterize(straight({0, 0, 0}, {0, 0, 1}, 11, 1.0));
  for (std::size_t i = 0; i < 11; ++i)
    CHECK(abscissa[i] == doctest::Approx(static_cast<double>(i)).epsilon(1e-12));
}

TEST_CASE("degenerate polylines are rejected") {
  CHECK_THROWS_AS(arc_length_parameterize({{1, 2, 3}}), InvalidInput);
  CHECK_THROWS_AS(arc_length_parameterize({{0, 0, 0}, {0, 0, 0}, {0, 0, 1}}), InvalidInput);
}

TEST_CASE("arc length equals the pairwise-distance sum on random polylines") {
  Rng rng(101);
  std::vector<Vec3> pts;
  Vec3 p{0, 0, 0};
  for (int i = 0; i < 50; ++i) {
    pts.push_back(p);
    p += {rng.uniform(0.2, 1.5), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  }
  const auto abscissa = arc_length_parameterize(pts);
  double total = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double dx = pts[i].x - pts[i - 1].x;
    const double dy = pts[i].y - pts[i - 1].y;
    const double dz = pts[i].z - pts[i - 1].z;
    total += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  CHECK(abscissa.back() == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("make_centerline validates and produces unit tangents") {
  CHECK_THROWS_AS(make_centerline(straight({0, 0, 0}, {1, 0, 0}, 5, 1.0), {1, 1, 1, 1}),
                  InvalidInput);
  CHECK_THROWS_AS(make_centerline(straight({0, 0, 0}, {1, 0, 0}, 5, 1.0), {1, 1, 0, 1, 1}),
                  InvalidInput);
  const Centerline c = straight_centerline({0, 0, 0}, {0, 0, 1}, 10, 0.5, 2.0);
  for (const Vec3& t : c.tangents) {
    CHECK(t.norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(t.z == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("interpolation along a centerline") {
  const Centerline c =
      make_centerline({{0, 0, 0}, {0, 0, 2}, {0, 0, 3}}, {1.0, 2.0, 4.0});
  CHECK(c.position_at(1.0).z == doctest::Approx(1.0));
  CHECK(c.radius_at(2.5) == doctest::Approx(3.0));
  CHECK(c.radius_at(-1.0) == 1.0);
  CHECK(c.radius_at(99.0) == 4.0);
  CHECK(c.index_at(1.9) == 1);
  CHECK(c.index_at(0.2) == 0);
  CHECK(c.index_at(99.0) == 2);
  CHECK(c.length() == doctest::Approx(3.0));
}

TEST_CASE("kernel tangents on a straight line agree") {
  const Centerline c = straight_centerline({0, 0, 0}, {0, 0, 1}, 30, 0.5, 2.0);
  const auto [up, down] = kernel_tangent(c, c.index_at(15.0));
  CHECK(cosine_similarity(up, down) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(up.z == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kernel tangents straddle a right-angle bend") {
  std::vector<Vec3> pts = straight({0, 0, 0}, {0, 0, 1}, 101, 0.1);
  const std::vector<Vec3> arm = straight({0, 0.1, 10}, {0, 1, 0}, 100, 0.1);
  pts.insert(pts.end(), arm.begin(), arm.end());
  const Centerline c = make_centerline(pts, std::vector<double>(pts.size(), 1.0));
  const auto [up, down] = kernel_tangent(c, 100);
  CHECK(std::abs(cosine_similarity(up, down)) < 1e-6);
}

TEST_CASE("kernel tangent needs support on both sides") {
  const Centerline c = straight_centerline({0, 0, 0}, {0, 0, 1}, 30, 0.5, 2.0);
  CHECK_THROWS_AS(kernel_tangent(c, 0), InvalidInput);
  CHECK_THROWS_AS(kernel_tangent(c, c.size() - 1), InvalidInput);
}

TEST_CASE("kernel tangent cosine on a circular arc matches chord geometry") {
  const double R = 30.0;
  std::vector<Vec3> pts;
  std::vector<double> radii;
  for (int k = 0; k <= 300; ++k) {
    const double theta = static_cast<double>(k) * (0.1 / R);
    pts.push_back({R * std::sin(theta), 0.0, R * (1.0 - std::cos(theta))});
    radii.push_back(1.5);
  }
  const Centerline c = make_centerline(pts, radii);
  const auto [up, down] = kernel_tangent(c, c.index_at(15.0));
  // Averaged window tangents are chord directions; the two chords of 5 mm
  // windows on a circle of radius R subtend an angle of 5/R.
  CHECK(cosine_similarity(up, down) == doctest::Approx(std::cos(5.0 / R)).epsilon(1e-3));
}

TEST_CASE("bifurcation found where prefixes diverge") {
  CoronaryTree tree;
  tree.side = Side::right;
  tree.centerlines.push_back(straight_centerline({0, 0, 0}, {0, 0, 1}, 40, 0.5, 2.0));
  tree.centerlines.push_back(branched_centerline(20.0, {0.6, 0, 0.8}, 20.0, 0.5, 2.0, 1.5));
  const auto bifs = find_bifurcations(tree);
  REQUIRE(bifs.size() == 1);
  CHECK(std::abs(bifs[0].abscissa - 20.0) <= 0.5 + 1e-9);
  CHECK(bifs[0].centerlines == std::vector<std::size_t>{0, 1});
}

TEST_CASE("single centerline has no bifurcations") {
  CoronaryTree tree;
  tree.centerlines.push_back(straight_centerline({0, 0, 0}, {0, 0, 1}, 40, 0.5, 2.0));
  CHECK(find_bifurcations(tree).empty());
}

TEST_CASE("tube volume of a constant-radius cylinder") {
  const Centerline c = straight_centerline({0, 0, 0}, {1, 0, 0}, 10, 0.25, 1.5);
  CHECK(centerline_volume(c) == doctest::Approx(M_PI * 1.5 * 1.5 * 10.0).epsilon(1e-12));
}

TEST_CASE("rca classification: equal distal calibers mean right or codominant") {
  CoronaryTree tree;
  tree.side = Side::right;
  tree.centerlines.push_back(branched_centerline(60.0, {0, 0, 1}, 100.0, 1.0, 2.0, 1.5));
  tree.centerlines.push_back(branched_centerline(60.0, {0.7, 0, 0.714}, 60.0, 1.0, 2.0, 1.5));
  const auto res = classify_rca(tree);
  CHECK(res.dominance == Dominance::right_or_codominant);
  CHECK(res.labels[0] == BranchLabel::RCA);
  CHECK(res.labels[1] == BranchLabel::PDA_PLB);
  REQUIRE(res.rca_end_abscissa.has_value());
  CHECK(std::abs(*res.rca_end_abscissa - 60.0) <= 1.0 + 1e-9);
  CHECK_FALSE(res.failed);
}

TEST_CASE("rca classification: caliber gap means left dominance") {
  CoronaryTree tree;
  tree.side = Side::right;
  tree.centerlines.push_back(branched_centerline(60.0, {0, 0, 1}, 100.0, 1.0, 2.0, 0.6));
  tree.centerlines.push_back(branched_centerline(60.0, {0.7, 0, 0.714}, 60.0, 1.0, 2.0, 1.5));
  const auto res = classify_rca(tree);
  CHECK(res.dominance == Dominance::left);
  CHECK(res.labels[1] == BranchLabel::RCA);  // larger distal caliber
  CHECK(res.labels[0] == BranchLabel::AMB);
  CHECK_FALSE(res.rca_end_abscissa.has_value());
}

TEST_CASE("solitary right centerline is the RCA with unknown dominance") {
  CoronaryTree tree;
  tree.side = Side::right;
  tree.centerlines.push_back(straight_centerline({0, 0, 0}, {0, 0, 1}, 80, 1.0, 2.0));
  const auto res = classify_rca(tree);
  CHECK(res.labels[0] == BranchLabel::RCA);
  CHECK(res.dominance == Dominance::unknown);
}

TEST_CASE("empty tree is rejected") {
  CHECK_THROWS_AS(classify_rca(CoronaryTree{}), InvalidInput);
  CHECK_THROWS_AS(split_lca_candidates(CoronaryTree{}), InvalidInput);
}

namespace {

// Left tree: 10 mm left-main trunk along +x, an anterior LAD, a posterior
// LCx and optionally a long second anterior branch splitting at 40 mm.
CoronaryTree left_tree(bool with_second_anterior, double lad_len = 110.0,
                       double step = 0.5) {
  CoronaryTree tree;
  tree.side = Side::left;
  tree.ostium = {0, 0, 0};
  const Vec3 lad_dir = Vec3{0.3, -0.9, 0.1}.normalized();
  const Vec3 lcx_dir = Vec3{0.2, 0.95, -0.1}.normalized();

  auto with_trunk = [&](const Vec3& dir, double len, double r) {
    std::vector<Vec3> pts;
    std::vector<double> radii;
    const std::size_t n_trunk = static_cast<std::size_t>(std::llround(10.0 / step));
    for (std::size_t i = 0; i <= n_trunk; ++i) {
      pts.push_back({step * static_cast<double>(i), 0, 0});
      radii.push_back(3.0);
    }
    const Vec3 fork = pts.back();
    const std::size_t n = static_cast<std::size_t>(std::llround(len / step));
    for (std::size_t i = 1; i <= n; ++i) {
      pts.push_back(fork + dir * (step * static_cast<double>(i)));
      radii.push_back(r);
    }
    return make_centerline(pts, radii);
  };

  tree.centerlines.push_back(with_trunk(lad_dir, lad_len, 2.0));  // 0: LAD
  tree.centerlines.push_back(with_trunk(lcx_dir, 70.0, 1.8));     // 1: LCx
  if (with_second_anterior) {
    // Shares the LAD path to abscissa 40, then bends but stays anterior.
    const Centerline& lad = tree.centerlines[0];
    std::vector<Vec3> pts;
    std::vector<double> radii;
    std::size_t split = lad.index_at(40.0);
    for (std::size_t i = 0; i <= split; ++i) {
      pts.push_back(lad.points[i]);
      radii.push_back(lad.radius[i]);
    }
    const Vec3 diag_dir = Vec3{0.8, -0.55, 0.24}.normalized();
    const std::size_t n = static_cast<std::size_t>(std::llround(70.0 / step));
    for (std::size_t i = 1; i <= n; ++i) {
      pts.push_back(pts[split] + diag_dir * (step * static_cast<double>(i)));
      radii.push_back(1.2);
    }
    tree.centerlines.push_back(make_centerline(pts, radii));  // 2: diagonal
  }
  return tree;
}

}  // namespace

TEST_CASE("left candidates split by anterior vs posterior heading") {
  const CoronaryTree tree = left_tree(false);
  const auto cand = split_lca_candidates(tree);
  CHECK(cand.lad == std::vector<std::size_t>{0});
  CHECK(cand.lcx == std::vector<std::size_t>{1});
  REQUIRE(cand.lmca_bifurcation.has_value());
  CHECK(std::abs(cand.lmca_bifurcation->abscissa - 10.0) <= 0.5 + 1e-9);
}

TEST_CASE("lad selection walks bifurcations by tangent smoothness") {
  const CoronaryTree tree = left_tree(true);
  const auto cand = split_lca_candidates(tree);
  REQUIRE(cand.lad.size() == 2);  // LAD and the long diagonal
  const auto lad = classify_lad(tree, cand);
  REQUIRE(lad.has_value());
  CHECK(*lad == 0);
}

TEST_CASE("short anterior branches fail the length filter") {
  const CoronaryTree tree = left_tree(false, 60.0);
  const auto cand = split_lca_candidates(tree);
  CHECK_FALSE(classify_lad(tree, cand).has_value());
  const auto res = classify_tree(tree);
  CHECK(res.failed);
  CHECK_FALSE(res.flags.empty());
  CHECK(res.labels[1] == BranchLabel::LCx);  // LCx still resolved
}

TEST_CASE("lcx picks the most posterior of the two largest candidates") {
  CoronaryTree tree;
  tree.side = Side::left;
  tree.ostium = {0, 0, 0};
  tree.centerlines.push_back(
      straight_centerline({0, 0, 0}, {0.5, 0.866, 0}, 60, 0.5, 1.8));
  tree.centerlines.push_back(straight_centerline({0, 0, 0}, {0.05, 1, 0}, 60, 0.5, 1.8));
  const auto cand = split_lca_candidates(tree);
  REQUIRE(cand.lcx.size() == 2);
  const auto lcx = classify_lcx(tree, cand);
  REQUIRE(lcx.has_value());
  CHECK(*lcx == 1);
}

TEST_CASE("full left-tree classification") {
  const CoronaryTree tree = left_tree(true);
  const auto res = classify_tree(tree);
  CHECK_FALSE(res.failed);
  CHECK(res.labels[0] == BranchLabel::LAD);
  CHECK(res.labels[1] == BranchLabel::LCx);
  CHECK(res.labels[2] == BranchLabel::UNCLASSIFIED);
  REQUIRE(res.lm_end_abscissa.has_value());
  CHECK(std::abs(*res.lm_end_abscissa - 10.0) <= 0.5 + 1e-9);
  CHECK(res.index_of(BranchLabel::LAD) == std::size_t{0});
  CHECK_FALSE(res.index_of(BranchLabel::RCA).has_value());
}

TEST_CASE("rca labels survive rigid rotation and uniform scaling") {
  CoronaryTree tree;
  tree.side = Side::right;
  tree.centerlines.push_back(branched_centerline(60.0, {0, 0, 1}, 100.0, 1.0, 2.0, 1.5));
  tree.centerlines.push_back(branched_centerline(60.0, {0.7, 0, 0.714}, 60.0, 1.0, 2.0, 1.5));
  const auto base = classify_rca(tree);
  const auto rot = classify_rca(rotated(tree, Mat3::axis_angle({1, 2, 3}, 1.1)));
  const auto scl = classify_rca(scaled(tree, 3.0));
  CHECK(rot.labels == base.labels);
  CHECK(rot.dominance == base.dominance);
  CHECK(scl.labels == base.labels);
  CHECK(scl.dominance == base.dominance);
}

TEST_CASE("left labels survive rotations about the A/P axis and scaling") {
  const CoronaryTree tree = left_tree(true);
  const auto base = classify_tree(tree);
  const auto rot = classify_tree(rotated(tree, Mat3::axis_angle({0, 1, 0}, 0.8)));
  const auto scl = classify_tree(scaled(tree, 2.5));
  CHECK(rot.labels == base.labels);
  CHECK(scl.labels == base.labels);
}

TEST_CASE("branch label strings round-trip") {
  for (BranchLabel l : {BranchLabel::RCA, BranchLabel::LAD, BranchLabel::LCx, BranchLabel::AMB,
                        BranchLabel::PDA_PLB, BranchLabel::UNCLASSIFIED})
    CHECK(branch_label_from_string(to_string(l)) == l);
  CHECK_THROWS_AS(branch_label_from_string("bogus"), InvalidInput);
}
