#include "corsa/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace corsa {

namespace {

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  const double len2 = d.norm2();
  if (len2 == 0.0) return (p - a).norm();
  double t = (p - a).dot(d) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + d * t)).norm();
}

double point_polyline_distance(const Vec3& p, const Centerline& c) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j + 1 < c.points.size(); ++j)
    best = std::min(best, point_segment_distance(p, c.points[j], c.points[j + 1]));
  return best;
}

// Last index of the contiguous run from the ostium where `a` stays within
// tol of `b`. Empty when the centerlines are apart already at index 0.
std::optional<std::size_t> shared_prefix_end(const Centerline& a, const Centerline& b,
                                             double tol) {
  std::optional<std::size_t> last;
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    if (point_polyline_distance(a.points[i], b) > tol) break;
    last = i;
  }
  return last;
}

Vec3 distal_center_of_mass(const Centerline& c, double abscissa) {
  Vec3 sum{0, 0, 0};
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.abscissa[i] > abscissa) {
      sum += c.points[i];
      ++n;
    }
  }
  if (n == 0) return c.points.back();
  return sum / static_cast<double>(n);
}

double mean_distal_diameter(const Centerline& c, double abscissa) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.abscissa[i] > abscissa) {
      sum += 2.0 * c.radius[i];
      ++n;
    }
  }
  if (n == 0) return 2.0 * c.radius.back();
  return sum / static_cast<double>(n);
}

// The two longest centerlines, longest first; ties resolved by index.
std::pair<std::size_t, std::size_t> two_longest(const CoronaryTree& tree) {
  std::vector<std::size_t> order(tree.centerlines.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return tree.centerlines[i].length() > tree.centerlines[j].length();
  });
  return {order[0], order[1]};
}

}  // namespace

std::size_t Centerline::index_at(double s) const {
  const auto it = std::lower_bound(abscissa.begin(), abscissa.end(), s);
  if (it == abscissa.begin()) return 0;
  if (it == abscissa.end()) return abscissa.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - abscissa.begin());
  return (s - abscissa[hi - 1] <= abscissa[hi] - s) ? hi - 1 : hi;
}

Vec3 Centerline::position_at(double s) const {
  if (s <= abscissa.front()) return points.front();
  if (s >= abscissa.back()) return points.back();
  const auto it = std::upper_bound(abscissa.begin(), abscissa.end(), s);
  const std::size_t hi = static_cast<std::size_t>(it - abscissa.begin());
  const double t = (s - abscissa[hi - 1]) / (abscissa[hi] - abscissa[hi - 1]);
  return points[hi - 1] + (points[hi] - points[hi - 1]) * t;
}

double Centerline::radius_at(double s) const {
  if (s <= abscissa.front()) return radius.front();
  if (s >= abscissa.back()) return radius.back();
  const auto it = std::upper_bound(abscissa.begin(), abscissa.end(), s);
  const std::size_t hi = static_cast<std::size_t>(it - abscissa.begin());
  const double t = (s - abscissa[hi - 1]) / (abscissa[hi] - abscissa[hi - 1]);
  return radius[hi - 1] + (radius[hi] - radius[hi - 1]) * t;
}

std::string to_string(BranchLabel label) {
  switch (label) {
    case BranchLabel::RCA: return "RCA";
    case BranchLabel::LAD: return "LAD";
    case BranchLabel::LCx: return "LCx";
    case BranchLabel::AMB: return "AMB";
    case BranchLabel::PDA_PLB: return "PDA_PLB";
    case BranchLabel::UNCLASSIFIED: return "UNCLASSIFIED";
  }
  return "UNCLASSIFIED";
}

std::string to_string(Dominance d) {
  switch (d) {
    case Dominance::left: return "left";
    case Dominance::right_or_codominant: return "right_or_codominant";
    case Dominance::unknown: return "unknown";
  }
  return "unknown";
}

BranchLabel branch_label_from_string(const std::string& s) {
  if (s == "RCA") return BranchLabel::RCA;
  if (s == "LAD") return BranchLabel::LAD;
  if (s == "LCx") return BranchLabel::LCx;
  if (s == "AMB") return BranchLabel::AMB;
  if (s == "PDA_PLB") return BranchLabel::PDA_PLB;
  if (s == "UNCLASSIFIED") return BranchLabel::UNCLASSIFIED;
  throw InvalidInput("unknown branch label: " + s);
}

std::optional<std::size_t> ClassificationResult::index_of(BranchLabel label) const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return i;
  return std::nullopt;
}

std::vector<double> arc_length_parameterize(const std::vector<Vec3>& points) {
  if (points.size() < 2) throw InvalidInput("centerline needs at least 2 points");
  std::vector<double> abscissa(points.size());
  abscissa[0] = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double step = (points[i] - points[i - 1]).norm();
    if (step == 0.0)
      throw InvalidInput("degenerate geometry: duplicate consecutive centerline points");
    abscissa[i] = abscissa[i - 1] + step;
  }
  return abscissa;
}

Centerline make_centerline(std::vector<Vec3> points, std::vector<double> radius) {
  if (points.size() != radius.size())
    throw InvalidInput("centerline points/radius size mismatch");
  for (double r : radius)
    if (!(r > 0.0)) throw InvalidInput("centerline radii must be positive");
  Centerline c;
  c.abscissa = arc_length_parameterize(points);
  c.points = std::move(points);
  c.radius = std::move(radius);
  const std::size_t n = c.points.size();
  c.tangents.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = (i == 0) ? 0 : i - 1;
    const std::size_t hi = (i + 1 == n) ? i : i + 1;
    c.tangents[i] = (c.points[hi] - c.points[lo]).normalized();
  }
  return c;
}

std::pair<Vec3, Vec3> kernel_tangent(const Centerline& c, std::size_t i,
                                     double half_kernel) {
  if (i >= c.size()) throw InvalidInput("kernel_tangent: index out of range");
  const double s = c.abscissa[i];
  const auto window_average = [&](double lo, double hi) -> std::optional<Vec3> {
    Vec3 sum{0, 0, 0};
    double support = 0.0;
    for (std::size_t j = 0; j + 1 < c.size(); ++j) {
      const double a = c.abscissa[j], b = c.abscissa[j + 1];
      const double overlap = std::min(b, hi) - std::max(a, lo);
      if (overlap <= 0.0) continue;
      sum += (c.points[j + 1] - c.points[j]).normalized() * overlap;
      support += overlap;
    }
    if (support == 0.0) return std::nullopt;
    return sum.normalized();
  };
  const auto up = window_average(s - half_kernel, s);
  const auto down = window_average(s, s + half_kernel);
  if (!up || !down)
    throw InvalidInput("kernel_tangent: insufficient support around node");
  return {*up, *down};
}

std::vector<Bifurcation> find_bifurcations(const CoronaryTree& tree, double tol) {
  struct Node {
    Vec3 position;
    double abscissa;
    std::vector<std::size_t> members;
  };
  std::vector<Node> nodes;
  const std::size_t k = tree.centerlines.size();
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const auto end = shared_prefix_end(tree.centerlines[a], tree.centerlines[b], tol);
      if (!end) continue;
      nodes.push_back({tree.centerlines[a].points[*end],
                       tree.centerlines[a].abscissa[*end],
                       {a, b}});
    }
  }
  std::stable_sort(nodes.begin(), nodes.end(),
                   [](const Node& x, const Node& y) { return x.abscissa < y.abscissa; });
  std::vector<Bifurcation> out;
  for (const Node& node : nodes) {
    bool merged = false;
    for (Bifurcation& bif : out) {
      if ((bif.position - node.position).norm() <= tol) {
        for (std::size_t m : node.members)
          if (std::find(bif.centerlines.begin(), bif.centerlines.end(), m) ==
              bif.centerlines.end())
            bif.centerlines.push_back(m);
        merged = true;
        break;
      }
    }
    if (!merged) out.push_back({node.position, node.abscissa, node.members});
  }
  for (Bifurcation& bif : out) std::sort(bif.centerlines.begin(), bif.centerlines.end());
  return out;
}

double centerline_volume(const Centerline& c) {
  double v = 0.0;
  for (std::size_t i = 0; i + 1 < c.size(); ++i)
    v += M_PI * c.radius[i] * c.radius[i] * (c.abscissa[i + 1] - c.abscissa[i]);
  return v;
}

ClassificationResult classify_rca(const CoronaryTree& tree, double bif_tol) {
  if (tree.centerlines.empty()) throw InvalidInput("classify_rca: empty tree");
  ClassificationResult res;
  res.labels.assign(tree.centerlines.size(), BranchLabel::UNCLASSIFIED);
  if (tree.centerlines.size() == 1) {
    res.labels[0] = BranchLabel::RCA;
    res.dominance = Dominance::unknown;
    return res;
  }
  const auto [i1, i2] = two_longest(tree);
  const auto end =
      shared_prefix_end(tree.centerlines[i1], tree.centerlines[i2], bif_tol);
  double bif_abscissa = 0.0;
  if (end) {
    bif_abscissa = tree.centerlines[i1].abscissa[*end];
  } else {
    res.flags.push_back("rca: no mutual bifurcation between two longest centerlines");
  }
  const double d1 = mean_distal_diameter(tree.centerlines[i1], bif_abscissa);
  const double d2 = mean_distal_diameter(tree.centerlines[i2], bif_abscissa);
  const double larger = std::max(d1, d2);
  const double rel_diff = std::abs(d1 - d2) / larger;
  if (rel_diff > 0.40) {
    const std::size_t rca = (d1 >= d2) ? i1 : i2;
    const std::size_t amb = (d1 >= d2) ? i2 : i1;
    res.labels[rca] = BranchLabel::RCA;
    res.labels[amb] = BranchLabel::AMB;
    res.dominance = Dominance::left;
  } else {
    res.labels[i1] = BranchLabel::RCA;
    res.labels[i2] = BranchLabel::PDA_PLB;
    res.dominance = Dominance::right_or_codominant;
    res.rca_end_abscissa = bif_abscissa;
  }
  return res;
}

LcaCandidates split_lca_candidates(const CoronaryTree& tree, double bif_tol) {
  if (tree.centerlines.empty()) throw InvalidInput("split_lca_candidates: empty tree");
  LcaCandidates out;
  const auto bifs = find_bifurcations(tree, bif_tol);
  Vec3 p_bif = tree.ostium;
  double bif_abscissa = 0.0;
  if (!bifs.empty()) {
    out.lmca_bifurcation = bifs.front();
    p_bif = bifs.front().position;
    bif_abscissa = bifs.front().abscissa;
  }
  out.v_o.resize(tree.centerlines.size());
  for (std::size_t i = 0; i < tree.centerlines.size(); ++i) {
    const Vec3 cm = distal_center_of_mass(tree.centerlines[i], bif_abscissa);
    const Vec3 v = cm - p_bif;
    out.v_o[i] = v;
    const double anterior = v.dot(kAnterior) / v.norm();
    const double posterior = v.dot(kPosterior) / v.norm();
    if (anterior >= posterior)
      out.lad.push_back(i);
    else
      out.lcx.push_back(i);
  }
  return out;
}

std::optional<std::size_t> classify_lad(const CoronaryTree& tree,
                                        const LcaCandidates& candidates,
                                        double min_length, double half_kernel,
                                        double tol) {
  std::vector<std::size_t> survivors;
  for (std::size_t i : candidates.lad)
    if (tree.centerlines[i].length() >= min_length) survivors.push_back(i);
  if (survivors.empty()) return std::nullopt;

  // Walk divergence nodes proximal to distal. Only candidates that split
  // from each other at a node compete there; paths still running together
  // are left alone until their own divergence point.
  const auto divergence_abscissa = [&](std::size_t a, std::size_t b) {
    const auto end = shared_prefix_end(tree.centerlines[a], tree.centerlines[b], tol);
    return end ? tree.centerlines[a].abscissa[*end] : 0.0;
  };
  while (survivors.size() > 1) {
    double s_node = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < survivors.size(); ++a)
      for (std::size_t b = a + 1; b < survivors.size(); ++b)
        s_node = std::min(s_node, divergence_abscissa(survivors[a], survivors[b]));

    std::vector<std::size_t> group;
    for (std::size_t a = 0; a < survivors.size(); ++a)
      for (std::size_t b = a + 1; b < survivors.size(); ++b)
        if (divergence_abscissa(survivors[a], survivors[b]) <= s_node + tol) {
          for (std::size_t i : {survivors[a], survivors[b]})
            if (std::find(group.begin(), group.end(), i) == group.end()) group.push_back(i);
        }

    double best_sc = -std::numeric_limits<double>::infinity();
    std::size_t best = group.front();
    for (std::size_t i : group) {
      const Centerline& c = tree.centerlines[i];
      double sc = -std::numeric_limits<double>::infinity();
      try {
        const auto [t_up, t_down] = kernel_tangent(c, c.index_at(s_node), half_kernel);
        sc = t_up.dot(t_down);
      } catch (const InvalidInput&) {
        // node too close to an endpoint; treat as worst continuation
      }
      if (sc > best_sc) {
        best_sc = sc;
        best = i;
      }
    }
    std::erase_if(survivors, [&](std::size_t i) {
      return i != best && std::find(group.begin(), group.end(), i) != group.end();
    });
  }
  return survivors.front();
}

std::optional<std::size_t> classify_lcx(const CoronaryTree& tree,
                                        const LcaCandidates& candidates) {
  if (candidates.lcx.empty()) return std::nullopt;
  std::vector<std::size_t> order = candidates.lcx;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return centerline_volume(tree.centerlines[i]) > centerline_volume(tree.centerlines[j]);
  });
  if (order.size() > 2) order.resize(2);
  std::size_t best = order.front();
  double best_align = -std::numeric_limits<double>::infinity();
  for (std::size_t i : order) {
    const Vec3& v = candidates.v_o[i];
    const double align = v.dot(kPosterior) / v.norm();
    if (align > best_align) {
      best_align = align;
      best = i;
    }
  }
  return best;
}

ClassificationResult classify_tree(const CoronaryTree& tree, double bif_tol) {
  if (tree.side == Side::right) return classify_rca(tree, bif_tol);

  ClassificationResult res;
  res.labels.assign(tree.centerlines.size(), BranchLabel::UNCLASSIFIED);
  const LcaCandidates candidates = split_lca_candidates(tree, bif_tol);
  if (candidates.lmca_bifurcation)
    res.lm_end_abscissa = candidates.lmca_bifurcation->abscissa;
  else
    res.lm_end_abscissa = 0.0;

  const auto lad = classify_lad(tree, candidates);
  const auto lcx = classify_lcx(tree, candidates);
  if (lad)
    res.labels[*lad] = BranchLabel::LAD;
  else {
    res.failed = true;
    res.flags.push_back("lad: no candidate passed the 80 mm length filter");
  }
  if (lcx)
    res.labels[*lcx] = BranchLabel::LCx;
  else {
    res.failed = true;
    res.flags.push_back("lcx: no posterior candidate");
  }
  return res;
}

}  // namespace corsa
