#include "corsa/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "corsa/rng.hpp"

namespace corsa {

void FeatureTable::validate() const {
  const std::size_t n = rows.size();
  if (functional.size() != n || provenance.size() != n)
    throw InvalidInput("feature table arrays must have one entry per row");
  for (const auto& row : rows) {
    if (row.size() != feature_names.size())
      throw InvalidInput("feature row width must match the feature names");
    for (double v : row)
      if (!std::isfinite(v)) throw InvalidInput("feature values must be finite");
  }
  for (const auto& f : functional) {
    if (f.vffr && !(*f.vffr > 0.0 && *f.vffr <= 1.0))
      throw InvalidInput("vFFR must lie in (0, 1]");
    if (f.wss && !(*f.wss >= 0.0)) throw InvalidInput("WSS must be nonnegative");
    if (f.dffr && !std::isfinite(*f.dffr)) throw InvalidInput("dFFR must be finite");
  }
}

std::string to_string(LabelCriterion c) {
  switch (c) {
    case LabelCriterion::FFR: return "FFR";
    case LabelCriterion::WSS: return "WSS";
    case LabelCriterion::DFFR: return "dFFR";
    case LabelCriterion::HRS: return "HRS";
  }
  return "?";
}

LabelCriterion label_criterion_from_string(const std::string& s) {
  if (s == "FFR") return LabelCriterion::FFR;
  if (s == "WSS") return LabelCriterion::WSS;
  if (s == "dFFR" || s == "DFFR") return LabelCriterion::DFFR;
  if (s == "HRS") return LabelCriterion::HRS;
  throw InvalidInput("unknown label criterion: " + s);
}

namespace {

int ffr_label(double vffr) { return vffr <= kVffrThreshold ? 1 : 0; }
int wss_label(double wss) { return wss >= kWssThreshold ? 1 : 0; }
int dffr_label(double dffr) { return dffr >= kDffrThreshold ? 1 : 0; }

}  // namespace

LabelResult label_lesions(const FeatureTable& table, LabelCriterion criterion) {
  table.validate();
  LabelResult out;
  out.criterion = criterion;
  for (std::size_t i = 0; i < table.num_rows(); ++i) {
    const auto& f = table.functional[i];
    const bool needs_all = criterion == LabelCriterion::HRS;
    std::string missing;
    if ((criterion == LabelCriterion::FFR || needs_all) && !f.vffr) missing = "vFFR";
    if ((criterion == LabelCriterion::WSS || needs_all) && !f.wss && missing.empty())
      missing = "WSS";
    if ((criterion == LabelCriterion::DFFR || needs_all) && !f.dffr && missing.empty())
      missing = "dFFR";
    if (!missing.empty()) {
      out.excluded_rows.push_back(i);
      out.flags.push_back("row " + std::to_string(i) + " excluded: missing " + missing);
      continue;
    }
    int label = 0;
    switch (criterion) {
      case LabelCriterion::FFR: label = ffr_label(*f.vffr); break;
      case LabelCriterion::WSS: label = wss_label(*f.wss); break;
      case LabelCriterion::DFFR: label = dffr_label(*f.dffr); break;
      case LabelCriterion::HRS:
        label = ffr_label(*f.vffr) + wss_label(*f.wss) + dffr_label(*f.dffr) >= 2 ? 1 : 0;
        break;
    }
    out.kept_rows.push_back(i);
    out.labels.push_back(label);
  }
  return out;
}

SplitResult stratified_split(const FeatureTable& table, const LabelResult& labeled,
                             std::uint64_t seed, const std::array<double, 3>& ratios) {
  const double rsum = ratios[0] + ratios[1] + ratios[2];
  if (!(ratios[0] > 0.0 && ratios[1] > 0.0 && ratios[2] > 0.0) ||
      std::abs(rsum - 1.0) > 1e-9)
    throw InvalidInput("split ratios must be positive and sum to 1");
  if (labeled.kept_rows.size() != labeled.labels.size())
    throw InvalidInput("labeled rows and labels must align");

  std::size_t pos_total = 0, neg_total = 0;
  for (int y : labeled.labels) (y ? pos_total : neg_total) += 1;
  if (pos_total == 0 || neg_total == 0)
    throw InvalidInput("stratified_split: a class is absent for criterion " +
                       to_string(labeled.criterion));

  SplitResult out;
  if (pos_total < 10)
    out.flags.push_back("fewer than 10 positive rows for " + to_string(labeled.criterion));
  if (neg_total < 10)
    out.flags.push_back("fewer than 10 negative rows for " + to_string(labeled.criterion));

  // Patient groups in deterministic (sorted) order, then seeded shuffles.
  struct Group {
    std::vector<std::size_t> rows;
    std::size_t pos = 0, neg = 0;
  };
  std::map<std::string, Group> by_patient;
  for (std::size_t i = 0; i < labeled.kept_rows.size(); ++i) {
    const std::size_t row = labeled.kept_rows[i];
    Group& g = by_patient[table.provenance[row].patient];
    g.rows.push_back(row);
    (labeled.labels[i] ? g.pos : g.neg) += 1;
  }
  std::vector<Group> mixed, pure_pos, pure_neg;
  for (auto& [patient, g] : by_patient) {
    if (g.pos && g.neg)
      mixed.push_back(std::move(g));
    else if (g.pos)
      pure_pos.push_back(std::move(g));
    else
      pure_neg.push_back(std::move(g));
  }
  Rng rng(seed);
  rng.shuffle(mixed);
  rng.shuffle(pure_pos);
  rng.shuffle(pure_neg);

  // Greedy largest-deficit assignment against the per-class row targets;
  // grouped rows move together, so counts land within one patient of the
  // ideal allocation.
  std::array<double, 3> pos_target{}, neg_target{}, pos_got{}, neg_got{};
  for (int s = 0; s < 3; ++s) {
    pos_target[s] = static_cast<double>(pos_total) * ratios[s];
    neg_target[s] = static_cast<double>(neg_total) * ratios[s];
  }
  std::array<std::vector<std::size_t>*, 3> splits{&out.train, &out.val, &out.test};
  const auto assign = [&](const Group& g, int s) {
    splits[s]->insert(splits[s]->end(), g.rows.begin(), g.rows.end());
    pos_got[s] += static_cast<double>(g.pos);
    neg_got[s] += static_cast<double>(g.neg);
  };
  const auto pick = [&](const Group& g) {
    int best = 0;
    double best_deficit = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < 3; ++s) {
      double d = 0.0;
      if (g.pos) d += pos_target[s] - pos_got[s];
      if (g.neg) d += neg_target[s] - neg_got[s];
      if (d > best_deficit) {
        best_deficit = d;
        best = s;
      }
    }
    return best;
  };
  for (const Group& g : mixed) assign(g, pick(g));
  for (const Group& g : pure_pos) assign(g, pick(g));
  for (const Group& g : pure_neg) assign(g, pick(g));

  for (auto* s : splits) std::sort(s->begin(), s->end());
  return out;
}

namespace {

struct ZScore {
  std::vector<double> mean, std;
};

ZScore fit_zscore(const std::vector<std::vector<double>>& x) {
  const std::size_t n = x.size(), d = x.empty() ? 0 : x[0].size();
  ZScore z;
  z.mean.assign(d, 0.0);
  z.std.assign(d, 1.0);
  for (const auto& row : x)
    for (std::size_t j = 0; j < d; ++j) z.mean[j] += row[j];
  for (std::size_t j = 0; j < d; ++j) z.mean[j] /= static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) {
    double ss = 0.0;
    for (const auto& row : x) ss += (row[j] - z.mean[j]) * (row[j] - z.mean[j]);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    z.std[j] = sd > 1e-12 ? sd : 1.0;
  }
  return z;
}

std::vector<std::vector<double>> apply_zscore(const ZScore& z,
                                              const std::vector<std::vector<double>>& x) {
  std::vector<std::vector<double>> out = x;
  for (auto& row : out)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - z.mean[j]) / z.std[j];
  return out;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// L2 logistic regression by plain gradient descent. Returns coefficients;
// sets `capped` when the iteration limit was hit before the gradient
// tolerance.
std::vector<double> fit_logistic(const std::vector<std::vector<double>>& x,
                                 const std::vector<int>& y, bool& capped) {
  const std::size_t n = x.size(), d = x[0].size();
  constexpr double kL2 = 1.0;
  constexpr int kMaxIter = 5000;
  // Step size from the loss curvature bound: the top eigenvalue of X'X/n
  // (power iteration) caps the logistic Hessian at sigma/4 plus the ridge.
  double sigma = 1.0;
  {
    std::vector<double> v(d, 1.0);
    for (int it = 0; it < 30; ++it) {
      std::vector<double> xv(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) xv[i] += x[i][j] * v[j];
      std::vector<double> nv(d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) nv[j] += x[i][j] * xv[i];
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        nv[j] /= static_cast<double>(n);
        norm += nv[j] * nv[j];
      }
      norm = std::sqrt(norm);
      if (!(norm > 0.0)) break;
      sigma = norm;
      for (std::size_t j = 0; j < d; ++j) v[j] = nv[j] / norm;
    }
  }
  const double lr = 0.95 / (0.25 * sigma + kL2 / static_cast<double>(n));
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  capped = true;
  for (int it = 0; it < kMaxIter; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = b;
      for (std::size_t j = 0; j < d; ++j) z += w[j] * x[i][j];
      const double err = sigmoid(z) - static_cast<double>(y[i]);
      for (std::size_t j = 0; j < d; ++j) gw[j] += err * x[i][j];
      gb += err;
    }
    double gmax = std::abs(gb) / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) {
      gw[j] = (gw[j] + kL2 * w[j]) / static_cast<double>(n);
      gmax = std::max(gmax, std::abs(gw[j]));
    }
    gb /= static_cast<double>(n);
    if (gmax < 1e-8) {
      capped = false;
      break;
    }
    for (std::size_t j = 0; j < d; ++j) w[j] -= lr * gw[j];
    b -= lr * gb;
  }
  return w;
}

}  // namespace

RfeResult rfe_select(const FeatureTable& table, const std::vector<std::size_t>& rows,
                     const std::vector<int>& labels, std::size_t k) {
  table.validate();
  if (rows.empty() || rows.size() != labels.size())
    throw InvalidInput("rfe_select needs aligned, nonempty rows and labels");
  if (k == 0 || k > table.num_features())
    throw InvalidInput("rfe_select needs 1 <= k <= feature count");
  for (std::size_t r : rows)
    if (r >= table.num_rows()) throw InvalidInput("rfe_select: row index out of range");

  std::vector<std::vector<double>> x;
  for (std::size_t r : rows) x.push_back(table.rows[r]);
  const ZScore z = fit_zscore(x);
  const auto xs = apply_zscore(z, x);

  RfeResult out;
  std::vector<std::size_t> active(table.num_features());
  std::iota(active.begin(), active.end(), 0);
  bool ever_capped = false;
  while (active.size() > k) {
    std::vector<std::vector<double>> sub(xs.size(), std::vector<double>(active.size()));
    for (std::size_t i = 0; i < xs.size(); ++i)
      for (std::size_t j = 0; j < active.size(); ++j) sub[i][j] = xs[i][active[j]];
    bool capped = false;
    const std::vector<double> w = fit_logistic(sub, labels, capped);
    ever_capped = ever_capped || capped;
    // Smallest |coefficient| goes; on ties the later column is dropped so
    // the earliest duplicate survives.
    std::size_t drop = 0;
    for (std::size_t j = 1; j < w.size(); ++j)
      if (std::abs(w[j]) <= std::abs(w[drop])) drop = j;
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(drop));
  }
  if (ever_capped)
    out.flags.push_back("rfe: gradient descent hit the 5000 iteration cap");
  out.selected_cols = active;
  for (std::size_t c : active) out.selected_names.push_back(table.feature_names[c]);
  return out;
}

void TrainConfig::validate() const {
  if (epochs <= 0 || !(lr0 > 0.0) || !(gamma > 0.0 && gamma <= 1.0))
    throw InvalidInput("train config needs positive epochs, lr0 and gamma in (0,1]");
  if (hidden_layers < 1 || width < 1)
    throw InvalidInput("train config needs at least one hidden layer and unit");
  const double s = split[0] + split[1] + split[2];
  if (!(split[0] > 0.0 && split[1] > 0.0 && split[2] > 0.0) || std::abs(s - 1.0) > 1e-9)
    throw InvalidInput("train config split must be positive and sum to 1");
  if (k_features == 0) throw InvalidInput("train config needs k_features >= 1");
}

void MlpModel::validate() const {
  if (layers.empty()) throw InvalidInput("model has no layers");
  if (norm_mean.size() != selected_features.size() ||
      norm_std.size() != selected_features.size())
    throw InvalidInput("model normalization must cover the selected features");
  for (double s : norm_std)
    if (!(s > 0.0)) throw InvalidInput("model normalization stds must be positive");
  for (const auto& layer : layers) {
    if (layer.w.size() != layer.b.size()) throw InvalidInput("layer shape mismatch");
    for (const auto& row : layer.w)
      for (double v : row)
        if (!std::isfinite(v)) throw InvalidInput("model weights must be finite");
    for (double v : layer.b)
      if (!std::isfinite(v)) throw InvalidInput("model weights must be finite");
  }
}

LabeledMatrix project(const FeatureTable& table, const std::vector<std::size_t>& rows,
                      const LabelResult& labeled, const std::vector<std::size_t>& cols) {
  std::vector<int> label_of(table.num_rows(), -1);
  for (std::size_t i = 0; i < labeled.kept_rows.size(); ++i)
    label_of[labeled.kept_rows[i]] = labeled.labels[i];
  LabeledMatrix out;
  for (std::size_t r : rows) {
    if (r >= table.num_rows() || label_of[r] < 0)
      throw InvalidInput("project: row " + std::to_string(r) + " is not labeled");
    std::vector<double> v;
    for (std::size_t c : cols) {
      if (c >= table.num_features()) throw InvalidInput("project: column out of range");
      v.push_back(table.rows[r][c]);
    }
    out.x.push_back(std::move(v));
    out.y.push_back(label_of[r]);
  }
  return out;
}

namespace {

struct Forward {
  // Per layer: pre-activation z and post-activation a (a of the last layer
  // is the raw logit).
  std::vector<std::vector<double>> a;
};

Forward forward_pass(const std::vector<MlpLayer>& layers, const std::vector<double>& x) {
  Forward f;
  std::vector<double> cur = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const MlpLayer& ly = layers[l];
    std::vector<double> next(ly.b);
    for (std::size_t o = 0; o < ly.w.size(); ++o)
      for (std::size_t i = 0; i < cur.size(); ++i) next[o] += ly.w[o][i] * cur[i];
    if (l + 1 < layers.size())
      for (double& v : next) v = std::max(0.0, v);  // ReLU on hidden layers
    f.a.push_back(next);
    cur = std::move(next);
  }
  return f;
}

double bce_from_logit(double z, int y) {
  return std::max(z, 0.0) - z * static_cast<double>(y) + std::log1p(std::exp(-std::abs(z)));
}

std::vector<MlpLayer> zero_like(const std::vector<MlpLayer>& layers) {
  std::vector<MlpLayer> g = layers;
  for (auto& ly : g) {
    for (auto& row : ly.w) std::fill(row.begin(), row.end(), 0.0);
    std::fill(ly.b.begin(), ly.b.end(), 0.0);
  }
  return g;
}

}  // namespace

double mlp_loss(const std::vector<MlpLayer>& layers, const std::vector<std::vector<double>>& x,
                const std::vector<int>& y) {
  if (x.size() != y.size() || x.empty()) throw InvalidInput("mlp_loss needs aligned rows");
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    loss += bce_from_logit(forward_pass(layers, x[i]).a.back()[0], y[i]);
  return loss / static_cast<double>(x.size());
}

double mlp_loss_and_gradient(const std::vector<MlpLayer>& layers,
                             const std::vector<std::vector<double>>& x,
                             const std::vector<int>& y, std::vector<MlpLayer>& grad) {
  if (x.size() != y.size() || x.empty()) throw InvalidInput("mlp_loss needs aligned rows");
  grad = zero_like(layers);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Forward f = forward_pass(layers, x[i]);
    const double z = f.a.back()[0];
    loss += bce_from_logit(z, y[i]);

    // Backward: delta of the logit, then through ReLU layers.
    std::vector<double> delta{(sigmoid(z) - static_cast<double>(y[i])) * inv_n};
    for (std::size_t l = layers.size(); l-- > 0;) {
      const std::vector<double>& input = l == 0 ? x[i] : f.a[l - 1];
      MlpLayer& g = grad[l];
      for (std::size_t o = 0; o < delta.size(); ++o) {
        g.b[o] += delta[o];
        for (std::size_t j = 0; j < input.size(); ++j) g.w[o][j] += delta[o] * input[j];
      }
      if (l == 0) break;
      std::vector<double> prev(input.size(), 0.0);
      for (std::size_t o = 0; o < delta.size(); ++o)
        for (std::size_t j = 0; j < input.size(); ++j)
          prev[j] += layers[l].w[o][j] * delta[o];
      // ReLU derivative gates on the previous layer's activation.
      for (std::size_t j = 0; j < input.size(); ++j)
        if (input[j] <= 0.0) prev[j] = 0.0;
      delta = std::move(prev);
    }
  }
  return loss * inv_n;
}

MlpModel train_mlp(const LabeledMatrix& train, const LabeledMatrix& val,
                   const TrainConfig& config, const std::vector<std::string>& feature_names) {
  config.validate();
  if (train.x.empty() || train.x.size() != train.y.size())
    throw InvalidInput("train_mlp needs aligned, nonempty training rows");
  const std::size_t d = train.x[0].size();
  if (feature_names.size() != d)
    throw InvalidInput("train_mlp: feature names must match the matrix width");
  for (const auto& row : train.x)
    if (row.size() != d) throw InvalidInput("train_mlp: ragged training matrix");
  for (int label : train.y)
    if (label != 0 && label != 1) throw InvalidInput("train_mlp needs binary labels");
  if (val.x.size() != val.y.size()) throw InvalidInput("train_mlp: ragged validation set");
  for (const auto& row : val.x)
    if (row.size() != d) throw InvalidInput("train_mlp: ragged validation matrix");

  MlpModel model;
  model.config = config;
  model.selected_features = feature_names;
  const ZScore z = fit_zscore(train.x);
  model.norm_mean = z.mean;
  model.norm_std = z.std;
  const auto xt = apply_zscore(z, train.x);
  const auto xv = apply_zscore(z, val.x);

  // He-style seeded init; biases start at zero.
  Rng rng(config.seed);
  const auto make_layer = [&](std::size_t out, std::size_t in, double gain) {
    MlpLayer ly;
    ly.w.assign(out, std::vector<double>(in));
    ly.b.assign(out, 0.0);
    const double s = std::sqrt(gain / static_cast<double>(in));
    for (auto& row : ly.w)
      for (double& v : row) v = rng.normal() * s;
    return ly;
  };
  std::vector<MlpLayer> layers;
  std::size_t in = d;
  for (int l = 0; l < config.hidden_layers; ++l) {
    layers.push_back(make_layer(static_cast<std::size_t>(config.width), in, 2.0));
    in = static_cast<std::size_t>(config.width);
  }
  layers.push_back(make_layer(1, in, 1.0));

  auto m = zero_like(layers), v = zero_like(layers);
  std::vector<MlpLayer> best = layers;
  double best_val = std::numeric_limits<double>::infinity();
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::vector<MlpLayer> grad;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = mlp_loss_and_gradient(layers, xt, train.y, grad);
    if (!std::isfinite(loss)) throw Error("training diverged: non-finite loss");
    const double lr = config.lr0 * std::pow(config.gamma, epoch);
    const double c1 = 1.0 - std::pow(kBeta1, epoch + 1);
    const double c2 = 1.0 - std::pow(kBeta2, epoch + 1);
    const auto adam = [&](double& theta, double& mm, double& vv, double g) {
      mm = kBeta1 * mm + (1.0 - kBeta1) * g;
      vv = kBeta2 * vv + (1.0 - kBeta2) * g * g;
      theta -= lr * (mm / c1) / (std::sqrt(vv / c2) + kEps);
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t o = 0; o < layers[l].w.size(); ++o) {
        for (std::size_t j = 0; j < layers[l].w[o].size(); ++j)
          adam(layers[l].w[o][j], m[l].w[o][j], v[l].w[o][j], grad[l].w[o][j]);
        adam(layers[l].b[o], m[l].b[o], v[l].b[o], grad[l].b[o]);
      }
    }
    if (!val.x.empty()) {
      const double vloss = mlp_loss(layers, xv, val.y);
      if (!std::isfinite(vloss)) throw Error("training diverged: non-finite loss");
      if (vloss < best_val) {
        best_val = vloss;
        best = layers;
      }
    }
  }
  model.layers = val.x.empty() ? layers : best;
  model.validate();
  return model;
}

double predict(const MlpModel& model, const std::vector<double>& features) {
  model.validate();
  if (features.size() != model.selected_features.size())
    throw InvalidInput("predict: feature vector width mismatch");
  std::vector<double> zrow(features.size());
  for (std::size_t j = 0; j < features.size(); ++j)
    zrow[j] = (features[j] - model.norm_mean[j]) / model.norm_std[j];
  const double logit = forward_pass(model.layers, zrow).a.back()[0];
  return std::clamp(sigmoid(logit), 1e-15, 1.0 - 1e-15);
}

double predict(const MlpModel& model, const FeatureTable& table, std::size_t row) {
  if (row >= table.num_rows()) throw InvalidInput("predict: row out of range");
  std::vector<double> v;
  for (const std::string& name : model.selected_features) {
    const auto it =
        std::find(table.feature_names.begin(), table.feature_names.end(), name);
    if (it == table.feature_names.end())
      throw InvalidInput("predict: missing feature " + name);
    v.push_back(table.rows[row][static_cast<std::size_t>(
        std::distance(table.feature_names.begin(), it))]);
  }
  return predict(model, v);
}

Metrics evaluate(const std::vector<double>& probabilities, const std::vector<int>& labels) {
  const std::size_t n = probabilities.size();
  if (n == 0 || labels.size() != n)
    throw InvalidInput("evaluate needs aligned, nonempty inputs");
  for (double p : probabilities)
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("probabilities must lie in [0, 1]");
  for (int y : labels)
    if (y != 0 && y != 1) throw InvalidInput("labels must be binary");

  Metrics out;
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  double lsum = 0.0, lsq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int pred = probabilities[i] >= 0.5 ? 1 : 0;
    if (pred == labels[i]) ++correct;
    if (pred == 1 && labels[i] == 1) ++tp;
    if (pred == 1 && labels[i] == 0) ++fp;
    if (pred == 0 && labels[i] == 1) ++fn;
    const double p = std::clamp(probabilities[i], 1e-12, 1.0 - 1e-12);
    const double l = labels[i] ? -std::log(p) : -std::log1p(-p);
    lsum += l;
    lsq += l * l;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  const double den = static_cast<double>(2 * tp + fp + fn);
  out.f1 = den == 0.0 ? 1.0 : 2.0 * static_cast<double>(tp) / den;
  out.loss_mean = lsum / static_cast<double>(n);
  out.loss_std = std::sqrt(std::max(0.0, lsq / static_cast<double>(n) -
                                             out.loss_mean * out.loss_mean));

  const std::size_t pos = static_cast<std::size_t>(
      std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) {
    out.flags.push_back("auc undefined: single-class labels");
    return out;
  }
  // Midrank formulation; equal scores share rank, which credits ties 0.5.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return probabilities[a] < probabilities[b];
  });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && probabilities[order[j + 1]] == probabilities[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  double rpos = 0.0;
  for (std::size_t idx = 0; idx < n; ++idx)
    if (labels[idx] == 1) rpos += rank[idx];
  out.auc = (rpos - static_cast<double>(pos) * (pos + 1) / 2.0) /
            (static_cast<double>(pos) * static_cast<double>(neg));
  return out;
}

}  // namespace corsa
