#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "corsa/common.hpp"

namespace corsa {

// Per-lesion feature rows with the functional reference measurements and
// provenance needed for labeling and leakage-free splitting.
struct FeatureTable {
  struct Functional {
    std::optional<double> vffr;
    std::optional<double> wss;   // Pa
    std::optional<double> dffr;
  };
  struct Provenance {
    std::string patient;
    std::string branch;
    int lesion_id = 0;
  };

  std::vector<std::string> feature_names;
  std::vector<std::vector<double>> rows;  // one vector per lesion, feature order
  std::vector<Functional> functional;
  std::vector<Provenance> provenance;

  std::size_t num_rows() const { return rows.size(); }
  std::size_t num_features() const { return feature_names.size(); }
  void validate() const;
};

enum class LabelCriterion { FFR, WSS, DFFR, HRS };

std::string to_string(LabelCriterion c);
LabelCriterion label_criterion_from_string(const std::string& s);

inline constexpr double kVffrThreshold = 0.80;   // positive iff vFFR <= threshold
inline constexpr double kWssThreshold = 15.47;   // Pa, positive iff WSS >= threshold
inline constexpr double kDffrThreshold = 0.06;   // positive iff dFFR >= threshold

// Binary labels for the rows whose functional values are present; rows
// with missing values are excluded and reported.
struct LabelResult {
  LabelCriterion criterion = LabelCriterion::FFR;
  std::vector<std::size_t> kept_rows;  // indices into the table
  std::vector<int> labels;             // aligned with kept_rows
  std::vector<std::size_t> excluded_rows;
  Flags flags;
};

LabelResult label_lesions(const FeatureTable& table, LabelCriterion criterion);

// Seeded, patient-grouped, class-stratified split of the labeled rows.
struct SplitResult {
  std::vector<std::size_t> train, val, test;  // indices into the table
  Flags flags;
};

SplitResult stratified_split(const FeatureTable& table, const LabelResult& labeled,
                             std::uint64_t seed,
                             const std::array<double, 3>& ratios = {0.8, 0.1, 0.1});

// Recursive feature elimination on an L2 logistic regression fitted by
// gradient descent to the z-scored training rows. Each round drops the
// feature with the smallest |coefficient| (ties drop the later column)
// until k remain.
struct RfeResult {
  std::vector<std::size_t> selected_cols;   // original column order
  std::vector<std::string> selected_names;
  Flags flags;
};

RfeResult rfe_select(const FeatureTable& table, const std::vector<std::size_t>& rows,
                     const std::vector<int>& labels, std::size_t k = 7);

struct TrainConfig {
  int epochs = 300;
  double lr0 = 0.001;
  double gamma = 0.99;  // per-epoch exponential decay
  int hidden_layers = 4;
  int width = 128;
  std::uint64_t seed = 0;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::size_t k_features = 7;

  void validate() const;
};

struct MlpLayer {
  std::vector<std::vector<double>> w;  // [out][in]
  std::vector<double> b;               // [out]

  bool operator==(const MlpLayer&) const = default;
};

struct MlpModel {
  TrainConfig config;
  std::vector<std::string> selected_features;
  std::vector<double> norm_mean, norm_std;  // training-split statistics
  std::vector<MlpLayer> layers;             // hidden layers then the logit layer

  void validate() const;
};

// Feature matrix with aligned binary labels, in selected-feature order and
// unnormalized units.
struct LabeledMatrix {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
};

// Gathers the given table rows and columns next to their labels.
LabeledMatrix project(const FeatureTable& table, const std::vector<std::size_t>& rows,
                      const LabelResult& labeled, const std::vector<std::size_t>& cols);

// Mean cross-entropy of the network on pre-normalized inputs; the gradient
// variant fills `grad` with matching shapes.
double mlp_loss(const std::vector<MlpLayer>& layers, const std::vector<std::vector<double>>& x,
                const std::vector<int>& y);
double mlp_loss_and_gradient(const std::vector<MlpLayer>& layers,
                             const std::vector<std::vector<double>>& x,
                             const std::vector<int>& y, std::vector<MlpLayer>& grad);

// Full-batch ADAM training of the MLP; z-scoring statistics come from the
// training split and are stored in the model. Returns the epoch snapshot
// with the lowest validation loss (the final epoch when `val` is empty).
// Throws Error if the loss turns non-finite.
MlpModel train_mlp(const LabeledMatrix& train, const LabeledMatrix& val,
                   const TrainConfig& config, const std::vector<std::string>& feature_names);

// Sigmoid probability for a row given in selected-feature order.
double predict(const MlpModel& model, const std::vector<double>& features);
// Same, resolving the model's selected features against the table columns.
double predict(const MlpModel& model, const FeatureTable& table, std::size_t row);

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;
  double loss_mean = 0.0;
  double loss_std = 0.0;  // population std across rows
  Flags flags;
};

// Threshold-0.5 accuracy, positive-class F1, pairwise AUC with half credit
// for ties, and per-row cross-entropy moments.
Metrics evaluate(const std::vector<double>& probabilities, const std::vector<int>& labels);

}  // namespace corsa
