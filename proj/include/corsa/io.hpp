#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "corsa/classifier.hpp"
#include "corsa/common.hpp"
#include "corsa/geometry.hpp"
#include "corsa/pcat.hpp"
#include "corsa/phantom.hpp"
#include "corsa/stats.hpp"
#include "corsa/stenosis.hpp"

namespace corsa {

// Provenance stamped into every output: config hash as hex FNV-1a of the
// canonical config text, plus the tool version. JSON outputs carry them as
// top-level keys, CSVs as leading `# key=value` comment lines.
struct OutputMeta {
  std::string config_hash;
  std::string tool_version = kVersion;
};

// All JSON is written canonically: sorted keys, two-space indent, shortest
// round-trip decimals and a trailing newline, so byte identity follows
// from value identity. Loaders throw Error naming the file when it is
// missing and surface parse errors with their byte offset.

void save_tree(const CoronaryTree& tree, const std::filesystem::path& path,
               const OutputMeta& meta = {});
CoronaryTree load_tree(const std::filesystem::path& path);

// The labels object maps RCA/LAD/LCx to a centerline index or null; the
// full per-centerline list rides along so AMB and PDA_PLB survive a
// round trip. `n` is the centerline count of the accompanying tree.
void save_classification(const ClassificationResult& res, const std::filesystem::path& path,
                         const OutputMeta& meta = {});
ClassificationResult load_classification(const std::filesystem::path& path, std::size_t n);

// Volume pair BASE.vol.json / BASE.vol.raw, int16 little-endian,
// x-fastest; masks use the same pair with dtype uint8.
void save_volume(const VoxelVolume& vol, const std::filesystem::path& base,
                 const OutputMeta& meta = {});
VoxelVolume load_volume(const std::filesystem::path& base);
void save_mask(const BinaryMask& mask, const std::filesystem::path& base,
               const OutputMeta& meta = {});
BinaryMask load_mask(const std::filesystem::path& base);

void save_lesions_csv(const std::vector<Lesion>& lesions, const std::filesystem::path& path,
                      const OutputMeta& meta = {});
std::vector<Lesion> load_lesions_csv(const std::filesystem::path& path);

// Per-vessel regression diagnostics: the resampled radii with the kernel
// intermediates and the stenosis degree, parallel arrays.
struct RegressionDebug {
  std::string branch;
  RegressionParams params;
  double loss = 0.0;
  std::vector<double> abscissa;
  std::vector<double> r;
  std::vector<double> r_max;
  std::vector<double> w;
  std::vector<double> r_h;
  std::vector<double> sd;
  Flags flags;
};

void save_regression_debug(const RegressionDebug& debug, const std::filesystem::path& path,
                           const OutputMeta& meta = {});
RegressionDebug load_regression_debug(const std::filesystem::path& path);

// One PCAT report row; per-vessel rows leave lesion_id empty.
struct PcatRow {
  std::string scope;  // "vessel" | "lesion"
  std::string branch;
  std::optional<int> lesion_id;
  PcatFeatures features;
};

void save_pcat_csv(const std::vector<PcatRow>& rows, const std::filesystem::path& path,
                   const OutputMeta& meta = {});
std::vector<PcatRow> load_pcat_csv(const std::filesystem::path& path);

// Functional measurements keyed by branch and lesion id; empty fields are
// missing values.
struct FunctionalRow {
  std::string branch;
  int lesion_id = 0;
  FeatureTable::Functional values;
};

void save_functional_csv(const std::vector<FunctionalRow>& rows,
                         const std::filesystem::path& path, const OutputMeta& meta = {});
std::vector<FunctionalRow> load_functional_csv(const std::filesystem::path& path);

// Feature table CSV: patient, branch, lesion_id, the feature columns, then
// the declared label columns vffr, wss, dffr.
void save_feature_table(const FeatureTable& table, const std::filesystem::path& path,
                        const OutputMeta& meta = {});
FeatureTable load_feature_table(const std::filesystem::path& path);

void save_model(const MlpModel& model, const std::filesystem::path& path,
                const OutputMeta& meta = {});
MlpModel load_model(const std::filesystem::path& path);

// One evaluated (criterion x branch subset) cell of the metrics report.
struct MetricsEntry {
  std::string criterion;
  std::string branch_subset;  // "all" or a branch label
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  std::vector<std::string> selected_features;
  Metrics test;
};

void save_metrics(const std::vector<MetricsEntry>& entries, const std::filesystem::path& path,
                  const OutputMeta& meta = {});
std::vector<MetricsEntry> load_metrics(const std::filesystem::path& path);

void save_truth(const GroundTruth& truth, const std::filesystem::path& path,
                const OutputMeta& meta = {});
GroundTruth load_truth(const std::filesystem::path& path);

// Group comparison report for the stats subcommand.
void save_comparison(const GroupComparison& cmp, const std::string& feature,
                     const std::string& group_column, const std::filesystem::path& path,
                     const OutputMeta& meta = {});

struct PredictionRow {
  FeatureTable::Provenance provenance;
  double probability = 0.0;
};

void save_predictions_csv(const std::vector<PredictionRow>& rows,
                          const std::filesystem::path& path, const OutputMeta& meta = {});

}  // namespace corsa
