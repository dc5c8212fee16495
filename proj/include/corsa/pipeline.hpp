#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "corsa/classifier.hpp"
#include "corsa/common.hpp"
#include "corsa/io.hpp"
#include "corsa/pcat.hpp"
#include "corsa/stenosis.hpp"

namespace corsa {

// Every tunable of an end-to-end run, serialized next to each output via
// the config hash. The HU window and ROI rule fields echo constants the
// kernels hard-code; validate() rejects any other value so a config file
// cannot silently disagree with the binary.
struct PipelineConfig {
  ParameterBounds bounds;
  LesionFilterConfig filter;
  double resample_spacing = 0.5;  // mm
  double hu_lo = kFatHuLo;
  double hu_hi = kFatHuHi;
  double window_length_mm = 40.0;
  double window_offset_mm = 10.0;
  double outer_scale = 3.0;
  TrainConfig train;
  std::uint64_t seed = 0;

  void validate() const;
};

std::string config_hash(const PipelineConfig& cfg);
void save_pipeline_config(const PipelineConfig& cfg, const std::filesystem::path& path);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// Manual correction of the three main labels, applied after automatic
// classification. Absent dominance keeps the computed call.
struct LabelOverride {
  std::optional<std::size_t> rca, lad, lcx;  // centerline indices
  std::optional<Dominance> dominance;
};

// Single-entry file: {"labels":{"RCA":i|null,"LAD":...,"LCx":...},
// "dominance":"..."}. run_pipeline reads the same entries keyed by case id.
LabelOverride load_label_override(const std::filesystem::path& path);

struct StageError {
  std::string case_id;
  std::string stage;
  std::string message;
};

struct CaseReport {
  std::string case_id;
  bool classified = false;
  std::size_t n_lesions = 0;
  Flags flags;
};

// Stenosis analysis of one labeled centerline: uniform resampling, kernel
// width fit, healthy-radius regression, lesion detection and morphometrics.
// Samples at or before `start_abscissa` are dropped first (nonpositive keeps
// the whole profile); LAD and LCx analysis starts past the left main
// bifurcation so the caliber step at the trunk junction is not mistaken for
// a lesion. Reported distances stay ostium-referenced either way.
struct BranchAnalysis {
  RadiusProfile resampled;
  RegressionIntermediates reg;
  std::vector<double> sd;
  std::vector<Lesion> lesions;
  RegressionDebug debug;
};

BranchAnalysis analyze_branch(BranchLabel label, const Centerline& c, const PipelineConfig& cfg,
                              double start_abscissa = 0.0);

// Applies a manual correction: the three main labels are reassigned, other
// annotations and the computed reference abscissas stay.
void apply_label_override(ClassificationResult& cls, const LabelOverride& o);

// Rows whose provenance branch matches `branch`; "all" keeps every row.
FeatureTable subset_rows(const FeatureTable& table, const std::string& branch);

// Labels, splits, selects and trains one (subset x criterion) combination.
// Returns nullopt and appends the reason to `flags` when the combination is
// degenerate: no labeled rows, a single class or an empty split.
struct TrainOutcome {
  MetricsEntry entry;
  MlpModel model;
};

std::optional<TrainOutcome> train_combination(const FeatureTable& pooled, const std::string& subset,
                                              LabelCriterion criterion, const TrainConfig& config,
                                              Flags& flags);

// Runs one case directory (centerline.json, volume + lumen pairs, optional
// functional.csv) and writes classification, lesion, regression and PCAT
// outputs under case_dir/out. Feature rows for lesions whose ROI captured
// fat come back for pooling. Stage failures are recorded, not thrown.
struct CaseOutcome {
  CaseReport report;
  std::vector<StageError> errors;
  FeatureTable features;
};

CaseOutcome process_case(const std::filesystem::path& case_dir, const PipelineConfig& cfg,
                         const std::optional<LabelOverride>& override_labels = {});

struct PipelineResult {
  std::vector<CaseReport> cases;
  std::vector<StageError> errors;
  FeatureTable features;
  std::vector<MetricsEntry> metrics;
  bool trained = false;
  Flags flags;

  bool ok() const { return errors.empty(); }
};

// Processes every case subdirectory of `cases_dir` (sorted by name; an
// existing `out` entry is skipped), pools the per-lesion features and, when
// functional reference values are present, trains and scores one model per
// branch subset and labeling criterion. Pooled outputs land in
// cases_dir/out: features.csv, metrics.json, one model JSON per trained
// combination and report.json. `overrides` optionally points to a JSON
// object of per-case label corrections. `jobs` bounds the number of
// concurrently processed cases; outputs do not depend on it.
PipelineResult run_pipeline(const std::filesystem::path& cases_dir, const PipelineConfig& cfg,
                            int jobs = 1, const std::filesystem::path& overrides = {});

}  // namespace corsa
