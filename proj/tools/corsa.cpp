#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "corsa/common.hpp"
#include "corsa/io.hpp"
#include "corsa/phantom.hpp"
#include "corsa/pipeline.hpp"
#include "corsa/stats.hpp"

namespace fs = std::filesystem;
using namespace corsa;

namespace {

// Config and seed flags shared by every subcommand. --seed overrides both
// the pipeline seed and the training seed so one flag pins a whole run.
struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "pipeline config JSON");
  c.seed_opt = cmd->add_option("--seed", c.seed, "seed override");
}

PipelineConfig make_config(const Common& c) {
  PipelineConfig cfg;
  if (!c.config_path.empty()) cfg = load_pipeline_config(c.config_path);
  if (c.seed_opt != nullptr && c.seed_opt->count() > 0) {
    cfg.seed = c.seed;
    cfg.train.seed = c.seed;
  }
  cfg.validate();
  return cfg;
}

OutputMeta meta_for(const PipelineConfig& cfg) {
  OutputMeta meta;
  meta.config_hash = config_hash(cfg);
  return meta;
}

ClassificationResult classify_with_override(const CoronaryTree& tree,
                                            const std::string& override_path) {
  ClassificationResult cls = classify_tree(tree);
  if (!override_path.empty()) apply_label_override(cls, load_label_override(override_path));
  return cls;
}

// --- phantom -------------------------------------------------------------

struct PhantomOpts {
  Common common;
  std::string out;
  int cases = 1;
  std::string side = "mixed";
  bool ambiguous = false;
  int lesions = 1;
  double spacing = 0.5;
};

void do_phantom(const PhantomOpts& o) {
  const PipelineConfig cfg = make_config(o.common);
  const OutputMeta meta = meta_for(cfg);
  fs::create_directories(o.out);
  for (int i = 0; i < o.cases; ++i) {
    CaseSpec spec;
    spec.seed = cfg.seed + static_cast<std::uint64_t>(i);
    spec.side = o.side == "left"    ? Side::left
                : o.side == "right" ? Side::right
                                    : (i % 2 ? Side::left : Side::right);
    spec.ambiguous = o.ambiguous;
    spec.n_lesions = static_cast<std::size_t>(o.lesions);
    spec.volume.spacing = {o.spacing, o.spacing, o.spacing};
    const PhantomCase pc = gen_case(spec);

    char name[32];
    std::snprintf(name, sizeof name, "case_%03d", i);
    const fs::path dir = fs::path(o.out) / name;
    fs::create_directories(dir);
    save_tree(pc.tree, dir / "centerline.json", meta);
    save_volume(pc.volume, dir / "volume", meta);
    save_mask(pc.lumen, dir / "lumen", meta);
    std::vector<FunctionalRow> rows;
    for (std::size_t k = 0; k < pc.functional.size(); ++k)
      rows.push_back({to_string(pc.target_label), static_cast<int>(k), pc.functional[k]});
    save_functional_csv(rows, dir / "functional.csv", meta);
    save_truth(pc.truth, dir / "truth.json", meta);
    std::printf("%s: %s tree, %zu lesions on %s\n", name,
                pc.tree.side == Side::left ? "left" : "right", pc.truth.lesions.size(),
                to_string(pc.target_label).c_str());
  }
  std::printf("config %s, %d cases under %s\n", meta.config_hash.c_str(), o.cases,
              o.out.c_str());
}

// --- classify ------------------------------------------------------------

struct ClassifyOpts {
  Common common;
  std::string tree;
  std::string out;
  std::string overrides;
};

void do_classify(const ClassifyOpts& o) {
  const PipelineConfig cfg = make_config(o.common);
  const CoronaryTree tree = load_tree(o.tree);
  const ClassificationResult cls = classify_with_override(tree, o.overrides);
  save_classification(cls, o.out, meta_for(cfg));
  for (std::size_t i = 0; i < cls.labels.size(); ++i)
    std::printf("centerline %zu: %s\n", i, to_string(cls.labels[i]).c_str());
  std::printf("dominance: %s%s\n", to_string(cls.dominance).c_str(),
              cls.failed ? " (classification failed)" : "");
}

// --- stenosis ------------------------------------------------------------

struct StenosisOpts {
  Common common;
  std::string tree;
  std::string classification;
  std::string out;
  std::string overrides;
};

void do_stenosis(const StenosisOpts& o) {
  const PipelineConfig cfg = make_config(o.common);
  const OutputMeta meta = meta_for(cfg);
  const CoronaryTree tree = load_tree(o.tree);
  const ClassificationResult cls =
      o.classification.empty()
          ? classify_with_override(tree, o.overrides)
          : load_classification(o.classification, tree.centerlines.size());
  fs::create_directories(o.out);
  std::vector<Lesion> lesions;
  for (const BranchLabel label : {BranchLabel::RCA, BranchLabel::LAD, BranchLabel::LCx}) {
    const std::optional<std::size_t> idx = cls.index_of(label);
    if (!idx) continue;
    const double ref = label == BranchLabel::RCA ? 0.0 : cls.lm_end_abscissa.value_or(0.0);
    const BranchAnalysis a = analyze_branch(label, tree.centerlines[*idx], cfg, ref);
    save_regression_debug(a.debug, fs::path(o.out) / ("regression_" + to_string(label) + ".json"),
                          meta);
    lesions.insert(lesions.end(), a.lesions.begin(), a.lesions.end());
    std::printf("%s: %zu lesions\n", to_string(label).c_str(), a.lesions.size());
  }
  save_lesions_csv(lesions, fs::path(o.out) / "lesions.csv", meta);
  std::printf("%zu lesions total -> %s\n", lesions.size(),
              (fs::path(o.out) / "lesions.csv").c_str());
}

// --- pcat ----------------------------------------------------------------

struct PcatOpts {
  Common common;
  std::string case_dir;
  std::string analysis;
  std::string out;
};

void do_pcat(const PcatOpts& o) {
  const PipelineConfig cfg = make_config(o.common);
  const OutputMeta meta = meta_for(cfg);
  const fs::path case_dir(o.case_dir);
  const fs::path analysis = o.analysis.empty() ? case_dir / "out" : fs::path(o.analysis);
  const fs::path out = o.out.empty() ? analysis / "pcat.csv" : fs::path(o.out);

  const CoronaryTree tree = load_tree(case_dir / "centerline.json");
  const VoxelVolume vol = load_volume(case_dir / "volume");
  const BinaryMask lumen = load_mask(case_dir / "lumen");
  if (!lumen.same_grid(vol)) throw Error("lumen mask grid differs from the volume grid");
  const ClassificationResult cls =
      load_classification(analysis / "classification.json", tree.centerlines.size());
  const std::vector<Lesion> lesions = load_lesions_csv(analysis / "lesions.csv");

  std::vector<PcatRow> rows;
  for (const BranchLabel label : {BranchLabel::RCA, BranchLabel::LAD, BranchLabel::LCx}) {
    const std::optional<std::size_t> idx = cls.index_of(label);
    if (!idx) continue;
    const Centerline& c = tree.centerlines[*idx];
    const double ref = label == BranchLabel::RCA ? 0.0 : cls.lm_end_abscissa.value_or(0.0);
    PcatRow vrow;
    vrow.scope = "vessel";
    vrow.branch = to_string(label);
    vrow.features = pcat_features(rasterize_tube(vessel_roi(label, c, ref), vol, lumen).mask, vol);
    rows.push_back(vrow);

    bool have_debug = false;
    RegressionDebug dbg;
    for (const Lesion& l : lesions) {
      if (l.branch != label) continue;
      if (!have_debug) {
        dbg = load_regression_debug(analysis / ("regression_" + to_string(label) + ".json"));
        have_debug = true;
      }
      const RadiusProfile resampled{dbg.abscissa, dbg.r};
      PcatRow row;
      row.scope = "lesion";
      row.branch = to_string(label);
      row.lesion_id = l.id;
      row.features = pcat_features(
          rasterize_tube(lesion_roi(l, c, resampled, dbg.r_h), vol, lumen).mask, vol);
      rows.push_back(row);
    }
  }
  save_pcat_csv(rows, out, meta);
  std::printf("%zu pcat rows -> %s\n", rows.size(), out.c_str());
}

// --- dataset -------------------------------------------------------------

struct DatasetOpts {
  Common common;
  std::string out;
  int patients = 60;
  int lesions = 2;
  int features = 10;
  std::string rule = "linear";
  double noise = 0.0;
};

void do_dataset(const DatasetOpts& o) {
  const PipelineConfig cfg = make_config(o.common);
  const OutputMeta meta = meta_for(cfg);
  DatasetSpec spec;
  spec.rule = o.rule == "xor"     ? DatasetSpec::Rule::xor_rule
              : o.rule == "noise" ? DatasetSpec::Rule::noise
                                  : DatasetSpec::Rule::linear;
  spec.patients = static_cast<std::size_t>(o.patients);
  spec.lesions_per_patient = static_cast<std::size_t>(o.lesions);
  spec.features = static_cast<std::size_t>(o.features);
  spec.feature_noise = o.noise;
  spec.seed = cfg.seed;
  const DatasetPhantom ph = gen_feature_dataset(spec);
  fs::create_directories(o.out);
  save_feature_table(ph.table, fs::path(o.out) / "features.csv", meta);
  save_truth(ph.truth, fs::path(o.out) / "truth.json", meta);
  std::printf("%zu rows, %zu features (%s rule) -> %s\n", ph.table.num_rows(),
              ph.table.num_features(), o.rule.c_str(), o.out.c_str());
}

// --- train ---------------------------------------------------------------

struct TrainOpts {
  Common common;
  std::string features;
  std::string criterion = "FFR";
  std::string subset = "all";
  std::string model_out;
  std::string metrics_out;
};

void do_train(const TrainOpts& o) {
  const PipelineConfig cfg = make_config(o.common);
  const OutputMeta meta = meta_for(cfg);
  const FeatureTable table = load_feature_table(o.features);
  Flags flags;
  const std::optional<TrainOutcome> outcome = train_combination(
      table, o.subset, label_criterion_from_string(o.criterion), cfg.train, flags);
  for (const std::string& f : flags) std::fprintf(stderr, "%s\n", f.c_str());
  if (!outcome) throw Error("training skipped: " + (flags.empty() ? o.criterion : flags.back()));
  save_model(outcome->model, o.model_out, meta);
  if (!o.metrics_out.empty()) save_metrics({outcome->entry}, o.metrics_out, meta);
  const Metrics& m = outcome->entry.test;
  std::printf("%s x %s: n=%zu/%zu/%zu accuracy %.3f f1 %.3f%s -> %s\n", o.subset.c_str(),
              o.criterion.c_str(), outcome->entry.n_train, outcome->entry.n_val,
              outcome->entry.n_test, m.accuracy, m.f1,
              m.auc ? (" auc " + format_double(*m.auc)).c_str() : "", o.model_out.c_str());
}

// --- predict -------------------------------------------------------------

struct PredictOpts {
  Common common;
  std::string model;
  std::string features;
  std::string out;
};

void do_predict(const PredictOpts& o) {
  const PipelineConfig cfg = make_config(o.common);
  const MlpModel model = load_model(o.model);
  const FeatureTable table = load_feature_table(o.features);
  std::vector<PredictionRow> rows;
  rows.reserve(table.num_rows());
  for (std::size_t i = 0; i < table.num_rows(); ++i)
    rows.push_back({table.provenance[i], predict(model, table, i)});
  save_predictions_csv(rows, o.out, meta_for(cfg));
  std::printf("%zu predictions -> %s\n", rows.size(), o.out.c_str());
}

// --- stats ---------------------------------------------------------------

struct StatsOpts {
  Common common;
  std::string features;
  std::string group;
  std::string feature;
  std::string out;
};

void do_stats(const StatsOpts& o) {
  const PipelineConfig cfg = make_config(o.common);
  const FeatureTable table = load_feature_table(o.features);
  const LabelResult lab = label_lesions(table, label_criterion_from_string(o.group));
  std::size_t col = table.num_features();
  for (std::size_t j = 0; j < table.num_features(); ++j)
    if (table.feature_names[j] == o.feature) col = j;
  if (col == table.num_features()) throw Error("unknown feature: " + o.feature);

  std::vector<double> negative, positive;
  for (std::size_t i = 0; i < lab.kept_rows.size(); ++i)
    (lab.labels[i] ? positive : negative).push_back(table.rows[lab.kept_rows[i]][col]);
  const GroupComparison cmp = compare_groups(negative, positive);
  save_comparison(cmp, o.feature, o.group, o.out, meta_for(cfg));
  std::printf("%s by %s: %s, statistic %s, p %s (n=%zu/%zu)\n", o.feature.c_str(),
              o.group.c_str(), cmp.comparison.method.c_str(),
              format_double(cmp.comparison.statistic).c_str(),
              format_double(cmp.comparison.p_value).c_str(), negative.size(), positive.size());
}

// --- run -----------------------------------------------------------------

struct RunOpts {
  Common common;
  std::string cases;
  int jobs = 1;
  std::string overrides;
};

int do_run(const RunOpts& o) {
  const PipelineConfig cfg = make_config(o.common);
  const PipelineResult r = run_pipeline(o.cases, cfg, o.jobs, o.overrides);
  for (const StageError& e : r.errors)
    std::fprintf(stderr, "%s [%s]: %s\n", e.case_id.c_str(), e.stage.c_str(),
                 e.message.c_str());
  std::size_t lesions = 0;
  for (const CaseReport& c : r.cases) lesions += c.n_lesions;
  std::printf("config %s: %zu cases, %zu lesions, %zu feature rows, %zu metric entries\n",
              config_hash(cfg).c_str(), r.cases.size(), lesions, r.features.num_rows(),
              r.metrics.size());
  return r.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coronary stenosis analysis"};
  app.set_version_flag("--version", std::string(corsa::kVersion));
  app.require_subcommand(0, 1);
  int exit_code = 0;

  auto phantom = std::make_shared<PhantomOpts>();
  CLI::App* cmd = app.add_subcommand("phantom", "generate synthetic cases");
  add_common(cmd, phantom->common);
  cmd->add_option("--out", phantom->out, "output directory")->required();
  cmd->add_option("--cases", phantom->cases, "number of cases")->check(CLI::PositiveNumber);
  cmd->add_option("--side", phantom->side, "left, right or mixed")
      ->check(CLI::IsMember({"left", "right", "mixed"}));
  cmd->add_flag("--ambiguous", phantom->ambiguous, "near-tie generator mode");
  cmd->add_option("--lesions", phantom->lesions, "lesions per case")->check(CLI::Range(0, 2));
  cmd->add_option("--spacing", phantom->spacing, "voxel spacing in mm")
      ->check(CLI::PositiveNumber);
  cmd->callback([phantom] { do_phantom(*phantom); });

  auto classify = std::make_shared<ClassifyOpts>();
  cmd = app.add_subcommand("classify", "label the branches of a centerline tree");
  add_common(cmd, classify->common);
  cmd->add_option("--tree", classify->tree, "centerline JSON")->required();
  cmd->add_option("--out", classify->out, "classification JSON")->required();
  cmd->add_option("--override-labels", classify->overrides, "manual label correction JSON");
  cmd->callback([classify] { do_classify(*classify); });

  auto stenosis = std::make_shared<StenosisOpts>();
  cmd = app.add_subcommand("stenosis", "detect lesions along the labeled branches");
  add_common(cmd, stenosis->common);
  cmd->add_option("--tree", stenosis->tree, "centerline JSON")->required();
  cmd->add_option("--classification", stenosis->classification,
                  "classification JSON (computed when omitted)");
  cmd->add_option("--out", stenosis->out, "output directory")->required();
  cmd->add_option("--override-labels", stenosis->overrides, "manual label correction JSON");
  cmd->callback([stenosis] { do_stenosis(*stenosis); });

  auto pcat = std::make_shared<PcatOpts>();
  cmd = app.add_subcommand("pcat", "extract pericoronary fat features");
  add_common(cmd, pcat->common);
  cmd->add_option("--case", pcat->case_dir, "case directory with centerline and volumes")
      ->required();
  cmd->add_option("--analysis", pcat->analysis,
                  "directory with classification and lesion outputs (default case/out)");
  cmd->add_option("--out", pcat->out, "output CSV (default analysis/pcat.csv)");
  cmd->callback([pcat] { do_pcat(*pcat); });

  auto dataset = std::make_shared<DatasetOpts>();
  cmd = app.add_subcommand("dataset", "generate a synthetic feature dataset");
  add_common(cmd, dataset->common);
  cmd->add_option("--out", dataset->out, "output directory")->required();
  cmd->add_option("--patients", dataset->patients, "patient count")->check(CLI::PositiveNumber);
  cmd->add_option("--lesions", dataset->lesions, "lesions per patient")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--features", dataset->features, "feature count")->check(CLI::PositiveNumber);
  cmd->add_option("--rule", dataset->rule, "label rule")
      ->check(CLI::IsMember({"linear", "xor", "noise"}));
  cmd->add_option("--noise", dataset->noise, "feature noise sigma")
      ->check(CLI::NonNegativeNumber);
  cmd->callback([dataset] { do_dataset(*dataset); });

  auto train = std::make_shared<TrainOpts>();
  cmd = app.add_subcommand("train", "train the lesion classifier");
  add_common(cmd, train->common);
  cmd->add_option("--features", train->features, "feature CSV")->required();
  cmd->add_option("--criterion", train->criterion, "label criterion")
      ->check(CLI::IsMember({"FFR", "WSS", "DFFR", "HRS"}));
  cmd->add_option("--subset", train->subset, "branch subset")
      ->check(CLI::IsMember({"all", "RCA", "LAD", "LCx"}));
  cmd->add_option("--model", train->model_out, "model JSON output")->required();
  cmd->add_option("--metrics", train->metrics_out, "metrics JSON output");
  cmd->callback([train] { do_train(*train); });

  auto predict_opts = std::make_shared<PredictOpts>();
  cmd = app.add_subcommand("predict", "score lesions with a trained model");
  add_common(cmd, predict_opts->common);
  cmd->add_option("--model", predict_opts->model, "model JSON")->required();
  cmd->add_option("--features", predict_opts->features, "feature CSV")->required();
  cmd->add_option("--out", predict_opts->out, "prediction CSV")->required();
  cmd->callback([predict_opts] { do_predict(*predict_opts); });

  auto stats = std::make_shared<StatsOpts>();
  cmd = app.add_subcommand("stats", "compare a feature between labeled groups");
  add_common(cmd, stats->common);
  cmd->add_option("--features", stats->features, "feature CSV")->required();
  cmd->add_option("--group", stats->group, "grouping criterion")
      ->check(CLI::IsMember({"FFR", "WSS", "DFFR", "HRS"}))
      ->required();
  cmd->add_option("--feature", stats->feature, "feature column name")->required();
  cmd->add_option("--out", stats->out, "comparison JSON")->required();
  cmd->callback([stats] { do_stats(*stats); });

  auto run = std::make_shared<RunOpts>();
  cmd = app.add_subcommand("run", "run the full pipeline over a case directory");
  add_common(cmd, run->common);
  cmd->add_option("--cases", run->cases, "directory of case subdirectories")->required();
  cmd->add_option("--jobs", run->jobs, "concurrent cases")->check(CLI::PositiveNumber);
  cmd->add_option("--override-labels", run->overrides, "per-case label corrections JSON");
  cmd->callback([run, &exit_code] { exit_code = do_run(*run); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  if (app.get_subcommands().empty()) std::puts(app.help().c_str());
  return exit_code;
}
