#include "corsa/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>

#include "json.hpp"

namespace corsa {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
  if (!fs::exists(path)) throw Error("missing input file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw Error("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write file: " + path.string());
}

json parse_json(const std::string& text, const fs::path& path) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

json config_json(const PipelineConfig& c) {
  json j;
  j["bounds"] = {{"sigma_x", {c.bounds.sigma_x_lo, c.bounds.sigma_x_hi}},
                 {"sigma_max", {c.bounds.sigma_max_lo, c.bounds.sigma_max_hi}},
                 {"sigma_r", {c.bounds.sigma_r_lo, c.bounds.sigma_r_hi}}};
  j["filter"] = {{"sd_core", c.filter.sd_core},
                 {"sd_extend", c.filter.sd_extend},
                 {"boundary_diameters", c.filter.boundary_diameters},
                 {"min_length_mm", c.filter.min_length_mm}};
  j["resample_spacing"] = c.resample_spacing;
  j["hu_window"] = {c.hu_lo, c.hu_hi};
  j["roi"] = {{"window_length_mm", c.window_length_mm},
              {"window_offset_mm", c.window_offset_mm},
              {"outer_scale", c.outer_scale}};
  j["train"] = {{"epochs", c.train.epochs},
                {"lr0", c.train.lr0},
                {"gamma", c.train.gamma},
                {"hidden_layers", c.train.hidden_layers},
                {"width", c.train.width},
                {"seed", c.train.seed},
                {"split", c.train.split},
                {"k_features", c.train.k_features}};
  j["seed"] = c.seed;
  return j;
}

Dominance dominance_from(const std::string& s) {
  if (s == "left") return Dominance::left;
  if (s == "right_or_codominant") return Dominance::right_or_codominant;
  if (s == "unknown") return Dominance::unknown;
  throw Error("unknown dominance: " + s);
}

LabelOverride override_from(const json& j, const std::string& where) {
  if (!j.is_object()) throw Error(where + ": override entry must be an object");
  LabelOverride o;
  if (j.contains("labels")) {
    const json& labels = j.at("labels");
    const auto get = [&](const char* key) -> std::optional<std::size_t> {
      if (!labels.contains(key) || labels.at(key).is_null()) return std::nullopt;
      return labels.at(key).get<std::size_t>();
    };
    o.rca = get("RCA");
    o.lad = get("LAD");
    o.lcx = get("LCx");
  }
  if (j.contains("dominance") && !j.at("dominance").is_null())
    o.dominance = dominance_from(j.at("dominance").get<std::string>());
  return o;
}

std::map<std::string, LabelOverride> load_label_overrides(const fs::path& path) {
  const json j = parse_json(read_text(path), path);
  try {
    if (!j.is_object()) throw Error(path.string() + ": overrides must map case ids to entries");
    std::map<std::string, LabelOverride> out;
    for (const auto& [key, value] : j.items()) out[key] = override_from(value, key);
    return out;
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {
      "max_sd",        "length_mm", "mla_mm2",      "dist_ostium_mm", "tortuosity", "fai",
      "p10",           "p25",       "p50",          "p75",            "p90",        "p95",
      "fat_fraction",  "fat_volume_mm3",
      "branch_LAD",    "branch_LCx", "branch_RCA"};
  return names;
}

std::vector<double> feature_row(const Lesion& l, const PcatFeatures& f, BranchLabel label) {
  return {l.max_sd,
          l.length_mm,
          l.mla_mm2,
          l.dist_ostium_mm,
          l.tortuosity,
          *f.fai,
          *f.p10,
          *f.p25,
          *f.p50,
          *f.p75,
          *f.p90,
          *f.p95,
          f.fat_fraction,
          f.fat_volume_mm3,
          label == BranchLabel::LAD ? 1.0 : 0.0,
          label == BranchLabel::LCx ? 1.0 : 0.0,
          label == BranchLabel::RCA ? 1.0 : 0.0};
}

void train_and_score(PipelineResult& result, const PipelineConfig& cfg, const fs::path& out_dir,
                     const OutputMeta& meta) {
  static const char* kSubsets[] = {"LAD", "LCx", "RCA", "all"};
  for (const char* subset : kSubsets) {
    for (const LabelCriterion crit : {LabelCriterion::FFR, LabelCriterion::WSS,
                                      LabelCriterion::DFFR, LabelCriterion::HRS}) {
      try {
        std::optional<TrainOutcome> outcome =
            train_combination(result.features, subset, crit, cfg.train, result.flags);
        if (!outcome) continue;
        save_model(outcome->model,
                   out_dir / ("model_" + std::string(subset) + "_" + to_string(crit) + ".json"),
                   meta);
        result.metrics.push_back(std::move(outcome->entry));
      } catch (const std::exception& e) {
        result.errors.push_back(
            {"pooled", "train " + std::string(subset) + " x " + to_string(crit), e.what()});
      }
    }
  }
}

}  // namespace

void apply_label_override(ClassificationResult& cls, const LabelOverride& o) {
  for (BranchLabel& l : cls.labels)
    if (l == BranchLabel::RCA || l == BranchLabel::LAD || l == BranchLabel::LCx)
      l = BranchLabel::UNCLASSIFIED;
  const auto set = [&](const std::optional<std::size_t>& idx, BranchLabel label) {
    if (!idx) return;
    if (*idx >= cls.labels.size())
      throw Error("override index out of range for " + to_string(label));
    cls.labels[*idx] = label;
  };
  set(o.rca, BranchLabel::RCA);
  set(o.lad, BranchLabel::LAD);
  set(o.lcx, BranchLabel::LCx);
  if (o.dominance) cls.dominance = *o.dominance;
  cls.failed = false;
  cls.flags.push_back("labels overridden");
}

FeatureTable subset_rows(const FeatureTable& t, const std::string& branch) {
  if (branch == "all") return t;
  FeatureTable s;
  s.feature_names = t.feature_names;
  for (std::size_t i = 0; i < t.num_rows(); ++i) {
    if (t.provenance[i].branch != branch) continue;
    s.rows.push_back(t.rows[i]);
    s.functional.push_back(t.functional[i]);
    s.provenance.push_back(t.provenance[i]);
  }
  return s;
}

std::optional<TrainOutcome> train_combination(const FeatureTable& pooled, const std::string& subset,
                                              LabelCriterion criterion, const TrainConfig& config,
                                              Flags& flags) {
  config.validate();
  const std::string tag = subset + " x " + to_string(criterion);
  const FeatureTable sub = subset_rows(pooled, subset);
  if (sub.num_rows() == 0) {
    flags.push_back("metrics skipped (" + tag + "): no rows");
    return std::nullopt;
  }
  const LabelResult lab = label_lesions(sub, criterion);
  std::size_t pos = 0;
  for (const int y : lab.labels) pos += static_cast<std::size_t>(y);
  if (lab.kept_rows.empty()) {
    flags.push_back("metrics skipped (" + tag + "): no labeled rows");
    return std::nullopt;
  }
  if (pos == 0 || pos == lab.labels.size()) {
    flags.push_back("metrics skipped (" + tag + "): labels form a single class");
    return std::nullopt;
  }
  const SplitResult sp = stratified_split(sub, lab, config.seed, config.split);
  if (sp.train.empty() || sp.test.empty()) {
    flags.push_back("metrics skipped (" + tag + "): empty train or test split");
    return std::nullopt;
  }
  std::vector<int> row_label(sub.num_rows(), 0);
  for (std::size_t i = 0; i < lab.kept_rows.size(); ++i) row_label[lab.kept_rows[i]] = lab.labels[i];
  std::vector<int> train_labels;
  train_labels.reserve(sp.train.size());
  for (const std::size_t r : sp.train) train_labels.push_back(row_label[r]);

  const std::size_t k = std::min(config.k_features, sub.num_features());
  const RfeResult rfe = rfe_select(sub, sp.train, train_labels, k);
  const LabeledMatrix tr = project(sub, sp.train, lab, rfe.selected_cols);
  const LabeledMatrix va = project(sub, sp.val, lab, rfe.selected_cols);
  const LabeledMatrix te = project(sub, sp.test, lab, rfe.selected_cols);

  TrainOutcome out;
  out.model = train_mlp(tr, va, config, rfe.selected_names);
  std::vector<double> probs;
  probs.reserve(te.x.size());
  for (const auto& row : te.x) probs.push_back(predict(out.model, row));

  out.entry.criterion = to_string(criterion);
  out.entry.branch_subset = subset;
  out.entry.n_train = tr.x.size();
  out.entry.n_val = va.x.size();
  out.entry.n_test = te.x.size();
  out.entry.selected_features = rfe.selected_names;
  out.entry.test = evaluate(probs, te.y);
  out.entry.test.flags.insert(out.entry.test.flags.end(), sp.flags.begin(), sp.flags.end());
  out.entry.test.flags.insert(out.entry.test.flags.end(), rfe.flags.begin(), rfe.flags.end());
  return out;
}

void PipelineConfig::validate() const {
  if (!(bounds.sigma_x_lo < bounds.sigma_x_hi) || !(bounds.sigma_max_lo < bounds.sigma_max_hi) ||
      !(bounds.sigma_r_lo < bounds.sigma_r_hi))
    throw InvalidInput("parameter bounds must be ordered");
  if (!(bounds.sigma_x_lo > 0.0) || !(bounds.sigma_max_lo > 0.0) || !(bounds.sigma_r_lo > 0.0))
    throw InvalidInput("parameter bounds must be positive");
  if (!(filter.sd_core > 0.0) || !(filter.sd_extend > 0.0))
    throw InvalidInput("SD thresholds must be positive");
  if (filter.sd_extend > filter.sd_core)
    throw InvalidInput("extension threshold must not exceed the core threshold");
  if (!(filter.boundary_diameters >= 0.0) || !(filter.min_length_mm >= 0.0))
    throw InvalidInput("lesion filters must be nonnegative");
  if (!(resample_spacing > 0.0)) throw InvalidInput("resample spacing must be positive");
  train.validate();
  // Fixed-rule echoes; the extraction kernels hard-code these values.
  if (hu_lo != kFatHuLo || hu_hi != kFatHuHi)
    throw InvalidInput("hu window is fixed at [-190, -30]");
  if (window_length_mm != 40.0 || window_offset_mm != 10.0 || outer_scale != 3.0)
    throw InvalidInput("roi rules are fixed: 40 mm window, 10 mm offset, 3x outer radius");
}

std::string config_hash(const PipelineConfig& cfg) { return fnv1a_hex(config_json(cfg).dump()); }

void save_pipeline_config(const PipelineConfig& cfg, const fs::path& path) {
  cfg.validate();
  write_text(path, config_json(cfg).dump(2) + "\n");
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  const json j = parse_json(read_text(path), path);
  try {
    PipelineConfig c;
    if (j.contains("bounds")) {
      const json& b = j.at("bounds");
      const auto range = [&](const char* key, double& lo, double& hi) {
        if (!b.contains(key)) return;
        lo = b.at(key).at(0).get<double>();
        hi = b.at(key).at(1).get<double>();
      };
      range("sigma_x", c.bounds.sigma_x_lo, c.bounds.sigma_x_hi);
      range("sigma_max", c.bounds.sigma_max_lo, c.bounds.sigma_max_hi);
      range("sigma_r", c.bounds.sigma_r_lo, c.bounds.sigma_r_hi);
    }
    if (j.contains("filter")) {
      const json& f = j.at("filter");
      c.filter.sd_core = f.value("sd_core", c.filter.sd_core);
      c.filter.sd_extend = f.value("sd_extend", c.filter.sd_extend);
      c.filter.boundary_diameters = f.value("boundary_diameters", c.filter.boundary_diameters);
      c.filter.min_length_mm = f.value("min_length_mm", c.filter.min_length_mm);
    }
    c.resample_spacing = j.value("resample_spacing", c.resample_spacing);
    if (j.contains("hu_window")) {
      c.hu_lo = j.at("hu_window").at(0).get<double>();
      c.hu_hi = j.at("hu_window").at(1).get<double>();
    }
    if (j.contains("roi")) {
      const json& r = j.at("roi");
      c.window_length_mm = r.value("window_length_mm", c.window_length_mm);
      c.window_offset_mm = r.value("window_offset_mm", c.window_offset_mm);
      c.outer_scale = r.value("outer_scale", c.outer_scale);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.lr0 = t.value("lr0", c.train.lr0);
      c.train.gamma = t.value("gamma", c.train.gamma);
      c.train.hidden_layers = t.value("hidden_layers", c.train.hidden_layers);
      c.train.width = t.value("width", c.train.width);
      c.train.seed = t.value("seed", c.train.seed);
      if (t.contains("split"))
        for (std::size_t i = 0; i < 3; ++i) c.train.split[i] = t.at("split").at(i).get<double>();
      c.train.k_features = t.value("k_features", c.train.k_features);
    }
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

LabelOverride load_label_override(const fs::path& path) {
  const json j = parse_json(read_text(path), path);
  try {
    return override_from(j, path.string());
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

BranchAnalysis analyze_branch(BranchLabel label, const Centerline& c, const PipelineConfig& cfg,
                              double start_abscissa) {
  BranchAnalysis out;
  RadiusProfile prof{c.abscissa, c.radius};
  if (start_abscissa > 0.0) {
    std::size_t first = 0;
    while (first < prof.size() && prof.abscissa[first] <= start_abscissa) ++first;
    const auto n = static_cast<std::ptrdiff_t>(first);
    prof.abscissa.erase(prof.abscissa.begin(), prof.abscissa.begin() + n);
    prof.radius.erase(prof.radius.begin(), prof.radius.begin() + n);
  }
  out.resampled = resample_uniform(prof, cfg.resample_spacing);
  const OptimizeResult opt = optimize_params(out.resampled, cfg.bounds);
  out.reg = healthy_radius(out.resampled, opt.params);
  out.sd = stenosis_degree(out.resampled, out.reg.r_h);
  int id = 0;
  for (const LesionInterval& iv : detect_lesions(out.sd, out.resampled, cfg.filter)) {
    Lesion l = lesion_morphometrics(iv, out.resampled, out.sd, c);
    l.id = id++;
    l.branch = label;
    out.lesions.push_back(l);
  }
  out.debug.branch = to_string(label);
  out.debug.params = opt.params;
  out.debug.loss = opt.loss;
  out.debug.abscissa = out.resampled.abscissa;
  out.debug.r = out.resampled.radius;
  out.debug.r_max = out.reg.r_max;
  out.debug.w = out.reg.w;
  out.debug.r_h = out.reg.r_h;
  out.debug.sd = out.sd;
  out.debug.flags = opt.flags;
  return out;
}

CaseOutcome process_case(const fs::path& case_dir, const PipelineConfig& cfg,
                         const std::optional<LabelOverride>& override_labels) {
  CaseOutcome out;
  out.report.case_id = case_dir.filename().string();
  out.features.feature_names = feature_names();
  const std::string& id = out.report.case_id;
  OutputMeta meta;
  meta.config_hash = config_hash(cfg);

  CoronaryTree tree;
  VoxelVolume vol;
  BinaryMask lumen;
  std::vector<FunctionalRow> functional;
  try {
    cfg.validate();
    tree = load_tree(case_dir / "centerline.json");
    vol = load_volume(case_dir / "volume");
    lumen = load_mask(case_dir / "lumen");
    if (!lumen.same_grid(vol)) throw Error("lumen mask grid differs from the volume grid");
    if (fs::exists(case_dir / "functional.csv"))
      functional = load_functional_csv(case_dir / "functional.csv");
  } catch (const std::exception& e) {
    out.errors.push_back({id, "load", e.what()});
    return out;
  }

  const fs::path out_dir = case_dir / "out";
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    out.errors.push_back({id, "write", "cannot create " + out_dir.string()});
    return out;
  }

  ClassificationResult cls;
  try {
    cls = classify_tree(tree);
    if (override_labels) apply_label_override(cls, *override_labels);
    save_classification(cls, out_dir / "classification.json", meta);
  } catch (const std::exception& e) {
    out.errors.push_back({id, "classify", e.what()});
    return out;
  }
  out.report.classified = !cls.failed;

  std::map<std::pair<std::string, int>, FeatureTable::Functional> func_by_key;
  for (const FunctionalRow& f : functional) func_by_key[{f.branch, f.lesion_id}] = f.values;

  std::vector<Lesion> lesions;
  std::vector<PcatRow> pcat_rows;
  try {
    for (const BranchLabel label :
         {BranchLabel::RCA, BranchLabel::LAD, BranchLabel::LCx}) {
      const std::optional<std::size_t> idx = cls.index_of(label);
      if (!idx) continue;
      const Centerline& c = tree.centerlines[*idx];
      const double ref = label == BranchLabel::RCA ? 0.0 : cls.lm_end_abscissa.value_or(0.0);

      const BranchAnalysis a = analyze_branch(label, c, cfg, ref);
      save_regression_debug(a.debug, out_dir / ("regression_" + to_string(label) + ".json"),
                            meta);

      const TubeROI vessel = vessel_roi(label, c, ref);
      const RasterResult vraster = rasterize_tube(vessel, vol, lumen);
      PcatRow vrow;
      vrow.scope = "vessel";
      vrow.branch = to_string(label);
      vrow.features = pcat_features(vraster.mask, vol);
      pcat_rows.push_back(vrow);

      for (const Lesion& l : a.lesions) {
        const TubeROI tube = lesion_roi(l, c, a.resampled, a.reg.r_h);
        const RasterResult raster = rasterize_tube(tube, vol, lumen);
        PcatRow row;
        row.scope = "lesion";
        row.branch = to_string(label);
        row.lesion_id = l.id;
        row.features = pcat_features(raster.mask, vol);
        pcat_rows.push_back(row);

        if (!row.features.fai) {
          out.report.flags.push_back(to_string(label) + " lesion " + std::to_string(l.id) +
                                     " skipped: no fat voxels in the ROI");
          continue;
        }
        out.features.rows.push_back(feature_row(l, row.features, label));
        out.features.provenance.push_back({id, to_string(label), l.id});
        const auto it = func_by_key.find({to_string(label), l.id});
        out.features.functional.push_back(it == func_by_key.end() ? FeatureTable::Functional{}
                                                                  : it->second);
      }
      lesions.insert(lesions.end(), a.lesions.begin(), a.lesions.end());
    }
  } catch (const std::exception& e) {
    out.errors.push_back({id, "analyze", e.what()});
    return out;
  }

  try {
    save_lesions_csv(lesions, out_dir / "lesions.csv", meta);
    save_pcat_csv(pcat_rows, out_dir / "pcat.csv", meta);
  } catch (const std::exception& e) {
    out.errors.push_back({id, "write", e.what()});
    return out;
  }
  out.report.n_lesions = lesions.size();
  return out;
}

PipelineResult run_pipeline(const fs::path& cases_dir, const PipelineConfig& cfg, int jobs,
                            const fs::path& overrides) {
  cfg.validate();
  if (jobs < 1) throw InvalidInput("jobs must be at least 1");
  if (!fs::is_directory(cases_dir)) throw Error("missing input file: " + cases_dir.string());

  std::map<std::string, LabelOverride> by_case;
  if (!overrides.empty()) by_case = load_label_overrides(overrides);

  std::vector<fs::path> case_dirs;
  for (const auto& entry : fs::directory_iterator(cases_dir))
    if (entry.is_directory() && entry.path().filename() != "out") case_dirs.push_back(entry.path());
  std::sort(case_dirs.begin(), case_dirs.end());
  if (case_dirs.empty()) throw Error("no case directories under: " + cases_dir.string());

  const int n = static_cast<int>(case_dirs.size());
  std::vector<CaseOutcome> outcomes(static_cast<std::size_t>(n));
#pragma omp parallel for if (jobs > 1) num_threads(jobs) schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const std::string id = case_dirs[i].filename().string();
    std::optional<LabelOverride> ov;
    const auto it = by_case.find(id);
    if (it != by_case.end()) ov = it->second;
    try {
      outcomes[i] = process_case(case_dirs[i], cfg, ov);
    } catch (const std::exception& e) {
      outcomes[i].report.case_id = id;
      outcomes[i].errors.push_back({id, "case", e.what()});
    }
  }

  PipelineResult result;
  result.features.feature_names = feature_names();
  for (CaseOutcome& o : outcomes) {
    result.errors.insert(result.errors.end(), o.errors.begin(), o.errors.end());
    result.cases.push_back(std::move(o.report));
    for (std::size_t r = 0; r < o.features.num_rows(); ++r) {
      result.features.rows.push_back(std::move(o.features.rows[r]));
      result.features.functional.push_back(o.features.functional[r]);
      result.features.provenance.push_back(std::move(o.features.provenance[r]));
    }
  }

  OutputMeta meta;
  meta.config_hash = config_hash(cfg);
  const fs::path out_dir = cases_dir / "out";
  try {
    fs::create_directories(out_dir);
    save_feature_table(result.features, out_dir / "features.csv", meta);
  } catch (const std::exception& e) {
    result.errors.push_back({"pooled", "write", e.what()});
  }

  bool any_functional = false;
  for (const auto& f : result.features.functional)
    if (f.vffr || f.wss || f.dffr) {
      any_functional = true;
      break;
    }
  if (any_functional) {
    train_and_score(result, cfg, out_dir, meta);
    result.trained = !result.metrics.empty();
    if (result.trained) {
      try {
        save_metrics(result.metrics, out_dir / "metrics.json", meta);
      } catch (const std::exception& e) {
        result.errors.push_back({"pooled", "write", e.what()});
      }
    }
  } else {
    result.flags.push_back("no functional data: feature extraction only");
  }

  try {
    json rep;
    rep["cases"] = json::array();
    for (const CaseReport& c : result.cases)
      rep["cases"].push_back({{"case_id", c.case_id},
                              {"classified", c.classified},
                              {"n_lesions", c.n_lesions},
                              {"flags", c.flags}});
    rep["errors"] = json::array();
    for (const StageError& e : result.errors)
      rep["errors"].push_back(
          {{"case_id", e.case_id}, {"stage", e.stage}, {"message", e.message}});
    rep["flags"] = result.flags;
    rep["n_feature_rows"] = result.features.num_rows();
    rep["trained"] = result.trained;
    rep["config_hash"] = meta.config_hash;
    rep["tool_version"] = meta.tool_version;
    write_text(out_dir / "report.json", rep.dump(2) + "\n");
  } catch (const std::exception& e) {
    result.errors.push_back({"pooled", "write", e.what()});
  }
  return result;
}

}  // namespace corsa
