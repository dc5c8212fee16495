#include "corsa/io.hpp"

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace corsa {

namespace {

using json = nlohmann::json;  // object keys kept sorted

std::string canonical(const json& j) { return j.dump(2) + "\n"; }

void stamp(json& j, const OutputMeta& meta) {
  j["config_hash"] = meta.config_hash;
  j["tool_version"] = meta.tool_version;
}

void require_exists(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw Error("missing input file: " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << text;
  out.close();
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  require_exists(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Parse errors surface nlohmann's message, which carries the byte offset.
json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// Type mismatches while picking a document apart become Errors naming the
// file instead of raw library exceptions.
template <typename F>
auto guarded(const std::filesystem::path& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

const json& need(const json& j, const char* key, const std::filesystem::path& path) {
  const auto it = j.find(key);
  if (it == j.end())
    throw Error(path.string() + ": missing key \"" + key + "\"");
  return *it;
}

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from(const json& j, const std::filesystem::path& path) {
  if (!j.is_array() || j.size() != 3)
    throw Error(path.string() + ": expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Dominance dominance_from_string(const std::string& s) {
  if (s == "left") return Dominance::left;
  if (s == "right_or_codominant") return Dominance::right_or_codominant;
  if (s == "unknown") return Dominance::unknown;
  throw Error("unknown dominance: " + s);
}

// CSV bodies never quote; fields are labels, integers and shortest
// round-trip decimals.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

double parse_double(const std::string& s, const std::filesystem::path& path) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw Error(path.string() + ": bad number \"" + s + "\"");
  return v;
}

long parse_long(const std::string& s, const std::filesystem::path& path) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw Error(path.string() + ": bad integer \"" + s + "\"");
  return v;
}

std::string opt_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

std::optional<double> opt_from(const std::string& s, const std::filesystem::path& path) {
  if (s.empty()) return std::nullopt;
  return parse_double(s, path);
}

std::string csv_prefix(const OutputMeta& meta) {
  return "# config_hash=" + meta.config_hash + "\n# tool_version=" + meta.tool_version + "\n";
}

// Returns data lines (comments stripped), with the header first.
std::vector<std::string> read_csv_lines(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  std::vector<std::string> lines;
  std::string line;
  for (char c : text) {
    if (c == '\n') {
      if (!line.empty() && line[0] != '#') lines.push_back(line);
      line.clear();
    } else {
      line += c;
    }
  }
  if (!line.empty() && line[0] != '#') lines.push_back(line);
  if (lines.empty()) throw Error(path.string() + ": empty csv");
  return lines;
}

void require_header(const std::vector<std::string>& got, const std::string& want,
                    const std::filesystem::path& path) {
  std::string joined;
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (i) joined += ',';
    joined += got[i];
  }
  if (joined != want)
    throw Error(path.string() + ": unexpected header \"" + joined + "\"");
}

}  // namespace

void save_tree(const CoronaryTree& tree, const std::filesystem::path& path,
               const OutputMeta& meta) {
  json j;
  j["side"] = tree.side == Side::left ? "left" : "right";
  j["ostium"] = vec3_json(tree.ostium);
  json cls = json::array();
  for (const Centerline& c : tree.centerlines) {
    json e;
    json pts = json::array();
    for (const Vec3& p : c.points) pts.push_back(vec3_json(p));
    e["points"] = std::move(pts);
    e["radius"] = c.radius;
    cls.push_back(std::move(e));
  }
  j["centerlines"] = std::move(cls);
  stamp(j, meta);
  write_text(path, canonical(j));
}

CoronaryTree load_tree(const std::filesystem::path& path) {
  const json j = read_json(path);
  return guarded(path, [&] {
    CoronaryTree tree;
    const std::string side = need(j, "side", path).get<std::string>();
    if (side == "left")
      tree.side = Side::left;
    else if (side == "right")
      tree.side = Side::right;
    else
      throw Error(path.string() + ": unknown side \"" + side + "\"");
    tree.ostium = vec3_from(need(j, "ostium", path), path);
    for (const json& e : need(j, "centerlines", path)) {
      std::vector<Vec3> points;
      for (const json& p : need(e, "points", path)) points.push_back(vec3_from(p, path));
      std::vector<double> radius = need(e, "radius", path).get<std::vector<double>>();
      if (radius.size() != points.size())
        throw Error(path.string() + ": radius/points length mismatch");
      tree.centerlines.push_back(make_centerline(std::move(points), std::move(radius)));
    }
    tree.bifurcations = find_bifurcations(tree);
    return tree;
  });
}

void save_classification(const ClassificationResult& res, const std::filesystem::path& path,
                         const OutputMeta& meta) {
  json labels;
  for (const auto& [name, label] : {std::pair{"RCA", BranchLabel::RCA},
                                    std::pair{"LAD", BranchLabel::LAD},
                                    std::pair{"LCx", BranchLabel::LCx}}) {
    const auto idx = res.index_of(label);
    labels[name] = idx ? json(*idx) : json(nullptr);
  }
  json j;
  j["labels"] = std::move(labels);
  j["dominance"] = to_string(res.dominance);
  json all = json::array();
  for (BranchLabel l : res.labels) all.push_back(to_string(l));
  j["all_labels"] = std::move(all);
  j["failed"] = res.failed;
  j["flags"] = res.flags;
  j["rca_end_abscissa"] =
      res.rca_end_abscissa ? json(*res.rca_end_abscissa) : json(nullptr);
  j["lm_end_abscissa"] = res.lm_end_abscissa ? json(*res.lm_end_abscissa) : json(nullptr);
  stamp(j, meta);
  write_text(path, canonical(j));
}

ClassificationResult load_classification(const std::filesystem::path& path, std::size_t n) {
  const json j = read_json(path);
  return guarded(path, [&] {
    ClassificationResult res;
    res.labels.assign(n, BranchLabel::UNCLASSIFIED);
    if (j.contains("all_labels")) {
      const json& all = j["all_labels"];
      if (all.size() != n)
        throw Error(path.string() + ": all_labels length does not match the tree");
      for (std::size_t i = 0; i < n; ++i)
        res.labels[i] = branch_label_from_string(all[i].get<std::string>());
    } else {
      const json& labels = need(j, "labels", path);
      for (const auto& [name, label] : {std::pair{"RCA", BranchLabel::RCA},
                                        std::pair{"LAD", BranchLabel::LAD},
                                        std::pair{"LCx", BranchLabel::LCx}}) {
        const auto it = labels.find(name);
        if (it == labels.end() || it->is_null()) continue;
        const std::size_t idx = it->get<std::size_t>();
        if (idx >= n)
          throw Error(path.string() + ": label index out of range");
        res.labels[idx] = label;
      }
    }
    res.dominance = dominance_from_string(need(j, "dominance", path).get<std::string>());
    if (j.contains("failed")) res.failed = j["failed"].get<bool>();
    if (j.contains("flags")) res.flags = j["flags"].get<Flags>();
    if (j.contains("rca_end_abscissa") && !j["rca_end_abscissa"].is_null())
      res.rca_end_abscissa = j["rca_end_abscissa"].get<double>();
    if (j.contains("lm_end_abscissa") && !j["lm_end_abscissa"].is_null())
      res.lm_end_abscissa = j["lm_end_abscissa"].get<double>();
    return res;
  });
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& base, const char* suffix) {
  std::filesystem::path p = base;
  p += suffix;
  return p;
}

json grid_header(const std::array<std::size_t, 3>& dims, const Vec3& spacing,
                 const Vec3& origin, const Mat3& direction, const char* dtype,
                 const OutputMeta& meta) {
  json j;
  j["dims"] = dims;
  j["spacing"] = vec3_json(spacing);
  j["origin"] = vec3_json(origin);
  j["direction"] = direction.m;
  j["dtype"] = dtype;
  j["order"] = "x-fastest";
  stamp(j, meta);
  return j;
}

struct GridHeader {
  std::array<std::size_t, 3> dims{};
  Vec3 spacing, origin;
  Mat3 direction;
};

GridHeader parse_grid_header(const json& j, const char* dtype,
                             const std::filesystem::path& path) {
  return guarded(path, [&] {
    const std::string got_dtype = need(j, "dtype", path).get<std::string>();
    if (got_dtype != dtype)
      throw Error(path.string() + ": dtype \"" + got_dtype + "\", expected \"" + dtype +
                  "\"");
    const std::string order = need(j, "order", path).get<std::string>();
    if (order != "x-fastest")
      throw Error(path.string() + ": unsupported order \"" + order + "\"");
    GridHeader h;
    h.dims = need(j, "dims", path).get<std::array<std::size_t, 3>>();
    h.spacing = vec3_from(need(j, "spacing", path), path);
    h.origin = vec3_from(need(j, "origin", path), path);
    const auto dir = need(j, "direction", path).get<std::array<double, 9>>();
    h.direction.m = dir;
    return h;
  });
}

}  // namespace

void save_volume(const VoxelVolume& vol, const std::filesystem::path& base,
                 const OutputMeta& meta) {
  vol.validate();
  write_text(with_suffix(base, ".vol.json"),
             canonical(grid_header(vol.dims, vol.spacing, vol.origin, vol.direction,
                                   "int16-le", meta)));
  std::string raw(vol.data.size() * 2, '\0');
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    const auto u = static_cast<std::uint16_t>(vol.data[i]);
    raw[2 * i] = static_cast<char>(u & 0xff);
    raw[2 * i + 1] = static_cast<char>(u >> 8);
  }
  write_text(with_suffix(base, ".vol.raw"), raw);
}

VoxelVolume load_volume(const std::filesystem::path& base) {
  const auto hpath = with_suffix(base, ".vol.json");
  const GridHeader h = parse_grid_header(read_json(hpath), "int16-le", hpath);
  VoxelVolume vol;
  vol.dims = h.dims;
  vol.spacing = h.spacing;
  vol.origin = h.origin;
  vol.direction = h.direction;

  const auto rpath = with_suffix(base, ".vol.raw");
  const std::string raw = read_text(rpath);
  const std::size_t n = vol.dims[0] * vol.dims[1] * vol.dims[2];
  if (raw.size() != 2 * n)
    throw Error(rpath.string() + ": raw length " + std::to_string(raw.size()) +
                " does not match dims (expected " + std::to_string(2 * n) + ")");
  vol.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto lo = static_cast<std::uint8_t>(raw[2 * i]);
    const auto hi = static_cast<std::uint8_t>(raw[2 * i + 1]);
    vol.data[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
  }
  vol.validate();
  return vol;
}

void save_mask(const BinaryMask& mask, const std::filesystem::path& base,
               const OutputMeta& meta) {
  write_text(with_suffix(base, ".vol.json"),
             canonical(grid_header(mask.dims, mask.spacing, mask.origin, mask.direction,
                                   "uint8", meta)));
  std::string raw(mask.data.size(), '\0');
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    raw[i] = static_cast<char>(mask.data[i]);
  write_text(with_suffix(base, ".vol.raw"), raw);
}

BinaryMask load_mask(const std::filesystem::path& base) {
  const auto hpath = with_suffix(base, ".vol.json");
  const GridHeader h = parse_grid_header(read_json(hpath), "uint8", hpath);
  BinaryMask mask;
  mask.dims = h.dims;
  mask.spacing = h.spacing;
  mask.origin = h.origin;
  mask.direction = h.direction;

  const auto rpath = with_suffix(base, ".vol.raw");
  const std::string raw = read_text(rpath);
  const std::size_t n = mask.dims[0] * mask.dims[1] * mask.dims[2];
  if (raw.size() != n)
    throw Error(rpath.string() + ": raw length " + std::to_string(raw.size()) +
                " does not match dims (expected " + std::to_string(n) + ")");
  mask.data.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    mask.data[i] = static_cast<std::uint8_t>(raw[i]);
  return mask;
}

namespace {
constexpr const char* kLesionHeader =
    "branch,lesion_id,start_mm,end_mm,max_sd,length_mm,mla_mm2,dist_ostium_mm,tortuosity";
}

void save_lesions_csv(const std::vector<Lesion>& lesions, const std::filesystem::path& path,
                      const OutputMeta& meta) {
  std::string text = csv_prefix(meta) + kLesionHeader + "\n";
  for (const Lesion& l : lesions) {
    text += to_string(l.branch) + ',' + std::to_string(l.id) + ',' +
            format_double(l.start_mm) + ',' + format_double(l.end_mm) + ',' +
            format_double(l.max_sd) + ',' + format_double(l.length_mm) + ',' +
            format_double(l.mla_mm2) + ',' + format_double(l.dist_ostium_mm) + ',' +
            format_double(l.tortuosity) + '\n';
  }
  write_text(path, text);
}

std::vector<Lesion> load_lesions_csv(const std::filesystem::path& path) {
  const auto lines = read_csv_lines(path);
  require_header(split_csv(lines[0]), kLesionHeader, path);
  std::vector<Lesion> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv(lines[i]);
    if (f.size() != 9) throw Error(path.string() + ": bad field count on row " +
                                   std::to_string(i));
    Lesion l;
    l.branch = branch_label_from_string(f[0]);
    l.id = static_cast<int>(parse_long(f[1], path));
    l.start_mm = parse_double(f[2], path);
    l.end_mm = parse_double(f[3], path);
    l.max_sd = parse_double(f[4], path);
    l.length_mm = parse_double(f[5], path);
    l.mla_mm2 = parse_double(f[6], path);
    l.dist_ostium_mm = parse_double(f[7], path);
    l.tortuosity = parse_double(f[8], path);
    out.push_back(l);
  }
  return out;
}

void save_regression_debug(const RegressionDebug& debug, const std::filesystem::path& path,
                           const OutputMeta& meta) {
  json j;
  j["branch"] = debug.branch;
  j["params"] = {{"sigma_x", debug.params.sigma_x},
                 {"sigma_max", debug.params.sigma_max},
                 {"sigma_r", debug.params.sigma_r},
                 {"kappa", debug.params.kappa}};
  j["loss"] = debug.loss;
  j["abscissa"] = debug.abscissa;
  j["r"] = debug.r;
  j["r_max"] = debug.r_max;
  j["w"] = debug.w;
  j["r_h"] = debug.r_h;
  j["sd"] = debug.sd;
  j["flags"] = debug.flags;
  stamp(j, meta);
  write_text(path, canonical(j));
}

RegressionDebug load_regression_debug(const std::filesystem::path& path) {
  const json j = read_json(path);
  return guarded(path, [&] {
    RegressionDebug d;
    d.branch = need(j, "branch", path).get<std::string>();
    const json& p = need(j, "params", path);
    d.params.sigma_x = need(p, "sigma_x", path).get<double>();
    d.params.sigma_max = need(p, "sigma_max", path).get<double>();
    d.params.sigma_r = need(p, "sigma_r", path).get<double>();
    d.params.kappa = need(p, "kappa", path).get<double>();
    d.loss = need(j, "loss", path).get<double>();
    d.abscissa = need(j, "abscissa", path).get<std::vector<double>>();
    d.r = need(j, "r", path).get<std::vector<double>>();
    d.r_max = need(j, "r_max", path).get<std::vector<double>>();
    d.w = need(j, "w", path).get<std::vector<double>>();
    d.r_h = need(j, "r_h", path).get<std::vector<double>>();
    d.sd = need(j, "sd", path).get<std::vector<double>>();
    if (j.contains("flags")) d.flags = j["flags"].get<Flags>();
    return d;
  });
}

namespace {
constexpr const char* kPcatHeader =
    "scope,branch,lesion_id,fai,p10,p25,p50,p75,p90,p95,fat_fraction,fat_volume_mm3,"
    "roi_voxels,fat_voxels";
}

void save_pcat_csv(const std::vector<PcatRow>& rows, const std::filesystem::path& path,
                   const OutputMeta& meta) {
  std::string text = csv_prefix(meta) + kPcatHeader + "\n";
  for (const PcatRow& r : rows) {
    const PcatFeatures& f = r.features;
    text += r.scope + ',' + r.branch + ',' +
            (r.lesion_id ? std::to_string(*r.lesion_id) : std::string()) + ',' +
            opt_field(f.fai) + ',' + opt_field(f.p10) + ',' + opt_field(f.p25) + ',' +
            opt_field(f.p50) + ',' + opt_field(f.p75) + ',' + opt_field(f.p90) + ',' +
            opt_field(f.p95) + ',' + format_double(f.fat_fraction) + ',' +
            format_double(f.fat_volume_mm3) + ',' + std::to_string(f.roi_voxels) + ',' +
            std::to_string(f.fat_voxels) + '\n';
  }
  write_text(path, text);
}

std::vector<PcatRow> load_pcat_csv(const std::filesystem::path& path) {
  const auto lines = read_csv_lines(path);
  require_header(split_csv(lines[0]), kPcatHeader, path);
  std::vector<PcatRow> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv(lines[i]);
    if (f.size() != 14) throw Error(path.string() + ": bad field count on row " +
                                    std::to_string(i));
    PcatRow r;
    r.scope = f[0];
    if (r.scope != "vessel" && r.scope != "lesion")
      throw Error(path.string() + ": unknown scope \"" + r.scope + "\"");
    r.branch = f[1];
    if (!f[2].empty()) r.lesion_id = static_cast<int>(parse_long(f[2], path));
    r.features.fai = opt_from(f[3], path);
    r.features.p10 = opt_from(f[4], path);
    r.features.p25 = opt_from(f[5], path);
    r.features.p50 = opt_from(f[6], path);
    r.features.p75 = opt_from(f[7], path);
    r.features.p90 = opt_from(f[8], path);
    r.features.p95 = opt_from(f[9], path);
    r.features.fat_fraction = parse_double(f[10], path);
    r.features.fat_volume_mm3 = parse_double(f[11], path);
    r.features.roi_voxels = static_cast<std::size_t>(parse_long(f[12], path));
    r.features.fat_voxels = static_cast<std::size_t>(parse_long(f[13], path));
    out.push_back(std::move(r));
  }
  return out;
}

namespace {
constexpr const char* kFunctionalHeader = "branch,lesion_id,vffr,wss,dffr";
}

void save_functional_csv(const std::vector<FunctionalRow>& rows,
                         const std::filesystem::path& path, const OutputMeta& meta) {
  std::string text = csv_prefix(meta) + kFunctionalHeader + "\n";
  for (const FunctionalRow& r : rows)
    text += r.branch + ',' + std::to_string(r.lesion_id) + ',' + opt_field(r.values.vffr) +
            ',' + opt_field(r.values.wss) + ',' + opt_field(r.values.dffr) + '\n';
  write_text(path, text);
}

std::vector<FunctionalRow> load_functional_csv(const std::filesystem::path& path) {
  const auto lines = read_csv_lines(path);
  require_header(split_csv(lines[0]), kFunctionalHeader, path);
  std::vector<FunctionalRow> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv(lines[i]);
    if (f.size() != 5) throw Error(path.string() + ": bad field count on row " +
                                   std::to_string(i));
    FunctionalRow r;
    r.branch = f[0];
    r.lesion_id = static_cast<int>(parse_long(f[1], path));
    r.values.vffr = opt_from(f[2], path);
    r.values.wss = opt_from(f[3], path);
    r.values.dffr = opt_from(f[4], path);
    out.push_back(std::move(r));
  }
  return out;
}

void save_feature_table(const FeatureTable& table, const std::filesystem::path& path,
                        const OutputMeta& meta) {
  table.validate();
  std::string text = csv_prefix(meta) + "patient,branch,lesion_id";
  for (const std::string& name : table.feature_names) text += ',' + name;
  text += ",vffr,wss,dffr\n";
  for (std::size_t i = 0; i < table.num_rows(); ++i) {
    const auto& prov = table.provenance[i];
    text += prov.patient + ',' + prov.branch + ',' + std::to_string(prov.lesion_id);
    for (double v : table.rows[i]) text += ',' + format_double(v);
    const auto& fn = table.functional[i];
    text += ',' + opt_field(fn.vffr) + ',' + opt_field(fn.wss) + ',' + opt_field(fn.dffr) +
            '\n';
  }
  write_text(path, text);
}

FeatureTable load_feature_table(const std::filesystem::path& path) {
  const auto lines = read_csv_lines(path);
  const auto header = split_csv(lines[0]);
  if (header.size() < 6 || header[0] != "patient" || header[1] != "branch" ||
      header[2] != "lesion_id")
    throw Error(path.string() + ": feature csv must start with patient,branch,lesion_id");

  // The label columns are declared by name; everything else in between is
  // a feature column.
  FeatureTable table;
  std::size_t i_vffr = 0, i_wss = 0, i_dffr = 0;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 3; c < header.size(); ++c) {
    if (header[c] == "vffr")
      i_vffr = c;
    else if (header[c] == "wss")
      i_wss = c;
    else if (header[c] == "dffr")
      i_dffr = c;
    else {
      feature_cols.push_back(c);
      table.feature_names.push_back(header[c]);
    }
  }
  if (i_vffr == 0 || i_wss == 0 || i_dffr == 0)
    throw Error(path.string() + ": feature csv must declare vffr, wss and dffr columns");

  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv(lines[i]);
    if (f.size() != header.size())
      throw Error(path.string() + ": bad field count on row " + std::to_string(i));
    FeatureTable::Provenance prov;
    prov.patient = f[0];
    prov.branch = f[1];
    prov.lesion_id = static_cast<int>(parse_long(f[2], path));
    table.provenance.push_back(std::move(prov));
    std::vector<double> row;
    row.reserve(feature_cols.size());
    for (std::size_t c : feature_cols) row.push_back(parse_double(f[c], path));
    table.rows.push_back(std::move(row));
    FeatureTable::Functional fn;
    fn.vffr = opt_from(f[i_vffr], path);
    fn.wss = opt_from(f[i_wss], path);
    fn.dffr = opt_from(f[i_dffr], path);
    table.functional.push_back(fn);
  }
  table.validate();
  return table;
}

void save_model(const MlpModel& model, const std::filesystem::path& path,
                const OutputMeta& meta) {
  model.validate();
  json j;
  j["config"] = {{"epochs", model.config.epochs},
                 {"lr0", model.config.lr0},
                 {"gamma", model.config.gamma},
                 {"hidden_layers", model.config.hidden_layers},
                 {"width", model.config.width},
                 {"seed", model.config.seed},
                 {"split", model.config.split},
                 {"k_features", model.config.k_features}};
  j["selected_features"] = model.selected_features;
  j["normalization"] = {{"mean", model.norm_mean}, {"std", model.norm_std}};
  json layers = json::array();
  for (const MlpLayer& l : model.layers) layers.push_back({{"w", l.w}, {"b", l.b}});
  j["layers"] = std::move(layers);
  stamp(j, meta);
  write_text(path, canonical(j));
}

MlpModel load_model(const std::filesystem::path& path) {
  const json j = read_json(path);
  return guarded(path, [&] {
    MlpModel m;
    const json& c = need(j, "config", path);
    m.config.epochs = need(c, "epochs", path).get<int>();
    m.config.lr0 = need(c, "lr0", path).get<double>();
    m.config.gamma = need(c, "gamma", path).get<double>();
    m.config.hidden_layers = need(c, "hidden_layers", path).get<int>();
    m.config.width = need(c, "width", path).get<int>();
    m.config.seed = need(c, "seed", path).get<std::uint64_t>();
    m.config.split = need(c, "split", path).get<std::array<double, 3>>();
    m.config.k_features = need(c, "k_features", path).get<std::size_t>();
    m.selected_features = need(j, "selected_features", path).get<std::vector<std::string>>();
    const json& norm = need(j, "normalization", path);
    m.norm_mean = need(norm, "mean", path).get<std::vector<double>>();
    m.norm_std = need(norm, "std", path).get<std::vector<double>>();
    for (const json& l : need(j, "layers", path)) {
      MlpLayer layer;
      layer.w = need(l, "w", path).get<std::vector<std::vector<double>>>();
      layer.b = need(l, "b", path).get<std::vector<double>>();
      m.layers.push_back(std::move(layer));
    }
    m.validate();
    return m;
  });
}

namespace {

json metrics_json(const Metrics& m) {
  json j;
  j["accuracy"] = m.accuracy;
  j["f1"] = m.f1;
  j["auc"] = m.auc ? json(*m.auc) : json(nullptr);
  j["loss_mean"] = m.loss_mean;
  j["loss_std"] = m.loss_std;
  j["flags"] = m.flags;
  return j;
}

Metrics metrics_from(const json& j, const std::filesystem::path& path) {
  Metrics m;
  m.accuracy = need(j, "accuracy", path).get<double>();
  m.f1 = need(j, "f1", path).get<double>();
  const json& auc = need(j, "auc", path);
  if (!auc.is_null()) m.auc = auc.get<double>();
  m.loss_mean = need(j, "loss_mean", path).get<double>();
  m.loss_std = need(j, "loss_std", path).get<double>();
  if (j.contains("flags")) m.flags = j["flags"].get<Flags>();
  return m;
}

}  // namespace

void save_metrics(const std::vector<MetricsEntry>& entries, const std::filesystem::path& path,
                  const OutputMeta& meta) {
  json arr = json::array();
  for (const MetricsEntry& e : entries) {
    json ej;
    ej["criterion"] = e.criterion;
    ej["branch_subset"] = e.branch_subset;
    ej["n_train"] = e.n_train;
    ej["n_val"] = e.n_val;
    ej["n_test"] = e.n_test;
    ej["selected_features"] = e.selected_features;
    ej["test"] = metrics_json(e.test);
    arr.push_back(std::move(ej));
  }
  json j;
  j["entries"] = std::move(arr);
  stamp(j, meta);
  write_text(path, canonical(j));
}

std::vector<MetricsEntry> load_metrics(const std::filesystem::path& path) {
  const json j = read_json(path);
  return guarded(path, [&] {
    std::vector<MetricsEntry> out;
    for (const json& ej : need(j, "entries", path)) {
      MetricsEntry e;
      e.criterion = need(ej, "criterion", path).get<std::string>();
      e.branch_subset = need(ej, "branch_subset", path).get<std::string>();
      e.n_train = need(ej, "n_train", path).get<std::size_t>();
      e.n_val = need(ej, "n_val", path).get<std::size_t>();
      e.n_test = need(ej, "n_test", path).get<std::size_t>();
      e.selected_features =
          need(ej, "selected_features", path).get<std::vector<std::string>>();
      e.test = metrics_from(need(ej, "test", path), path);
      out.push_back(std::move(e));
    }
    return out;
  });
}

void save_truth(const GroundTruth& truth, const std::filesystem::path& path,
                const OutputMeta& meta) {
  json j;
  j["baseline"] = truth.baseline;
  json lesions = json::array();
  for (const LesionSpec& l : truth.lesions)
    lesions.push_back({{"center_mm", l.center_mm},
                       {"depth", l.depth},
                       {"width_mm", l.width_mm},
                       {"shape", l.shape == LesionShape::gaussian ? "gaussian" : "cosine"}});
  j["lesions"] = std::move(lesions);
  json labels = json::array();
  for (BranchLabel l : truth.labels) labels.push_back(to_string(l));
  j["labels"] = std::move(labels);
  j["dominance"] = to_string(truth.dominance);
  j["lm_end_abscissa"] = truth.lm_end_abscissa;
  j["rca_bifurcation_abscissa"] = truth.rca_bifurcation_abscissa;
  json counts = json::array();
  for (const auto& [hu, cnt] : truth.hu_counts) counts.push_back({hu, cnt});
  j["hu_counts"] = std::move(counts);
  j["annulus_voxels"] = truth.annulus_voxels;
  j["lumen_voxels"] = truth.lumen_voxels;
  j["rule"] = truth.rule;
  j["signal_cols"] = truth.signal_cols;
  j["rule_weights"] = truth.rule_weights;
  j["planted_labels"] = truth.planted_labels;
  j["flags"] = truth.flags;
  stamp(j, meta);
  write_text(path, canonical(j));
}

GroundTruth load_truth(const std::filesystem::path& path) {
  const json j = read_json(path);
  return guarded(path, [&] {
    GroundTruth t;
    t.baseline = need(j, "baseline", path).get<std::vector<double>>();
    for (const json& l : need(j, "lesions", path)) {
      LesionSpec spec;
      spec.center_mm = need(l, "center_mm", path).get<double>();
      spec.depth = need(l, "depth", path).get<double>();
      spec.width_mm = need(l, "width_mm", path).get<double>();
      const std::string shape = need(l, "shape", path).get<std::string>();
      spec.shape = shape == "cosine" ? LesionShape::cosine : LesionShape::gaussian;
      t.lesions.push_back(spec);
    }
    for (const json& l : need(j, "labels", path))
      t.labels.push_back(branch_label_from_string(l.get<std::string>()));
    t.dominance = dominance_from_string(need(j, "dominance", path).get<std::string>());
    t.lm_end_abscissa = need(j, "lm_end_abscissa", path).get<double>();
    t.rca_bifurcation_abscissa = need(j, "rca_bifurcation_abscissa", path).get<double>();
    for (const json& c : need(j, "hu_counts", path))
      t.hu_counts.emplace_back(c[0].get<int>(), c[1].get<std::size_t>());
    t.annulus_voxels = need(j, "annulus_voxels", path).get<std::size_t>();
    t.lumen_voxels = need(j, "lumen_voxels", path).get<std::size_t>();
    t.rule = need(j, "rule", path).get<std::string>();
    t.signal_cols = need(j, "signal_cols", path).get<std::vector<std::size_t>>();
    t.rule_weights = need(j, "rule_weights", path).get<std::vector<double>>();
    t.planted_labels = need(j, "planted_labels", path).get<std::vector<int>>();
    t.flags = need(j, "flags", path).get<Flags>();
    return t;
  });
}

namespace {

json test_result_json(const TestResult& t) {
  json j;
  j["statistic"] = t.statistic;
  j["p_value"] = t.p_value;
  j["n1"] = t.n1;
  j["n2"] = t.n2;
  j["method"] = t.method;
  return j;
}

}  // namespace

void save_comparison(const GroupComparison& cmp, const std::string& feature,
                     const std::string& group_column, const std::filesystem::path& path,
                     const OutputMeta& meta) {
  json j;
  j["feature"] = feature;
  j["group_column"] = group_column;
  j["normality"] = {{"group_a", test_result_json(cmp.normality_a)},
                    {"group_b", test_result_json(cmp.normality_b)}};
  j["chosen_test"] = cmp.comparison.method;
  j["statistic"] = cmp.comparison.statistic;
  j["p"] = cmp.comparison.p_value;
  j["flags"] = cmp.flags;
  stamp(j, meta);
  write_text(path, canonical(j));
}

void save_predictions_csv(const std::vector<PredictionRow>& rows,
                          const std::filesystem::path& path, const OutputMeta& meta) {
  std::string text = csv_prefix(meta) + "patient,branch,lesion_id,probability\n";
  for (const PredictionRow& r : rows)
    text += r.provenance.patient + ',' + r.provenance.branch + ',' +
            std::to_string(r.provenance.lesion_id) + ',' + format_double(r.probability) +
            '\n';
  write_text(path, text);
}

}  // namespace corsa
