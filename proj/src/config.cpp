#include "lrfpn/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace lrfpn {
namespace {

constexpr const char* kValidTokens = "sp, pp, si, ci, li, ni";

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("config: {} expects a non-negative integer, got '{}'", key, v));
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("config: {} expects a real number, got '{}'", key, v));
  }
}

}  // namespace

AblationFlags normalized(AblationFlags f) {
  if (!f.cim.use_si) f.cim.use_li = f.cim.use_ni = false;
  if (!f.cim.use_li && !f.cim.use_ni) f.cim.use_si = false;
  return f;
}

AblationFlags parse_flags(const std::string& tokens) {
  AblationFlags f = AblationFlags::none();
  const std::string t = trim(tokens);
  if (t == "none" || t.empty()) return f;
  bool li = false, ni = false, si = false;
  for (const std::string& tok : split(t, ',')) {
    if (tok == "sp") f.spiem.use_sp = true;
    else if (tok == "pp") f.spiem.use_pp = true;
    else if (tok == "ci") f.cim.use_ci = true;
    else if (tok == "si") si = true;
    else if (tok == "li") li = true;
    else if (tok == "ni") ni = true;
    else throw ConfigError(fmt::format("unknown flag token '{}'; valid tokens: {}", tok, kValidTokens));
  }
  if (si && !li && !ni) li = ni = true;
  f.cim.use_si = li || ni;
  f.cim.use_li = li;
  f.cim.use_ni = ni;
  return f;
}

std::string format_flags(const AblationFlags& raw) {
  const AblationFlags f = normalized(raw);
  std::vector<std::string> out;
  if (f.spiem.use_sp) out.emplace_back("sp");
  if (f.spiem.use_pp) out.emplace_back("pp");
  if (f.cim.use_si) out.emplace_back("si");
  if (f.cim.use_ci) out.emplace_back("ci");
  if (f.cim.local()) out.emplace_back("li");
  if (f.cim.non_local()) out.emplace_back("ni");
  return out.empty() ? "none" : fmt::format("{}", fmt::join(out, ","));
}

const std::vector<FlagSet>& ablation_rows() {
  static const std::vector<FlagSet> rows = {
      {"baseline", parse_flags("none")},
      {"+SPIEM", parse_flags("sp,pp")},
      {"+CIM", parse_flags("si,ci")},
      {"+CIM+SP", parse_flags("sp,si,ci")},
      {"+CIM+PP", parse_flags("pp,si,ci")},
      {"+SPIEM+SI", parse_flags("sp,pp,si")},
      {"+SPIEM+CI", parse_flags("sp,pp,ci")},
      {"+SPIEM+CI+NI", parse_flags("sp,pp,ci,ni")},
      {"+SPIEM+CI+LI", parse_flags("sp,pp,ci,li")},
      {"full", parse_flags("sp,pp,si,ci,li,ni")},
  };
  return rows;
}

std::string flag_set_label(const AblationFlags& flags) {
  const AblationFlags f = normalized(flags);
  for (const FlagSet& row : ablation_rows()) {
    if (row.flags == f) return row.label;
  }
  return "custom:" + format_flags(f);
}

FlagSet find_row(const std::string& label) {
  std::vector<std::string> labels;
  for (const FlagSet& row : ablation_rows()) {
    if (row.label == label) return row;
    labels.push_back(row.label);
  }
  throw ConfigError(fmt::format("unknown flag set '{}'; valid sets: {}", label, fmt::join(labels, ", ")));
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto size = [&](std::size_t& dst) { dst = static_cast<std::size_t>(parse_uint(key, v)); };
  if (key == "image_size") size(c.model.image_size);
  else if (key == "image_channels") size(c.model.image_channels);
  else if (key == "stage_channels") {
    const auto parts = split(v, ',');
    if (parts.size() != 4) throw ConfigError("config: stage_channels expects 4 comma-separated values");
    for (std::size_t i = 0; i < 4; ++i) c.model.stage_channels[i] = parse_uint(key, parts[i]);
  } else if (key == "pyramid_channels") size(c.model.pyramid_channels);
  else if (key == "reduction") size(c.model.reduction);
  else if (key == "dilation") size(c.model.dilation);
  else if (key == "conv_path") c.model.path = conv_path_from_string(v);
  else if (key == "steps") size(c.train.steps);
  else if (key == "batch") size(c.train.batch);
  else if (key == "lr") c.train.sgd.lr = parse_real(key, v);
  else if (key == "momentum") c.train.sgd.momentum = parse_real(key, v);
  else if (key == "weight_decay") c.train.sgd.weight_decay = parse_real(key, v);
  else if (key == "objects_min") size(c.scene.min_objects);
  else if (key == "objects_max") size(c.scene.max_objects);
  else if (key == "object_size_min") size(c.scene.min_size);
  else if (key == "object_size_max") size(c.scene.max_size);
  else if (key == "seeds") {
    c.seeds.clear();
    for (const std::string& s : split(v, ',')) c.seeds.push_back(parse_uint(key, s));
  } else if (key == "flags") c.flags = parse_flags(v);
  else if (key == "out_dir") c.out_dir = v;
  else if (key == "gradcheck_probes") size(c.gradcheck_probes);
  else if (key == "gradcheck_step") c.gradcheck_step = parse_real(key, v);
  else if (key == "gradcheck_tolerance") c.gradcheck_tolerance = parse_real(key, v);
  else if (key == "bench_reps") size(c.bench_reps);
  else if (key == "bench_warmup") size(c.bench_warmup);
  else if (key == "dtype") {
    if (v == "f64") c.dtype = DType::f64;
    else if (v == "f32") c.dtype = DType::f32;
    else throw ConfigError(fmt::format("config: dtype must be f32 or f64, got '{}'", v));
  } else if (key == "jobs") size(c.jobs);
  else throw ConfigError(fmt::format("config: unknown key '{}'", key));
}

void RunConfig::validate() const {
  model.validate();
  scene_spec().validate();
  if (train.steps == 0) throw ConfigError("config: steps must be >= 1");
  if (train.batch == 0) throw ConfigError("config: batch must be >= 1");
  if (!(train.sgd.lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (!(train.sgd.momentum >= 0.0 && train.sgd.momentum < 1.0)) {
    throw ConfigError("config: momentum must be in [0, 1)");
  }
  if (!(train.sgd.weight_decay >= 0.0)) throw ConfigError("config: weight_decay must be >= 0");
  if (seeds.empty()) throw ConfigError("config: seeds list is empty");
  if (gradcheck_probes == 0) throw ConfigError("config: gradcheck_probes must be >= 1");
  if (!(gradcheck_step > 0.0)) throw ConfigError("config: gradcheck_step must be positive");
  if (!(gradcheck_tolerance > 0.0)) throw ConfigError("config: gradcheck_tolerance must be positive");
  if (bench_reps == 0) throw ConfigError("config: bench_reps must be >= 1");
  if (jobs == 0) throw ConfigError("config: jobs must be >= 1");
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("config line {}: expected 'key = value'", lineno));
    }
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(fmt::format("config line {}: duplicate key '{}'", lineno, key));
    set_config_value(c, key, line.substr(eq + 1));
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string format_config(const RunConfig& c) {
  const auto& m = c.model;
  std::string out;
  auto put = [&out](const char* key, const auto& value) { out += fmt::format("{} = {}\n", key, value); };
  put("image_size", m.image_size);
  put("image_channels", m.image_channels);
  put("stage_channels", fmt::format("{}", fmt::join(m.stage_channels, ",")));
  put("pyramid_channels", m.pyramid_channels);
  put("reduction", m.reduction);
  put("dilation", m.dilation);
  put("conv_path", to_string(m.path));
  put("steps", c.train.steps);
  put("batch", c.train.batch);
  put("lr", c.train.sgd.lr);
  put("momentum", c.train.sgd.momentum);
  put("weight_decay", c.train.sgd.weight_decay);
  put("objects_min", c.scene.min_objects);
  put("objects_max", c.scene.max_objects);
  put("object_size_min", c.scene.min_size);
  put("object_size_max", c.scene.max_size);
  put("seeds", fmt::format("{}", fmt::join(c.seeds, ",")));
  put("flags", format_flags(c.flags));
  put("out_dir", c.out_dir);
  put("gradcheck_probes", c.gradcheck_probes);
  put("gradcheck_step", c.gradcheck_step);
  put("gradcheck_tolerance", c.gradcheck_tolerance);
  put("bench_reps", c.bench_reps);
  put("bench_warmup", c.bench_warmup);
  put("dtype", c.dtype == DType::f64 ? "f64" : "f32");
  put("jobs", c.jobs);
  return out;
}

}  // namespace lrfpn
