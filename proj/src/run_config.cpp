#include "stereospike/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace stereospike {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_integer(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key), "expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const std::string s(v);
    const double d = std::stod(s, &used);
    if (used == s.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(key), "expected a number, got '" + std::string(v) + "'");
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(std::string(key), "expected true|false, got '" + std::string(v) + "'");
}

std::vector<int> parse_int_list(std::string_view key, std::string_view v) {
  std::vector<int> out;
  std::string item;
  std::istringstream in{std::string(v)};
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_integer<int>(key, item));
  }
  return out;
}

std::string real_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Field {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define REAL_FIELD(name, member) \
  {name, {[](RunConfig& c, std::string_view v) { c.member = parse_real(name, v); }, [](const RunConfig& c) { return real_text(c.member); }}}
#define INT_FIELD(name, member) \
  {name, {[](RunConfig& c, std::string_view v) { c.member = parse_integer<int>(name, v); }, [](const RunConfig& c) { return std::to_string(c.member); }}}
#define BOOL_FIELD(name, member) \
  {name, {[](RunConfig& c, std::string_view v) { c.member = parse_bool(name, v); }, [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}}
#define PATH_FIELD(name, member) \
  {name, {[](RunConfig& c, std::string_view v) { c.member = std::string(v); }, [](const RunConfig& c) { return c.member.string(); }}}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = {
      {"mode", {[](RunConfig& c, std::string_view v) { c.model.mode = parse_mode(v); },
                [](const RunConfig& c) { return to_string(c.model.mode); }}},
      {"skip_source", {[](RunConfig& c, std::string_view v) { c.model.skip_source = parse_skip_source(v); },
                       [](const RunConfig& c) { return to_string(c.model.skip_source); }}},
      {"depth_coding", {[](RunConfig& c, std::string_view v) { c.model.codec.coding = parse_depth_coding(v); },
                        [](const RunConfig& c) { return to_string(c.model.codec.coding); }}},
      {"regression_form", {[](RunConfig& c, std::string_view v) { c.losses.regression_form = parse_regression_form(v); },
                           [](const RunConfig& c) { return to_string(c.losses.regression_form); }}},
      {"loss_scales", {[](RunConfig& c, std::string_view v) { c.losses.scales = parse_int_list("loss_scales", v); },
                       [](const RunConfig& c) {
                         std::string s;
                         for (int k : c.losses.scales) s += (s.empty() ? "" : ",") + std::to_string(k);
                         return s;
                       }}},
      {"seed", {[](RunConfig& c, std::string_view v) { c.seed = parse_integer<std::uint64_t>("seed", v); },
                [](const RunConfig& c) { return std::to_string(c.seed); }}},
      INT_FIELD("in_channels", model.in_channels),
      INT_FIELD("base_channels", model.base_channels),
      INT_FIELD("n_scales", model.n_scales),
      INT_FIELD("kernel_size", model.kernel_size),
      INT_FIELD("height", model.input_height),
      INT_FIELD("width", model.input_width),
      REAL_FIELD("v_thresh", model.v_thresh),
      REAL_FIELD("surrogate_alpha", model.surrogate_alpha),
      REAL_FIELD("d_min", model.codec.d_min),
      REAL_FIELD("d_max", model.codec.d_max),
      INT_FIELD("epochs", plan.epochs),
      REAL_FIELD("lr", plan.lr0),
      INT_FIELD("lr_drop_epoch", plan.lr_drop_epoch),
      REAL_FIELD("lr_drop_factor", plan.lr_drop_factor),
      INT_FIELD("batch_size", plan.batch_size),
      REAL_FIELD("weight_decay", plan.weight_decay),
      BOOL_FIELD("shuffle", plan.shuffle),
      BOOL_FIELD("spike_penalty", plan.spike_penalty_enabled),
      REAL_FIELD("clip_norm", plan.clip_norm),
      REAL_FIELD("lambda_smooth", losses.lambda_smooth),
      REAL_FIELD("lambda_spike", losses.lambda_spike),
      INT_FIELD("count", count),
      REAL_FIELD("init_gain", init_gain),
      BOOL_FIELD("calibrate", calibrate),
      INT_FIELD("calibration_samples", calibration_samples),
      REAL_FIELD("synth_ego_speed", scenes.ego_speed),
      REAL_FIELD("synth_baseline", scenes.baseline),
      REAL_FIELD("synth_theta", scenes.theta),
      REAL_FIELD("synth_duration", scenes.duration),
      REAL_FIELD("synth_background_depth_min", scenes.background_depth_min),
      REAL_FIELD("synth_contrast_min", scenes.contrast_min),
      REAL_FIELD("synth_contrast_max", scenes.contrast_max),
      REAL_FIELD("synth_min_size", scenes.min_size),
      REAL_FIELD("synth_max_size", scenes.max_size),
      INT_FIELD("synth_min_objects", scenes.min_objects),
      INT_FIELD("synth_max_objects", scenes.max_objects),
      REAL_FIELD("synth_gt_keep_fraction", scenes.gt_keep_fraction),
      PATH_FIELD("data", data),
      PATH_FIELD("out", out),
      PATH_FIELD("checkpoint", checkpoint),
  };
  return table;
}

#undef REAL_FIELD
#undef INT_FIELD
#undef BOOL_FIELD
#undef PATH_FIELD

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError(std::string(key), "unknown configuration key");
  it->second.set(*this, trim(value));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config", path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    set(trim(std::string_view(body).substr(0, eq)), std::string_view(body).substr(eq + 1));
  }
}

void RunConfig::finalize() {
  plan.seed = seed;
  scenes.height = model.input_height;
  scenes.width = model.input_width;
  scenes.d_min = model.codec.d_min;
  scenes.d_max = model.codec.d_max;
  model.validate();
  plan.validate();
  losses.validate();
  if (count < 1) throw ConfigError("count", "must be >= 1");
  if (calibration_samples < 1) throw ConfigError("calibration_samples", "must be >= 1");
  if (!(init_gain > 0.0)) throw ConfigError("init_gain", "must be positive");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(*this) + "\n";
  return out;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> k;
    for (const auto& [key, field] : fields()) k.push_back(key);
    return k;
  }();
  return names;
}

}  // namespace stereospike
