#include <charconv>
#include <cstdio>

#include "binary_io.hpp"
#include "stereospike/model.hpp"

namespace stereospike {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError(key, "missing from checkpoint config");
  return it->second;
}

int to_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  const std::string& s = require(kv, key);
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key, "not an integer: '" + s + "'");
  return v;
}

double to_double(const std::map<std::string, std::string>& kv, const std::string& key) {
  const std::string& s = require(kv, key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "not a number: '" + s + "'");
  }
}

}  // namespace

std::map<std::string, std::string> config_to_kv(const ModelConfig& cfg) {
  return {
      {"mode", to_string(cfg.mode)},
      {"in_channels", std::to_string(cfg.in_channels)},
      {"base_channels", std::to_string(cfg.base_channels)},
      {"n_scales", std::to_string(cfg.n_scales)},
      {"kernel_size", std::to_string(cfg.kernel_size)},
      {"input_height", std::to_string(cfg.input_height)},
      {"input_width", std::to_string(cfg.input_width)},
      {"skip_source", to_string(cfg.skip_source)},
      {"v_thresh", format_double(cfg.v_thresh)},
      {"v_reset", format_double(cfg.v_reset)},
      {"surrogate_alpha", format_double(cfg.surrogate_alpha)},
      {"d_min", format_double(cfg.codec.d_min)},
      {"d_max", format_double(cfg.codec.d_max)},
      {"depth_coding", to_string(cfg.codec.coding)},
  };
}

ModelConfig config_from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig cfg;
  cfg.mode = parse_mode(require(kv, "mode"));
  cfg.in_channels = to_int(kv, "in_channels");
  cfg.base_channels = to_int(kv, "base_channels");
  cfg.n_scales = to_int(kv, "n_scales");
  cfg.kernel_size = to_int(kv, "kernel_size");
  cfg.input_height = to_int(kv, "input_height");
  cfg.input_width = to_int(kv, "input_width");
  cfg.skip_source = parse_skip_source(require(kv, "skip_source"));
  cfg.v_thresh = to_double(kv, "v_thresh");
  cfg.v_reset = to_double(kv, "v_reset");
  cfg.surrogate_alpha = to_double(kv, "surrogate_alpha");
  cfg.codec.d_min = to_double(kv, "d_min");
  cfg.codec.d_max = to_double(kv, "d_max");
  cfg.codec.coding = parse_depth_coding(require(kv, "depth_coding"));
  cfg.validate();
  return cfg;
}

std::vector<std::uint8_t> encode_checkpoint(const StereoSpikeNet& net) {
  io::ByteWriter w;
  w.raw("SSPK");
  w.u16(kCheckpointVersion);
  const auto kv = config_to_kv(net.config());
  w.u32(static_cast<std::uint32_t>(kv.size()));
  for (const auto& [k, v] : kv) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(net.parameters().size()));
  for (const NamedParameter& p : net.parameters()) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.tensor.shape().size()));
    for (int d : p.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : p.tensor.values()) w.f32(v);
  }
  return std::move(w.bytes());
}

StereoSpikeNet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  try {
    io::ByteReader r(bytes, "checkpoint");
    if (r.raw(4) != "SSPK") throw CheckpointFormatError("checkpoint: bad magic (not an .ssk file)");
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion) {
      throw CheckpointVersionError("checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                                   std::to_string(kCheckpointVersion) + ")");
    }
    std::map<std::string, std::string> kv;
    const std::uint32_t n_kv = r.u32();
    for (std::uint32_t i = 0; i < n_kv; ++i) {
      std::string key = r.str();
      kv[key] = r.str();
    }
    StereoSpikeNet net(config_from_kv(kv));

    const std::uint32_t n_params = r.u32();
    if (n_params != net.parameters().size()) {
      throw CheckpointShapeError("checkpoint: " + std::to_string(n_params) + " parameters, config implies " +
                                 std::to_string(net.parameters().size()));
    }
    for (NamedParameter& p : net.parameters()) {
      const std::string name = r.str();
      if (name != p.name) throw CheckpointShapeError("checkpoint: expected parameter " + p.name + ", found " + name);
      ad::Shape shape(r.u32());
      for (int& d : shape) d = static_cast<int>(r.u32());
      if (shape != p.tensor.shape()) {
        throw CheckpointShapeError("checkpoint: parameter " + name + " has shape " + ad::to_string(shape) +
                                   ", config implies " + ad::to_string(p.tensor.shape()));
      }
      for (float& v : p.tensor.mutable_values()) v = r.f32();
    }
    if (r.remaining() != 0) throw CheckpointFormatError("checkpoint: trailing bytes after parameters");
    return net;
  } catch (const io::TruncatedError& e) {
    throw CheckpointTruncatedError(e.what());
  }
}

void save_checkpoint(const StereoSpikeNet& net, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(net));
}

StereoSpikeNet load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

StereoSpikeNet load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  StereoSpikeNet net = load_checkpoint(path);
  const auto have = config_to_kv(net.config());
  for (const auto& [key, value] : config_to_kv(expected)) {
    if (have.at(key) != value) {
      throw ConfigError(key, "checkpoint has '" + have.at(key) + "', expected '" + value + "'");
    }
  }
  return net;
}

}  // namespace stereospike
