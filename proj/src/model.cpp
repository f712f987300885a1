#include "stereospike/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace stereospike {

std::string to_string(Mode mode) { return mode == Mode::kMonocular ? "mono" : "bino"; }
std::string to_string(SkipSource source) { return source == SkipSource::kSummed ? "summed" : "left"; }
std::string to_string(DepthCoding coding) { return coding == DepthCoding::kLog ? "log" : "linear"; }

Mode parse_mode(std::string_view text) {
  if (text == "mono" || text == "monocular") return Mode::kMonocular;
  if (text == "bino" || text == "binocular") return Mode::kBinocular;
  throw ConfigError("mode", "expected mono or bino, got '" + std::string(text) + "'");
}

SkipSource parse_skip_source(std::string_view text) {
  if (text == "summed") return SkipSource::kSummed;
  if (text == "left") return SkipSource::kLeftOnly;
  throw ConfigError("skip_source", "expected summed or left, got '" + std::string(text) + "'");
}

DepthCoding parse_depth_coding(std::string_view text) {
  if (text == "log") return DepthCoding::kLog;
  if (text == "linear") return DepthCoding::kLinear;
  throw ConfigError("depth_coding", "expected log or linear, got '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// depth

double DepthCodec::decode(double potential) const {
  const double d = coding == DepthCoding::kLog ? d_max * std::exp(potential - 1.0) : d_max * potential;
  return std::clamp(d, d_min, d_max);
}

double DepthCodec::encode(double depth) const {
  return coding == DepthCoding::kLog ? 1.0 + std::log(depth / d_max) : depth / d_max;
}

DepthMap DepthMap::filled(int height, int width, float value) {
  DepthMap m;
  m.height = height;
  m.width = width;
  m.depth.assign(static_cast<std::size_t>(height) * width, value);
  m.valid.assign(m.depth.size(), 1);
  return m;
}

std::size_t DepthMap::n_valid() const {
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; }));
}

DepthMap decode_depth(std::span<const float> potential, int height, int width, const DepthCodec& codec) {
  if (potential.size() != static_cast<std::size_t>(height) * width) {
    throw GeometryError("decode_depth: potential raster size does not match " + std::to_string(height) + "x" +
                        std::to_string(width));
  }
  DepthMap m = DepthMap::filled(height, width, 0.0f);
  for (std::size_t i = 0; i < potential.size(); ++i) {
    m.depth[i] = static_cast<float>(codec.decode(potential[i]));
  }
  return m;
}

// ---------------------------------------------------------------------------
// config

void ModelConfig::validate() const {
  if (in_channels < 2 || in_channels % 2 != 0) {
    throw ConfigError("in_channels", "must be a positive multiple of 2 (two polarities per frame)");
  }
  if (base_channels < 1) throw ConfigError("base_channels", "must be >= 1");
  if (n_scales < 1 || n_scales > 6) throw ConfigError("n_scales", "must be in [1, 6]");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel_size", "must be odd");
  const int div = 1 << n_scales;
  if (input_height < div || input_height % div != 0) {
    throw ConfigError("input_height", "must be a positive multiple of " + std::to_string(div));
  }
  if (input_width < div || input_width % div != 0) {
    throw ConfigError("input_width", "must be a positive multiple of " + std::to_string(div));
  }
  if (!(v_thresh > v_reset)) throw ConfigError("v_thresh", "must exceed v_reset");
  if (!(surrogate_alpha > 0.0)) throw ConfigError("surrogate_alpha", "must be > 0");
  if (!(codec.d_min > 0.0)) throw ConfigError("d_min", "must be > 0");
  if (!(codec.d_max > codec.d_min)) throw ConfigError("d_max", "must exceed d_min");
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return config_to_kv(a) == config_to_kv(b);
}

std::vector<std::string> trace_layer_names(const ModelConfig& cfg) {
  std::vector<std::string> names;
  const auto encoder = [&](const char* side) {
    names.push_back(std::string("out_bottom") + side);
    for (int k = 1; k <= cfg.n_scales; ++k) names.push_back("out_conv" + std::to_string(k) + side);
  };
  encoder("L");
  if (cfg.mode == Mode::kBinocular) encoder("R");
  names.push_back("out_combined");
  names.push_back("out_rconv");
  for (int k = cfg.n_scales; k >= 1; --k) {
    names.push_back("out_deconv" + std::to_string(k));
    names.push_back("out_add" + std::to_string(k));
  }
  return names;
}

const TraceEntry* ForwardTrace::find(std::string_view name) const {
  for (const TraceEntry& e : layers) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const TraceEntry& ForwardTrace::at(std::string_view name) const {
  const TraceEntry* e = find(name);
  if (!e) throw std::out_of_range("no traced layer named " + std::string(name));
  return *e;
}

// ---------------------------------------------------------------------------
// network

namespace {

void add_param(std::vector<NamedParameter>& params, std::string name, int c_out, int c_in, int k) {
  ad::Shape shape{c_out, c_in, k, k};
  params.push_back({std::move(name), DiffTensor::parameter(shape, std::vector<float>(ad::numel(shape), 0.0f))});
}

}  // namespace

StereoSpikeNet::StereoSpikeNet(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int k = config_.kernel_size;
  const int n = config_.n_scales;
  const auto encoder = [&](const std::string& side) {
    add_param(params_, "bottom" + side, config_.channels_at(0), config_.in_channels, k);
    for (int j = 1; j <= n; ++j) {
      add_param(params_, "conv" + std::to_string(j) + side, config_.channels_at(j), config_.channels_at(j - 1), k);
    }
  };
  encoder("L");
  if (config_.mode == Mode::kBinocular) encoder("R");
  const int latent = config_.channels_at(n);
  for (int b = 1; b <= 2; ++b) {
    add_param(params_, "bottleneck" + std::to_string(b) + ".conv_a", latent, latent, k);
    add_param(params_, "bottleneck" + std::to_string(b) + ".conv_b", latent, latent, k);
  }
  for (int j = n; j >= 1; --j) {
    add_param(params_, "deconv" + std::to_string(j), config_.channels_at(j - 1), config_.channels_at(j), k);
  }
  for (int j = n; j >= 1; --j) {
    add_param(params_, "predict" + std::to_string(j), 1, config_.channels_at(j - 1), k);
  }
}

std::size_t StereoSpikeNet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

DiffTensor& StereoSpikeNet::parameter(std::string_view name) { return params_[index_of(name)].tensor; }

const DiffTensor& StereoSpikeNet::parameter(std::string_view name) const {
  return params_[index_of(name)].tensor;
}

std::size_t StereoSpikeNet::parameter_count() const {
  std::size_t n = 0;
  for (const NamedParameter& p : params_) n += p.tensor.size();
  return n;
}

DiffTensor StereoSpikeNet::input_tensor(const InputChunk& chunk, const char* side) const {
  if (chunk.channels() != config_.in_channels || chunk.height != config_.input_height ||
      chunk.width != config_.input_width) {
    throw GeometryError(std::string(side) + " chunk is (" + std::to_string(chunk.channels()) + "," +
                        std::to_string(chunk.height) + "," + std::to_string(chunk.width) +
                        "), model expects (" + std::to_string(config_.in_channels) + "," +
                        std::to_string(config_.input_height) + "," + std::to_string(config_.input_width) + ")");
  }
  std::vector<float> v(chunk.data.begin(), chunk.data.end());
  return DiffTensor::constant({chunk.channels(), chunk.height, chunk.width}, std::move(v));
}

ForwardResult StereoSpikeNet::forward(DiffTape& tape, const InputChunk& left, const InputChunk* right,
                                      snn::ReadoutPool& pool, const ForwardOptions& options) const {
  const bool binocular = config_.mode == Mode::kBinocular;
  if (binocular != (right != nullptr)) {
    throw GeometryError(binocular ? "binocular model needs a right chunk" : "monocular model takes no right chunk");
  }
  reset_all(*this, pool);

  const int n = config_.n_scales;
  const int pad = config_.kernel_size / 2;
  snn::IFLayer neuron;
  neuron.v_thresh = config_.v_thresh;
  neuron.v_reset = config_.v_reset;
  neuron.surrogate.alpha = config_.surrogate_alpha;

  ForwardResult result;
  ForwardTrace& trace = result.trace;
  const auto keep = [&](const std::string& name, const snn::SpikeTensor& s) {
    if (options.verify_spikes) s.verify(name);
    trace.layers.push_back({name, s, s.density()});
  };
  const auto spiking_conv = [&](const DiffTensor& in, const std::string& weight, int stride) {
    const DiffTensor pre = ad::conv2d(tape, in, parameter(weight), stride, pad, weight);
    snn::SpikeTensor s = snn::if_forward(tape, pre, neuron);
    trace.if_densities.emplace_back(weight, s.density());
    return s;
  };

  const auto encode = [&](const InputChunk& chunk, const char* side) {
    std::vector<snn::SpikeTensor> levels;
    const DiffTensor x = input_tensor(chunk, side);
    levels.push_back(spiking_conv(x, std::string("bottom") + side, 1));
    keep(std::string("out_bottom") + side, levels.back());
    for (int j = 1; j <= n; ++j) {
      const snn::SpikeTensor& prev = levels.back();
      levels.push_back(spiking_conv(prev.data(), "conv" + std::to_string(j) + side, 2));
      keep("out_conv" + std::to_string(j) + side, levels.back());
    }
    return levels;
  };

  const std::vector<snn::SpikeTensor> enc_l = encode(left, "L");
  std::vector<snn::SpikeTensor> enc_r;
  if (binocular) enc_r = encode(*right, "R");

  snn::SpikeTensor latent = binocular ? snn::skip_add(tape, enc_l[n], enc_r[n], 0, "out_combined") : enc_l[n];
  keep("out_combined", latent);

  for (int b = 1; b <= 2; ++b) {
    const std::string prefix = "bottleneck" + std::to_string(b);
    const snn::SEWResBlock block{parameter(prefix + ".conv_a"), parameter(prefix + ".conv_b"), neuron, neuron};
    snn::SEWInternals inner;
    latent = snn::sew_block_forward(tape, latent, block, prefix, &inner);
    trace.if_densities.emplace_back(prefix + ".conv_a", inner.spikes_a.density());
    trace.if_densities.emplace_back(prefix + ".conv_b", inner.spikes_b.density());
  }
  if (latent.max_count() > 4) {
    throw snn::SpikeRangeError("bottleneck count bound exceeds 4");
  }
  keep("out_rconv", latent);

  snn::SpikeTensor decoded = latent;
  for (int j = n; j >= 1; --j) {
    const std::string level = std::to_string(j);
    const DiffTensor up = ad::nn_upsample(tape, decoded.data(), 2);
    snn::SpikeTensor deconv = spiking_conv(up, "deconv" + level, 1);
    keep("out_deconv" + level, deconv);

    snn::SpikeTensor skip = enc_l[j - 1];
    if (binocular && config_.skip_source == SkipSource::kSummed) {
      skip = snn::skip_add(tape, enc_l[j - 1], enc_r[j - 1], 0, "skip" + level);
    }
    decoded = snn::skip_add(tape, deconv, skip, 3, "out_add" + level);
    keep("out_add" + level, decoded);

    const int factor = 1 << (j - 1);
    const DiffTensor src = factor > 1 ? ad::nn_upsample(tape, decoded.data(), factor) : decoded.data();
    const DiffTensor contribution = ad::conv2d(tape, src, parameter("predict" + level), 1, pad, "predict" + level);
    pool.accumulate(tape, contribution);
    trace.intermediate_predictions.emplace_back(j, pool.potential());
  }

  result.potential = pool.potential();
  result.depth = decode_depth(result.potential.values(), config_.input_height, config_.input_width, config_.codec);
  return result;
}

ForwardResult StereoSpikeNet::forward(DiffTape& tape, const InputChunk& left, const InputChunk* right,
                                      const ForwardOptions& options) const {
  snn::ReadoutPool pool;
  return forward(tape, left, right, pool, options);
}

ForwardResult StereoSpikeNet::infer(const InputChunk& left, const InputChunk* right,
                                    const ForwardOptions& options) const {
  DiffTape tape(false);
  return forward(tape, left, right, options);
}

void reset_all(const StereoSpikeNet& net, snn::ReadoutPool& pool) {
  pool.reset(net.config().input_height, net.config().input_width);
}

// ---------------------------------------------------------------------------
// initialization

void initialize_weights(StereoSpikeNet& net, std::uint64_t seed, InitScheme scheme, double gain) {
  std::mt19937_64 rng(seed);
  for (NamedParameter& p : net.parameters()) {
    std::span<float> w = p.tensor.mutable_values();
    if (scheme == InitScheme::kZero) {
      std::fill(w.begin(), w.end(), 0.0f);
      continue;
    }
    const ad::Shape& s = p.tensor.shape();
    const double fan_in = static_cast<double>(s[1]) * s[2] * s[3];
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(fan_in));
    for (float& v : w) v = static_cast<float>(dist(rng));
  }
}

namespace {

double probe_density(const StereoSpikeNet& net, std::span<const StereoInput> probe, const std::string& weight) {
  double total = 0.0;
  for (const StereoInput& in : probe) {
    const ForwardResult r = net.infer(in.left, in.right ? &*in.right : nullptr, ForwardOptions{false});
    for (const auto& [name, d] : r.trace.if_densities) {
      if (name == weight) total += d;
    }
  }
  return total / static_cast<double>(probe.size());
}

void scale_weights(DiffTensor& w, double factor) {
  for (float& v : w.mutable_values()) v = static_cast<float>(v * factor);
}

}  // namespace

ProbeResult calibrate_firing_rates(StereoSpikeNet& net, std::span<const StereoInput> probe, double target,
                                   double band_lo, double band_hi) {
  if (probe.empty()) throw std::invalid_argument("calibrate_firing_rates: empty probe set");
  ProbeResult result;
  for (NamedParameter& p : net.parameters()) {
    if (p.name.rfind("predict", 0) == 0) continue;
    const std::vector<float> original(p.tensor.values().begin(), p.tensor.values().end());
    const auto density_at = [&](double log_scale) {
      std::copy(original.begin(), original.end(), p.tensor.mutable_values().begin());
      scale_weights(p.tensor, std::exp(log_scale));
      return probe_density(net, probe, p.name);
    };
    // Density is monotone in a positive weight scale; bisect in log space.
    double lo = std::log(1.0 / 64.0), hi = std::log(64.0);
    double best = 0.0, best_d = density_at(0.0);
    for (int it = 0; it < 12 && std::abs(best_d - target) > 0.01; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double d = density_at(mid);
      if (std::abs(d - target) < std::abs(best_d - target)) {
        best = mid;
        best_d = d;
      }
      (d < target ? lo : hi) = mid;
    }
    density_at(best);
    result.layers.emplace_back(p.name, std::exp(best), best_d);
    if (best_d < band_lo || best_d > band_hi) result.all_in_band = false;
  }
  return result;
}

}  // namespace stereospike
