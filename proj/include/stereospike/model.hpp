#pragma once

// The StereoSpike network: one or two strided-convolution encoder branches,
// a two-block SEW bottleneck, a nearest-neighbour-upsampling decoder with
// summed skip connections, and per-scale prediction synapses that integrate
// into a readout pool. No layer has a bias and there is no normalization.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stereospike/autodiff.hpp"
#include "stereospike/errors.hpp"
#include "stereospike/events.hpp"
#include "stereospike/snn.hpp"

namespace stereospike {

using ad::DiffTape;
using ad::DiffTensor;

enum class Mode { kMonocular, kBinocular };
// Which encoder tensors feed the decoder skips in binocular mode.
enum class SkipSource { kSummed, kLeftOnly };
enum class DepthCoding { kLog, kLinear };

std::string to_string(Mode mode);
std::string to_string(SkipSource source);
std::string to_string(DepthCoding coding);
Mode parse_mode(std::string_view text);
SkipSource parse_skip_source(std::string_view text);
DepthCoding parse_depth_coding(std::string_view text);

// Maps readout potentials to metric depth and back.
//   log:    depth = d_max * exp(potential - 1)
//   linear: depth = d_max * potential
// Decoded depths are clamped to [d_min, d_max].
struct DepthCodec {
  double d_min = 0.5;
  double d_max = 10.0;
  DepthCoding coding = DepthCoding::kLog;

  double decode(double potential) const;
  double encode(double depth) const;
};

struct DepthMap {
  int height = 0;
  int width = 0;
  std::vector<float> depth;         // meters
  std::vector<std::uint8_t> valid;  // 1 where depth is meaningful

  static DepthMap filled(int height, int width, float value);
  std::size_t n_valid() const;
  float at(int y, int x) const { return depth[static_cast<std::size_t>(y) * width + x]; }
  bool is_valid(int y, int x) const { return valid[static_cast<std::size_t>(y) * width + x] != 0; }
};

DepthMap decode_depth(std::span<const float> potential, int height, int width, const DepthCodec& codec);

struct ModelConfig {
  Mode mode = Mode::kBinocular;
  int in_channels = 10;
  int base_channels = 8;
  int n_scales = 4;
  int kernel_size = 3;
  int input_height = 64;
  int input_width = 64;
  SkipSource skip_source = SkipSource::kSummed;
  double v_thresh = 1.0;
  double v_reset = 0.0;
  double surrogate_alpha = 2.0;
  DepthCodec codec;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
  int channels_at(int level) const { return base_channels << level; }

  friend bool operator==(const ModelConfig& a, const ModelConfig& b);
};

// Report order: encoder L, encoder R (binocular), bottleneck, decoder.
std::vector<std::string> trace_layer_names(const ModelConfig& cfg);

struct TraceEntry {
  std::string name;
  snn::SpikeTensor spikes;
  double density = 0.0;
};

struct ForwardTrace {
  std::vector<TraceEntry> layers;
  // IF outputs keyed by the producing weight name (includes SEW internals).
  std::vector<std::pair<std::string, double>> if_densities;
  // (scale level, cumulative readout potential), coarsest first.
  std::vector<std::pair<int, DiffTensor>> intermediate_predictions;

  const TraceEntry* find(std::string_view name) const;
  const TraceEntry& at(std::string_view name) const;
};

struct ForwardResult {
  DepthMap depth;
  DiffTensor potential;
  ForwardTrace trace;
};

struct ForwardOptions {
  // Re-check integrality and count bounds of every spike tensor.
  bool verify_spikes = true;
};

struct NamedParameter {
  std::string name;
  DiffTensor tensor;
};

class StereoSpikeNet {
 public:
  // All weights start at zero; see initialize_weights.
  explicit StereoSpikeNet(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  DiffTensor& parameter(std::string_view name);
  const DiffTensor& parameter(std::string_view name) const;
  std::size_t parameter_count() const;

  // `right` must be present iff the model is binocular. The pool is reset
  // before use; after the call it holds the final potentials.
  ForwardResult forward(DiffTape& tape, const InputChunk& left, const InputChunk* right,
                        snn::ReadoutPool& pool, const ForwardOptions& options = {}) const;
  ForwardResult forward(DiffTape& tape, const InputChunk& left, const InputChunk* right,
                        const ForwardOptions& options = {}) const;
  // Forward pass without recording gradients.
  ForwardResult infer(const InputChunk& left, const InputChunk* right,
                      const ForwardOptions& options = {}) const;

 private:
  DiffTensor input_tensor(const InputChunk& chunk, const char* side) const;
  std::size_t index_of(std::string_view name) const;

  ModelConfig config_;
  std::vector<NamedParameter> params_;
};

// Zeroes the readout potentials. The network itself carries no neuron state.
void reset_all(const StereoSpikeNet& net, snn::ReadoutPool& pool);

enum class InitScheme { kKaiming, kZero };

// Fan-in scaled normal weights (std = gain / sqrt(fan_in)).
void initialize_weights(StereoSpikeNet& net, std::uint64_t seed, InitScheme scheme = InitScheme::kKaiming,
                        double gain = 1.0);

struct StereoInput {
  InputChunk left;
  std::optional<InputChunk> right;
};

struct ProbeResult {
  // Spiking weight name -> (scale applied, mean density after calibration).
  std::vector<std::tuple<std::string, double, double>> layers;
  bool all_in_band = true;
};

// Rescales each spiking layer's weights, in forward order, so that its mean
// firing rate over `probe` lands near `target` (within [band_lo, band_hi]).
ProbeResult calibrate_firing_rates(StereoSpikeNet& net, std::span<const StereoInput> probe,
                                   double target = 0.15, double band_lo = 0.05, double band_hi = 0.30);

// ---------------------------------------------------------------------------
// Checkpoints (`.ssk`), little-endian:
//   "SSPK", version u16,
//   config: u32 count, then count x (u32 len + key bytes, u32 len + value bytes)
//   params: u32 count, then count x (u32 len + name, u32 ndim, ndim x u32 dims, f32 data)

inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

std::map<std::string, std::string> config_to_kv(const ModelConfig& cfg);
ModelConfig config_from_kv(const std::map<std::string, std::string>& kv);

std::vector<std::uint8_t> encode_checkpoint(const StereoSpikeNet& net);
StereoSpikeNet decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const StereoSpikeNet& net, const std::filesystem::path& path);
StereoSpikeNet load_checkpoint(const std::filesystem::path& path);
// Also throws ConfigError naming the first field that differs from `expected`.
StereoSpikeNet load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace stereospike
