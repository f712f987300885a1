#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "stereospike/evalx.hpp"
#include "stereospike/losses.hpp"
#include "stereospike/model.hpp"
#include "stereospike/synthdata.hpp"

namespace stereospike::train {

struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lr = 2e-4;

  // Zero moments shaped like `params`.
  static AdamState for_parameters(const std::vector<NamedParameter>& params);
};

// One bias-corrected Adam update from the accumulated gradients, multiplied
// by `grad_scale` first. Missing gradients count as zero. Throws
// std::runtime_error naming the parameter on a non-finite gradient.
void adam_step(std::vector<NamedParameter>& params, AdamState& state, double grad_scale = 1.0);

struct TrainPlan {
  int epochs = 30;
  double lr0 = 2e-4;
  int lr_drop_epoch = 8;  // 1-indexed
  double lr_drop_factor = 10.0;
  int batch_size = 1;
  double weight_decay = 0.0;
  bool shuffle = true;
  bool spike_penalty_enabled = false;
  std::uint64_t seed = 0;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables

  void validate() const;
};

// Learning rate in effect during 1-indexed `epoch`.
double learning_rate_at(const TrainPlan& plan, int epoch);

struct Sample {
  std::string id;
  StereoInput input;
  DepthMap ground_truth;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

// Bins each sample's events into in_channels / 2 equal windows spanning the
// recording; the target is the depth frame at the end of the last window.
Dataset load_dataset(const synth::DatasetManifest& manifest, const ModelConfig& cfg);

// Test MDE (cm) of predicting the mean train-set depth at every pixel.
double constant_baseline_mde(const Dataset& data);

// Kaiming-initialised network, optionally firing-rate calibrated on the
// first `calibration_samples` training inputs.
StereoSpikeNet make_initialized_model(const ModelConfig& cfg, const Dataset& data, std::uint64_t seed,
                                      double gain = 1.0, bool calibrate = true, int calibration_samples = 16,
                                      ProbeResult* probe = nullptr);

struct EvalResult {
  double loss = 0.0;
  double mde_cm = 0.0;
  evalx::DensityReport report;
};

EvalResult evaluate(const StereoSpikeNet& net, const std::vector<Sample>& samples, const LossConfig& losses,
                    bool spike_penalty_enabled);

struct EpochRecord {
  int epoch = 0;
  std::string split;  // "train" or "test"
  double loss = 0.0;
  double mde_cm = 0.0;
  std::vector<double> densities;  // per traced layer, in trace order
};

// CSV columns: epoch,split,lr,loss,mde_cm, then one density column per traced
// layer (nonzero fraction, sample mean).
struct TrainingLog {
  std::vector<std::string> layer_names;
  std::vector<EpochRecord> records;
  std::vector<double> learning_rates;  // per epoch
  int best_epoch = 0;
  double best_test_mde = 0.0;
  evalx::DensityReport best_report;  // test split, best epoch

  void write_csv_header(std::ostream& out) const;
  void write_csv_row(std::ostream& out, const EpochRecord& r) const;
  void write_csv(std::ostream& out) const;
};

struct TrainOptions {
  // When set: train_log.csv, best.ssk and last.ssk are written here.
  std::filesystem::path out_dir;
  std::function<void(const EpochRecord&)> on_record;
};

// Per sample: reset potentials, forward, losses, backward, Adam. After the
// last epoch `net` holds the weights of the best-test-MDE epoch.
TrainingLog run_training(StereoSpikeNet& net, const Dataset& data, const TrainPlan& plan, const LossConfig& losses,
                         const TrainOptions& options = {});

}  // namespace stereospike::train
