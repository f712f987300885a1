#pragma once

// Flat key=value configuration shared by every CLI command.
//
// File syntax: one `key = value` per line, `#` starts a comment. Keys are the
// names listed by RunConfig::keys(). Later assignments win, so command-line
// flags applied after the file override it.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "stereospike/losses.hpp"
#include "stereospike/model.hpp"
#include "stereospike/synthdata.hpp"
#include "stereospike/train.hpp"

namespace stereospike {

struct RunConfig {
  ModelConfig model;
  train::TrainPlan plan;
  LossConfig losses;
  synth::SceneFamily scenes;

  std::uint64_t seed = 0;
  int count = 500;  // synth-gen sample count
  double init_gain = 1.0;
  bool calibrate = true;
  int calibration_samples = 16;
  std::filesystem::path data;
  std::filesystem::path out = "run";
  std::filesystem::path checkpoint;

  // Throws ConfigError naming the key for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  void load_file(const std::filesystem::path& path);
  // Cross-field checks; also pushes `seed` into the training plan.
  void finalize();

  std::string to_text() const;
  static const std::vector<std::string>& keys();
};

}  // namespace stereospike
