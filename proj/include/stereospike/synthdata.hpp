#pragma once

// Synthetic stereo event scenes with exact depth.
//
// A scene is a textured background plane plus axis-aligned textured
// rectangles, each fronto-parallel at a fixed depth and translating at a
// constant image velocity. Sample scenes mimic a translating camera, so image
// velocity is proportional to inverse depth. The right view shifts every
// surface left by baseline / depth pixels. Events follow the DVS model: a
// pixel fires each time its log-luminance moves theta away from the level at
// its previous event.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stereospike/events.hpp"
#include "stereospike/model.hpp"

namespace stereospike::synth {

// Periodic bilinear value noise.
class Texture {
 public:
  Texture() = default;
  Texture(std::uint64_t seed, double mean, double contrast, double cell = 3.0, int period = 24);

  // Log-luminance at continuous surface coordinates.
  double sample(double u, double v) const;

  double mean() const { return mean_; }
  double contrast() const { return contrast_; }

 private:
  std::vector<float> lattice_;
  int period_ = 1;
  double cell_ = 1.0;
  double mean_ = 0.0;
  double contrast_ = 0.0;
};

struct SceneObject {
  double x = 0.0;  // top-left corner at t = 0 in the left view, pixels
  double y = 0.0;
  double width = 0.0;
  double height = 0.0;
  double depth = 1.0;  // meters
  double vx = 0.0;     // pixels per second
  double vy = 0.0;
  Texture texture;
};

enum class View { kLeft, kRight };

struct SceneSpec {
  int height = 64;
  int width = 64;
  std::vector<SceneObject> objects;
  double background_depth = 5.0;
  double background_vx = 0.0;
  double background_vy = 0.0;
  Texture background;
  double baseline = 4.0;  // disparity in pixels = baseline / depth
  double duration = 0.25;  // seconds
  double theta = 0.15;     // log-luminance contrast threshold
  double render_step = 1e-3;  // seconds
  double d_min = 0.5;
  double d_max = 10.0;
  // Fraction of ground-truth pixels kept valid (1 keeps a dense map).
  double gt_keep_fraction = 1.0;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Horizontal image shift of a surface at `depth` in `view`.
double view_shift(const SceneSpec& spec, double depth, View view);

std::vector<float> render_log_luminance(const SceneSpec& spec, double t, View view);
DepthMap render_depth(const SceneSpec& spec, double t, View view = View::kLeft);
EventStream generate_events(const SceneSpec& spec, View view);

// Distribution of random scenes used for datasets.
struct SceneFamily {
  int height = 64;
  int width = 64;
  double d_min = 0.5;
  double d_max = 10.0;
  double background_depth_min = 3.0;
  double ego_speed = 20.0;  // pixel-meters per second: image speed = ego_speed / depth
  double baseline = 4.0;
  int min_objects = 1;
  int max_objects = 3;
  double min_size = 12.0;
  double max_size = 36.0;
  double contrast_min = 0.4;
  double contrast_max = 0.8;
  double duration = 0.25;
  double theta = 0.15;
  double gt_keep_fraction = 1.0;

  void validate() const;
};

SceneSpec sample_scene(const SceneFamily& family, std::uint64_t seed);

struct DepthFrame {
  Microseconds t = 0;
  std::string path;  // relative to the dataset root
};

struct SampleRecord {
  std::string id;
  std::string left;
  std::string right;
  std::vector<DepthFrame> depth;
  bool train = true;
};

struct DatasetManifest {
  std::filesystem::path root;
  int height = 0;
  int width = 0;
  Microseconds duration = 0;
  Microseconds gt_period = 0;
  std::uint64_t seed = 0;
  std::vector<SampleRecord> samples;

  std::size_t train_count() const;
  std::size_t test_count() const;
};

inline constexpr Microseconds kGroundTruthPeriod = 50'000;  // 20 Hz

// Writes <out>/sample_NNNN/{left.evt,right.evt,depth_TTTTTT.f32} and
// <out>/manifest.json. The train/test split is a seeded 80/20 permutation.
DatasetManifest make_dataset(const SceneFamily& family, int count, const std::filesystem::path& out_dir,
                             std::uint64_t seed);
DatasetManifest load_manifest(const std::filesystem::path& manifest_or_dir);

}  // namespace stereospike::synth
