#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stereospike/model.hpp"
#include "stereospike/snn.hpp"

namespace stereospike::evalx {

// Mean absolute depth error over ground-truth-valid pixels, in centimeters.
double mde(const DepthMap& pred, const DepthMap& gt);

// Fraction of nonzero entries.
double density(const snn::SpikeTensor& t);

struct DensityRow {
  std::string name;
  double density = 0.0;       // nonzero fraction, averaged over samples
  double mass_density = 0.0;  // mean count per unit, averaged over samples
  bool group_mean = false;
};

struct DensityReport {
  std::vector<DensityRow> rows;  // layers and group means, in table order
  double mde_cm = 0.0;

  const DensityRow* find(const std::string& name) const;
  double group_mean(const std::string& group) const;

  void write_csv(std::ostream& out) const;
  void write_text(std::ostream& out) const;
  void save(const std::filesystem::path& dir) const;  // report.csv + report.txt
};

// Group name for a traced layer: "Left Encoder", "Right Encoder", "Bottleneck"
// or "Decoder".
std::string layer_group(const std::string& layer);

// Running per-layer sums so a split can be profiled without keeping traces.
class DensityAccumulator {
 public:
  void add(const ForwardTrace& trace);
  std::size_t count() const { return n_; }
  DensityReport report(double mde_cm) const;

 private:
  std::vector<std::string> names_;
  std::vector<double> density_sum_;
  std::vector<double> mass_sum_;
  std::size_t n_ = 0;
};

DensityReport density_report(const std::vector<ForwardTrace>& traces, double mde_cm);

// 16-bit big-endian PGM of depth in millimeters (0 where invalid).
void write_depth_pgm(const DepthMap& map, const std::filesystem::path& path);
// u32 H, u32 W, then H*W little-endian f32 depths; NaN where invalid.
void write_depth_f32(const DepthMap& map, const std::filesystem::path& path);
DepthMap read_depth_f32(const std::filesystem::path& path);

}  // namespace stereospike::evalx
