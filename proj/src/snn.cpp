#include "stereospike/snn.hpp"

#include <cmath>

namespace stereospike::snn {

SpikeTensor::SpikeTensor(DiffTensor data, int max_count, bool verify_now)
    : data_(std::move(data)), max_count_(max_count) {
  if (max_count_ < 0) throw std::invalid_argument("spike tensor max_count must be >= 0");
  if (verify_now) verify();
}

void SpikeTensor::verify(const std::string& where) const {
  const float bound = static_cast<float>(max_count_);
  for (float v : data_.values()) {
    if (!(v >= 0.0f && v <= bound) || std::floor(v) != v) {
      throw SpikeRangeError(where + ": value " + std::to_string(v) + " violates integer range [0, " +
                            std::to_string(max_count_) + "]");
    }
  }
}

int SpikeTensor::observed_max() const {
  float m = 0.0f;
  for (float v : data_.values()) m = std::max(m, v);
  return static_cast<int>(m);
}

double SpikeTensor::density() const {
  if (data_.size() == 0) return 0.0;
  std::size_t nz = 0;
  for (float v : data_.values()) nz += v != 0.0f;
  return static_cast<double>(nz) / static_cast<double>(data_.size());
}

double SpikeTensor::mass_density() const {
  if (data_.size() == 0) return 0.0;
  double sum = 0.0;
  for (float v : data_.values()) sum += v;
  return sum / static_cast<double>(data_.size());
}

SpikeTensor if_forward(DiffTape& tape, const DiffTensor& preact, const IFLayer& layer) {
  if (!(layer.v_thresh > layer.v_reset)) {
    throw std::invalid_argument("IF layer requires v_thresh > v_reset");
  }
  // v_reset only matters across time steps; with one step and zeroed state
  // the post-spike reset is never observed.
  return SpikeTensor(ad::heaviside_surrogate(tape, preact, layer.v_thresh, layer.surrogate), 1, false);
}

SpikeTensor sew_block_forward(DiffTape& tape, const SpikeTensor& x, const SEWResBlock& block,
                              const std::string& name, SEWInternals* internals) {
  const int channels = x.shape().at(0);
  for (const DiffTensor* w : {&block.conv_a, &block.conv_b}) {
    if (w->dim(0) != channels || w->dim(1) != channels) {
      throw ad::ShapeError(name + ": residual convs must map " + std::to_string(channels) +
                           " channels to themselves, got weight " + ad::to_string(w->shape()));
    }
  }
  const int pad = block.conv_a.dim(2) / 2;
  const DiffTensor a = ad::conv2d(tape, x.data(), block.conv_a, 1, pad, name + ".conv_a");
  const SpikeTensor sa = if_forward(tape, a, block.if_a);
  const DiffTensor b = ad::conv2d(tape, sa.data(), block.conv_b, 1, pad, name + ".conv_b");
  const SpikeTensor sb = if_forward(tape, b, block.if_b);
  if (internals) *internals = {sa, sb};
  return SpikeTensor(ad::add(tape, sb.data(), x.data()), x.max_count() + 1, false);
}

SpikeTensor skip_add(DiffTape& tape, const SpikeTensor& a, const SpikeTensor& b, int bound,
                     const std::string& name) {
  if (a.shape() != b.shape()) {
    throw ad::ShapeError(name + ": shape mismatch " + ad::to_string(a.shape()) + " vs " +
                         ad::to_string(b.shape()));
  }
  const int max_count = a.max_count() + b.max_count();
  if (bound > 0 && max_count > bound) {
    throw SpikeRangeError(name + ": count bound " + std::to_string(max_count) + " exceeds " +
                          std::to_string(bound));
  }
  return SpikeTensor(ad::add(tape, a.data(), b.data()), max_count, false);
}

void ReadoutPool::reset(int height, int width) {
  height_ = height;
  width_ = width;
  reset();
}

void ReadoutPool::reset() {
  potential_ = DiffTensor::zeros({1, height_, width_});
  history_.clear();
}

void ReadoutPool::accumulate(DiffTape& tape, const DiffTensor& contribution) {
  if (contribution.shape() != potential_.shape()) {
    throw ad::ShapeError("readout: contribution shape " + ad::to_string(contribution.shape()) +
                         " does not match pool " + ad::to_string(potential_.shape()));
  }
  potential_ = ad::add(tape, potential_, contribution);
  history_.push_back(potential_);
}

}  // namespace stereospike::snn
