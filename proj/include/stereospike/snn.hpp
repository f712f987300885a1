#pragma once

// Spiking layer semantics on top of the autodiff primitives.
//
// Every potential is reset to zero before each inference and the network
// processes a single time step, so an IF layer reduces to a thresholded
// feed-forward nonlinearity: spike = H(preact - v_thresh). Spike volumes are
// carried as SpikeTensor, which pins the exact-integer invariant and an upper
// bound on counts; convolution outputs stay plain DiffTensors (currents).

#include <string>
#include <vector>

#include "stereospike/autodiff.hpp"

namespace stereospike::snn {

using ad::DiffTape;
using ad::DiffTensor;

class SpikeRangeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class SpikeTensor {
 public:
  SpikeTensor() = default;
  // `verify` checks every entry is an integer in [0, max_count].
  SpikeTensor(DiffTensor data, int max_count, bool verify = true);

  const DiffTensor& data() const { return data_; }
  int max_count() const { return max_count_; }
  const ad::Shape& shape() const { return data_.shape(); }
  std::size_t size() const { return data_.size(); }

  // Throws SpikeRangeError naming `where` on a violation.
  void verify(const std::string& where = "spike tensor") const;
  // Largest value actually present.
  int observed_max() const;
  // Fraction of nonzero entries.
  double density() const;
  // Mean count per unit.
  double mass_density() const;

 private:
  DiffTensor data_;
  int max_count_ = 0;
};

struct IFLayer {
  double v_thresh = 1.0;
  double v_reset = 0.0;
  ad::SurrogateConfig surrogate;
};

// Binary spikes from a preactivation; membrane state is implicitly zero.
SpikeTensor if_forward(DiffTape& tape, const DiffTensor& preact, const IFLayer& layer);

struct SEWResBlock {
  DiffTensor conv_a;
  DiffTensor conv_b;
  IFLayer if_a;
  IFLayer if_b;
};

// Inner spike volumes of a SEW block, for profiling.
struct SEWInternals {
  SpikeTensor spikes_a;
  SpikeTensor spikes_b;
};

// IF(conv_b(IF(conv_a(x)))) + x; the count bound grows by one.
SpikeTensor sew_block_forward(DiffTape& tape, const SpikeTensor& x, const SEWResBlock& block,
                              const std::string& name = "sew", SEWInternals* internals = nullptr);

// Elementwise integer sum. When `bound` > 0 the resulting max_count must not
// exceed it.
SpikeTensor skip_add(DiffTape& tape, const SpikeTensor& a, const SpikeTensor& b, int bound = 0,
                     const std::string& name = "skip_add");

// Pool of non-leaky integrators with infinite threshold.
class ReadoutPool {
 public:
  ReadoutPool() = default;
  ReadoutPool(int height, int width) { reset(height, width); }

  void reset(int height, int width);
  void reset();

  // potentials += contribution; the running potential is recorded as the
  // next intermediate prediction.
  void accumulate(DiffTape& tape, const DiffTensor& contribution);

  const DiffTensor& potential() const { return potential_; }
  const std::vector<DiffTensor>& intermediate() const { return history_; }
  int height() const { return height_; }
  int width() const { return width_; }

 private:
  int height_ = 0;
  int width_ = 0;
  DiffTensor potential_;
  std::vector<DiffTensor> history_;
};

}  // namespace stereospike::snn
