#pragma once

// Training objectives, all evaluated in readout-potential space.
//
//   regression  per prediction i: (1/n) sum_u r(u)^2 - (1/n^2) (sum_u r(u))^2,
//               averaged over the included predictions
//   smoothness  per prediction i: (1/n) sum_u |dx r(u)| + |dy r(u)|, forward
//               differences over pixel pairs whose endpoints are both valid,
//               summed over predictions
//   spikes      per penalized layer with K units: (1/(2K)) sum_k S_k^2, summed
//   total       regression + lambda_smooth * smoothness [+ lambda_spike * spikes]
//
// r = prediction - encoded ground truth and n counts valid pixels.
//
// The regression form above is invariant to a constant shift of r, so it
// leaves the absolute depth scale free. RegressionForm::kAnchored uses 1/n^3
// in place of 1/n^2, so a constant shift of r is no longer free.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stereospike/autodiff.hpp"
#include "stereospike/model.hpp"
#include "stereospike/snn.hpp"

namespace stereospike {

template <typename Real>
struct ResidualMap {
  ad::Tensor<Real> r;  // (1, H, W); entries at invalid pixels are ignored
  std::vector<std::uint8_t> valid;
  int height = 0;
  int width = 0;
  std::size_t n_valid = 0;
};

// residual = prediction - target over the (1, H, W) raster.
template <typename Real>
ResidualMap<Real> make_residual(ad::Tape<Real>& tape, const ad::Tensor<Real>& prediction,
                                const ad::Tensor<Real>& target, std::vector<std::uint8_t> valid);

ResidualMap<float> make_residual(DiffTape& tape, const DiffTensor& prediction, const DepthMap& ground_truth,
                                 const DepthCodec& codec);

enum class RegressionForm { kVariance, kAnchored };

std::string to_string(RegressionForm form);
RegressionForm parse_regression_form(std::string_view text);

template <typename Real>
ad::Tensor<Real> regression_loss(ad::Tape<Real>& tape, std::span<const ResidualMap<Real>> residuals,
                                 RegressionForm form = RegressionForm::kVariance);

template <typename Real>
ad::Tensor<Real> smoothness_loss(ad::Tape<Real>& tape, std::span<const ResidualMap<Real>> residuals);

DiffTensor spike_penalty(DiffTape& tape, std::span<const snn::SpikeTensor> layers);

struct LossConfig {
  double lambda_smooth = 0.5;
  double lambda_spike = 5e-3;
  RegressionForm regression_form = RegressionForm::kVariance;
  // Intermediate predictions included, by scale level; empty means all.
  std::vector<int> scales;
  std::vector<std::string> penalized_layers{"out_rconv", "out_add4", "out_add3", "out_add2", "out_add1"};

  void validate() const;
};

DiffTensor total_loss(DiffTape& tape, const DiffTensor& regression, const DiffTensor& smoothness,
                      const LossConfig& cfg, const DiffTensor* spikes = nullptr);

struct LossTerms {
  DiffTensor total;
  DiffTensor regression;
  DiffTensor smoothness;
  DiffTensor spikes;  // undefined when the penalty is disabled
};

// Builds every term for one forward pass against its ground truth.
LossTerms compute_losses(DiffTape& tape, const ForwardResult& forward, const DepthMap& ground_truth,
                         const DepthCodec& codec, const LossConfig& cfg, bool spike_penalty_enabled);

}  // namespace stereospike
