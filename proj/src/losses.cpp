#include "stereospike/losses.hpp"

#include <algorithm>
#include <cmath>

namespace stereospike {

template <typename Real>
ResidualMap<Real> make_residual(ad::Tape<Real>& tape, const ad::Tensor<Real>& prediction,
                                const ad::Tensor<Real>& target, std::vector<std::uint8_t> valid) {
  if (prediction.shape().size() != 3 || prediction.dim(0) != 1) {
    throw ad::ShapeError("residual: prediction must be (1,H,W), got " + ad::to_string(prediction.shape()));
  }
  if (valid.size() != prediction.size()) throw ad::ShapeError("residual: mask size does not match prediction");
  ResidualMap<Real> m;
  m.r = ad::sub(tape, prediction, target);
  m.height = prediction.dim(1);
  m.width = prediction.dim(2);
  m.n_valid = static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; }));
  m.valid = std::move(valid);
  return m;
}

ResidualMap<float> make_residual(DiffTape& tape, const DiffTensor& prediction, const DepthMap& ground_truth,
                                 const DepthCodec& codec) {
  if (prediction.size() != ground_truth.depth.size()) {
    throw GeometryError("residual: ground truth is " + std::to_string(ground_truth.height) + "x" +
                        std::to_string(ground_truth.width) + ", prediction has shape " +
                        ad::to_string(prediction.shape()));
  }
  std::vector<float> target(ground_truth.depth.size(), 0.0f);
  std::vector<std::uint8_t> valid = ground_truth.valid;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const float d = ground_truth.depth[i];
    if (valid[i] && std::isfinite(d) && d > 0.0f) {
      target[i] = static_cast<float>(codec.encode(d));
    } else {
      valid[i] = 0;
    }
  }
  return make_residual(tape, prediction, DiffTensor::constant(prediction.shape(), std::move(target)), std::move(valid));
}

namespace {

template <typename Real>
void require_valid(const ResidualMap<Real>& m) {
  if (m.n_valid == 0) throw std::invalid_argument("no valid ground truth");
}

}  // namespace

std::string to_string(RegressionForm form) { return form == RegressionForm::kVariance ? "variance" : "anchored"; }

RegressionForm parse_regression_form(std::string_view text) {
  if (text == "variance") return RegressionForm::kVariance;
  if (text == "anchored") return RegressionForm::kAnchored;
  throw ConfigError("regression_form", "expected variance|anchored, got '" + std::string(text) + "'");
}

template <typename Real>
ad::Tensor<Real> regression_loss(ad::Tape<Real>& tape, std::span<const ResidualMap<Real>> residuals,
                                 RegressionForm form) {
  if (residuals.empty()) throw std::invalid_argument("regression_loss: no predictions");
  ad::Tensor<Real> total;
  for (const ResidualMap<Real>& m : residuals) {
    require_valid(m);
    const double n = static_cast<double>(m.n_valid);
    const double mean_sq_weight = form == RegressionForm::kVariance ? 1.0 / (n * n) : 1.0 / (n * n * n);
    const ad::Tensor<Real> rv = ad::masked_select(tape, m.r, std::span<const std::uint8_t>(m.valid));
    const ad::Tensor<Real> sum_sq = ad::sum_reduce(tape, ad::square(tape, rv));
    const ad::Tensor<Real> sum = ad::sum_reduce(tape, rv);
    const ad::Tensor<Real> term =
        ad::sub(tape, ad::scale(tape, sum_sq, 1.0 / n), ad::scale(tape, ad::square(tape, sum), mean_sq_weight));
    total = total.defined() ? ad::add(tape, total, term) : term;
  }
  return ad::scale(tape, total, 1.0 / static_cast<double>(residuals.size()));
}

template <typename Real>
ad::Tensor<Real> smoothness_loss(ad::Tape<Real>& tape, std::span<const ResidualMap<Real>> residuals) {
  if (residuals.empty()) throw std::invalid_argument("smoothness_loss: no predictions");
  ad::Tensor<Real> total;
  for (const ResidualMap<Real>& m : residuals) {
    require_valid(m);
    std::vector<std::size_t> from, to;
    const auto valid = [&](int y, int x) { return m.valid[static_cast<std::size_t>(y) * m.width + x] != 0; };
    const auto index = [&](int y, int x) { return static_cast<std::size_t>(y) * m.width + x; };
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        if (!valid(y, x)) continue;
        if (x + 1 < m.width && valid(y, x + 1)) {
          from.push_back(index(y, x));
          to.push_back(index(y, x + 1));
        }
        if (y + 1 < m.height && valid(y + 1, x)) {
          from.push_back(index(y, x));
          to.push_back(index(y + 1, x));
        }
      }
    }
    const ad::Tensor<Real> diff = ad::sub(tape, ad::gather(tape, m.r, std::span<const std::size_t>(to)),
                                          ad::gather(tape, m.r, std::span<const std::size_t>(from)));
    const ad::Tensor<Real> term =
        ad::scale(tape, ad::sum_reduce(tape, ad::abs_elem(tape, diff)), 1.0 / static_cast<double>(m.n_valid));
    total = total.defined() ? ad::add(tape, total, term) : term;
  }
  return total;
}

DiffTensor spike_penalty(DiffTape& tape, std::span<const snn::SpikeTensor> layers) {
  DiffTensor total = DiffTensor::scalar(0.0f);
  for (const snn::SpikeTensor& s : layers) {
    if (s.size() == 0) continue;
    const DiffTensor term =
        ad::divide(tape, ad::sum_reduce(tape, ad::square(tape, s.data())), 2.0 * static_cast<double>(s.size()));
    total = ad::add(tape, total, term);
  }
  return total;
}

void LossConfig::validate() const {
  if (!(lambda_smooth >= 0.0)) throw ConfigError("lambda_smooth", "must be >= 0");
  if (!(lambda_spike >= 0.0)) throw ConfigError("lambda_spike", "must be >= 0");
}

DiffTensor total_loss(DiffTape& tape, const DiffTensor& regression, const DiffTensor& smoothness,
                      const LossConfig& cfg, const DiffTensor* spikes) {
  DiffTensor total = regression;
  if (cfg.lambda_smooth != 0.0) total = ad::add(tape, total, ad::scale(tape, smoothness, cfg.lambda_smooth));
  if (spikes && cfg.lambda_spike != 0.0) total = ad::add(tape, total, ad::scale(tape, *spikes, cfg.lambda_spike));
  return total;
}

LossTerms compute_losses(DiffTape& tape, const ForwardResult& forward, const DepthMap& ground_truth,
                         const DepthCodec& codec, const LossConfig& cfg, bool spike_penalty_enabled) {
  std::vector<ResidualMap<float>> residuals;
  for (const auto& [scale_level, prediction] : forward.trace.intermediate_predictions) {
    if (!cfg.scales.empty() && std::find(cfg.scales.begin(), cfg.scales.end(), scale_level) == cfg.scales.end()) {
      continue;
    }
    residuals.push_back(make_residual(tape, prediction, ground_truth, codec));
  }
  if (residuals.empty()) throw ConfigError("scales", "selects no intermediate prediction");

  LossTerms terms;
  terms.regression = regression_loss(tape, std::span<const ResidualMap<float>>(residuals), cfg.regression_form);
  terms.smoothness = smoothness_loss(tape, std::span<const ResidualMap<float>>(residuals));
  if (spike_penalty_enabled) {
    std::vector<snn::SpikeTensor> layers;
    for (const std::string& name : cfg.penalized_layers) {
      const TraceEntry* e = forward.trace.find(name);
      if (!e) throw ConfigError("penalized_layers", "no traced layer named " + name);
      layers.push_back(e->spikes);
    }
    terms.spikes = spike_penalty(tape, layers);
  }
  terms.total = total_loss(tape, terms.regression, terms.smoothness, cfg, spike_penalty_enabled ? &terms.spikes : nullptr);
  return terms;
}

template ResidualMap<float> make_residual(ad::Tape<float>&, const ad::Tensor<float>&, const ad::Tensor<float>&,
                                          std::vector<std::uint8_t>);
template ResidualMap<double> make_residual(ad::Tape<double>&, const ad::Tensor<double>&, const ad::Tensor<double>&,
                                           std::vector<std::uint8_t>);
template ad::Tensor<float> regression_loss(ad::Tape<float>&, std::span<const ResidualMap<float>>, RegressionForm);
template ad::Tensor<double> regression_loss(ad::Tape<double>&, std::span<const ResidualMap<double>>, RegressionForm);
template ad::Tensor<float> smoothness_loss(ad::Tape<float>&, std::span<const ResidualMap<float>>);
template ad::Tensor<double> smoothness_loss(ad::Tape<double>&, std::span<const ResidualMap<double>>);

}  // namespace stereospike
