#include "stereospike/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace stereospike::train {

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  std::uint64_t z = seed ^ (0xD1B54A32D192ED03ULL * static_cast<std::uint64_t>(epoch + 1));
  z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
  return z ^ (z >> 33);
}

std::string describe_loss(const LossTerms& t) {
  std::ostringstream s;
  s << "regression=" << t.regression.item() << " smoothness=" << t.smoothness.item();
  if (t.spikes.defined()) s << " spikes=" << t.spikes.item();
  return s.str();
}

std::vector<double> densities_of(const evalx::DensityAccumulator& acc, const std::vector<std::string>& names) {
  const evalx::DensityReport rep = acc.report(0.0);
  std::vector<double> out;
  for (const std::string& n : names) out.push_back(rep.find(n)->density);
  return out;
}

}  // namespace

AdamState AdamState::for_parameters(const std::vector<NamedParameter>& params) {
  AdamState s;
  for (const NamedParameter& p : params) {
    s.m.emplace_back(p.tensor.size(), 0.0f);
    s.v.emplace_back(p.tensor.size(), 0.0f);
  }
  return s;
}

void adam_step(std::vector<NamedParameter>& params, AdamState& state, double grad_scale) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameters");
  }
  for (const NamedParameter& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient in layer " + p.name);
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    DiffTensor& w = params[k].tensor;
    std::span<float> values = w.mutable_values();
    std::span<const float> grad = w.has_grad() ? w.grad() : std::span<const float>();
    std::vector<float>& m = state.m[k];
    std::vector<float>& v = state.v[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad_scale * grad[i];
      m[i] = static_cast<float>(state.beta1 * m[i] + (1.0 - state.beta1) * g);
      v[i] = static_cast<float>(state.beta2 * v[i] + (1.0 - state.beta2) * g * g);
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] = static_cast<float>(values[i] - state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
  }
}

void TrainPlan::validate() const {
  if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
  if (!(lr0 > 0.0)) throw ConfigError("lr", "must be positive");
  if (lr_drop_epoch < 1) throw ConfigError("lr_drop_epoch", "must be >= 1");
  if (!(lr_drop_factor > 0.0)) throw ConfigError("lr_drop_factor", "must be positive");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be >= 0");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm", "must be >= 0");
}

double learning_rate_at(const TrainPlan& plan, int epoch) {
  return epoch >= plan.lr_drop_epoch ? plan.lr0 / plan.lr_drop_factor : plan.lr0;
}

Dataset load_dataset(const synth::DatasetManifest& manifest, const ModelConfig& cfg) {
  if (manifest.samples.empty()) throw std::invalid_argument("dataset is empty");
  if (manifest.height != cfg.input_height || manifest.width != cfg.input_width) {
    throw GeometryError("dataset is " + std::to_string(manifest.height) + "x" + std::to_string(manifest.width) +
                        ", model expects " + std::to_string(cfg.input_height) + "x" + std::to_string(cfg.input_width));
  }
  const int n = cfg.in_channels / 2;
  if (manifest.duration % static_cast<Microseconds>(n) != 0) {
    throw ConfigError("in_channels", "recording length is not divisible into " + std::to_string(n) + " windows");
  }
  const Microseconds dt = manifest.duration / static_cast<Microseconds>(n);
  Dataset data;
  for (const synth::SampleRecord& rec : manifest.samples) {
    Sample s;
    s.id = rec.id;
    s.input.left = make_chunk(read_evt(manifest.root / rec.left), 0, n, dt);
    if (cfg.mode == Mode::kBinocular) s.input.right = make_chunk(read_evt(manifest.root / rec.right), 0, n, dt);
    const synth::DepthFrame* target = nullptr;
    for (const synth::DepthFrame& f : rec.depth) {
      if (f.t == manifest.duration) target = &f;
    }
    if (!target) throw std::runtime_error("sample " + rec.id + " has no depth frame at the end of its recording");
    s.ground_truth = evalx::read_depth_f32(manifest.root / target->path);
    (rec.train ? data.train : data.test).push_back(std::move(s));
  }
  if (data.train.empty()) throw std::invalid_argument("dataset has no training samples");
  return data;
}

double constant_baseline_mde(const Dataset& data) {
  if (data.train.empty() || data.test.empty()) throw std::invalid_argument("constant baseline needs train and test");
  double sum = 0.0;
  std::size_t n = 0;
  for (const Sample& s : data.train) {
    for (std::size_t i = 0; i < s.ground_truth.depth.size(); ++i) {
      if (s.ground_truth.valid[i]) {
        sum += s.ground_truth.depth[i];
        ++n;
      }
    }
  }
  if (n == 0) throw std::invalid_argument("constant baseline: no valid training depth");
  const float mean = static_cast<float>(sum / static_cast<double>(n));
  double total = 0.0;
  for (const Sample& s : data.test) {
    total += evalx::mde(DepthMap::filled(s.ground_truth.height, s.ground_truth.width, mean), s.ground_truth);
  }
  return total / static_cast<double>(data.test.size());
}

StereoSpikeNet make_initialized_model(const ModelConfig& cfg, const Dataset& data, std::uint64_t seed, double gain,
                                      bool calibrate, int calibration_samples, ProbeResult* probe) {
  StereoSpikeNet net(cfg);
  initialize_weights(net, seed, InitScheme::kKaiming, gain);
  if (calibrate) {
    std::vector<StereoInput> inputs;
    for (const Sample& s : data.train) {
      if (static_cast<int>(inputs.size()) == calibration_samples) break;
      inputs.push_back(s.input);
    }
    ProbeResult r = calibrate_firing_rates(net, inputs);
    if (probe) *probe = std::move(r);
  }
  return net;
}

EvalResult evaluate(const StereoSpikeNet& net, const std::vector<Sample>& samples, const LossConfig& losses,
                    bool spike_penalty_enabled) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  evalx::DensityAccumulator acc;
  double loss = 0.0, mde = 0.0;
  for (const Sample& s : samples) {
    DiffTape tape(false);
    const InputChunk* right = s.input.right ? &*s.input.right : nullptr;
    const ForwardResult fr = net.forward(tape, s.input.left, right);
    loss += compute_losses(tape, fr, s.ground_truth, net.config().codec, losses, spike_penalty_enabled).total.item();
    mde += evalx::mde(fr.depth, s.ground_truth);
    acc.add(fr.trace);
  }
  const double n = static_cast<double>(samples.size());
  EvalResult r;
  r.loss = loss / n;
  r.mde_cm = mde / n;
  r.report = acc.report(r.mde_cm);
  return r;
}

void TrainingLog::write_csv_header(std::ostream& out) const {
  out << "epoch,split,lr,loss,mde_cm";
  for (const std::string& n : layer_names) out << ',' << n;
  out << '\n';
}

void TrainingLog::write_csv_row(std::ostream& out, const EpochRecord& r) const {
  const double lr = r.epoch >= 1 && static_cast<std::size_t>(r.epoch) <= learning_rates.size()
                        ? learning_rates[static_cast<std::size_t>(r.epoch) - 1]
                        : 0.0;
  std::ostringstream line;
  line << std::setprecision(9) << r.epoch << ',' << r.split << ',' << lr << ',' << r.loss << ',' << r.mde_cm;
  for (double d : r.densities) line << ',' << d;
  out << line.str() << '\n';
}

void TrainingLog::write_csv(std::ostream& out) const {
  write_csv_header(out);
  for (const EpochRecord& r : records) write_csv_row(out, r);
}

TrainingLog run_training(StereoSpikeNet& net, const Dataset& data, const TrainPlan& plan, const LossConfig& losses,
                         const TrainOptions& options) {
  plan.validate();
  losses.validate();
  if (data.train.empty()) throw std::invalid_argument("run_training: empty training set");

  TrainingLog log;
  log.layer_names = trace_layer_names(net.config());
  std::ofstream csv;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    csv.open(options.out_dir / "train_log.csv");
    if (!csv) throw std::runtime_error("cannot write " + (options.out_dir / "train_log.csv").string());
    log.write_csv_header(csv);
  }
  const auto emit = [&](EpochRecord r) {
    if (csv.is_open()) {
      log.write_csv_row(csv, r);
      csv.flush();
    }
    if (options.on_record) options.on_record(r);
    log.records.push_back(std::move(r));
  };

  AdamState adam = AdamState::for_parameters(net.parameters());
  std::vector<std::vector<float>> best_weights;
  const DepthCodec& codec = net.config().codec;
  std::vector<std::size_t> order(data.train.size());

  for (int epoch = 1; epoch <= plan.epochs; ++epoch) {
    adam.lr = learning_rate_at(plan, epoch);
    log.learning_rates.push_back(adam.lr);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (plan.shuffle) {
      std::mt19937_64 rng(epoch_seed(plan.seed, epoch));
      std::shuffle(order.begin(), order.end(), rng);
    }

    evalx::DensityAccumulator acc;
    double loss_sum = 0.0, mde_sum = 0.0;
    int in_batch = 0;
    for (NamedParameter& p : net.parameters()) p.tensor.zero_grad();
    for (std::size_t k = 0; k < order.size(); ++k) {
      const Sample& s = data.train[order[k]];
      DiffTape tape;
      const InputChunk* right = s.input.right ? &*s.input.right : nullptr;
      const ForwardResult fr = net.forward(tape, s.input.left, right);
      const LossTerms terms = compute_losses(tape, fr, s.ground_truth, codec, losses, plan.spike_penalty_enabled);
      const double loss = terms.total.item();
      if (!std::isfinite(loss)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", sample " + s.id + " (" +
                                 describe_loss(terms) + ")");
      }
      tape.backward(terms.total);
      loss_sum += loss;
      mde_sum += evalx::mde(fr.depth, s.ground_truth);
      acc.add(fr.trace);

      if (++in_batch == plan.batch_size || k + 1 == order.size()) {
        double scale = 1.0 / in_batch;
        for (NamedParameter& p : net.parameters()) {
          if (plan.weight_decay > 0.0) {
            std::span<float> g = p.tensor.mutable_grad();
            std::span<const float> w = p.tensor.values();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<float>(plan.weight_decay * in_batch * w[i]);
          }
        }
        if (plan.clip_norm > 0.0) {
          double sq = 0.0;
          for (const NamedParameter& p : net.parameters()) {
            if (!p.tensor.has_grad()) continue;
            for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
          }
          const double norm = std::sqrt(sq) * scale;
          if (norm > plan.clip_norm) scale *= plan.clip_norm / norm;
        }
        adam_step(net.parameters(), adam, scale);
        for (NamedParameter& p : net.parameters()) p.tensor.zero_grad();
        in_batch = 0;
      }
    }
    const double n_train = static_cast<double>(order.size());
    emit({epoch, "train", loss_sum / n_train, mde_sum / n_train, densities_of(acc, log.layer_names)});

    if (!data.test.empty()) {
      const EvalResult ev = evaluate(net, data.test, losses, plan.spike_penalty_enabled);
      std::vector<double> dens;
      for (const std::string& n : log.layer_names) dens.push_back(ev.report.find(n)->density);
      emit({epoch, "test", ev.loss, ev.mde_cm, std::move(dens)});
      if (log.best_epoch == 0 || ev.mde_cm < log.best_test_mde) {
        log.best_epoch = epoch;
        log.best_test_mde = ev.mde_cm;
        log.best_report = ev.report;
        best_weights.clear();
        for (const NamedParameter& p : net.parameters()) {
          best_weights.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
        }
        if (!options.out_dir.empty()) save_checkpoint(net, options.out_dir / "best.ssk");
      }
    }
  }
  if (!options.out_dir.empty()) save_checkpoint(net, options.out_dir / "last.ssk");
  if (!best_weights.empty()) {
    for (std::size_t k = 0; k < best_weights.size(); ++k) {
      std::span<float> w = net.parameters()[k].tensor.mutable_values();
      std::copy(best_weights[k].begin(), best_weights[k].end(), w.begin());
    }
  }
  return log;
}

}  // namespace stereospike::train
