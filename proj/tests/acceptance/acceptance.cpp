// Acceptance run: one PASS/FAIL line per criterion.
//
// Criteria 6, 7 and 10 train full-size models on a generated dataset and take
// about an hour on one core. Settings come from the bundled acceptance.cfg.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stereospike/evalx.hpp"
#include "stereospike/gradcheck.hpp"
#include "stereospike/losses.hpp"
#include "stereospike/run_config.hpp"
#include "stereospike/synthdata.hpp"
#include "stereospike/train.hpp"

namespace fs = std::filesystem;
using namespace stereospike;

namespace {

struct Verdict {
  int id;
  std::string what;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, const std::string& what, bool pass, const std::string& detail) {
  verdicts.push_back({id, what, pass, detail});
  std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

InputChunk poisson_chunk(int n, int h, int w, double rate, std::mt19937_64& rng) {
  std::poisson_distribution<int> p(rate);
  InputChunk c{n, h, w, 50'000, {}};
  c.data.resize(static_cast<std::size_t>(2 * n) * h * w);
  for (auto& v : c.data) v = static_cast<std::uint16_t>(p(rng));
  return c;
}

ForwardResult infer(const StereoSpikeNet& net, const InputChunk& l, const InputChunk& r) {
  return net.infer(l, net.config().mode == Mode::kBinocular ? &r : nullptr);
}

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = ad::run_gradcheck_suite(20240501);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = secs < 60.0;
  double worst32 = 0.0, worst64 = 0.0;
  int fewest = 1 << 30;
  for (const auto& c : cases) {
    ok = ok && c.passed() && c.instances >= 20;
    fewest = std::min(fewest, c.instances);
    (c.precision == "f32" ? worst32 : worst64) = std::max(c.precision == "f32" ? worst32 : worst64, c.worst_rel_error);
    if (!c.passed()) std::printf("  gradcheck %s %s rel err %.3e\n", c.precision.c_str(), c.name.c_str(), c.worst_rel_error);
  }
  report(1, "finite-difference gradient suite", ok,
         fmt("%.0f cases, worst f32 %.2e, worst f64 %.2e", static_cast<double>(cases.size()), worst32, worst64) +
             fmt(", min instances %.0f, %.1f s", fewest, secs));
}

void criterion_surrogate() {
  std::vector<double> xs;
  for (int i = -500; i <= 500; ++i) xs.push_back(i / 100.0);
  const double alpha = 2.0, pi = std::acos(-1.0);
  ad::Tape<double> tape;
  const auto x = ad::Tensor<double>::parameter({static_cast<int>(xs.size())}, xs);
  const auto s = ad::heaviside_surrogate(tape, x, 0.0, ad::SurrogateConfig{alpha});
  tape.backward(ad::sum_reduce(tape, s));
  double worst = 0.0;
  bool binary = true;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double expect = alpha / (2.0 * (1.0 + std::pow(pi * alpha * xs[i] / 2.0, 2)));
    worst = std::max(worst, std::abs(x.grad()[i] - expect));
    binary = binary && s.values()[i] == (xs[i] >= 0.0 ? 1.0 : 0.0);
  }
  report(2, "arctan surrogate backward and binary forward", binary && worst <= 1e-6,
         fmt("max abs err %.2e over 1001 points", worst) + (binary ? ", forward binary" : ", forward NOT binary"));
}

void criterion_spike_ranges(const ModelConfig& cfg) {
  StereoSpikeNet net(cfg);
  std::mt19937_64 rng(3);
  long long violations = 0, checked = 0;
  int max_rconv = 0, max_add = 0;
  for (int pass = 0; pass < 100; ++pass) {
    if (pass % 10 == 0) initialize_weights(net, 100 + pass, InitScheme::kKaiming, 1.0 + 0.3 * (pass / 10));
    const double rate = 0.05 + 0.1 * (pass % 10);
    const InputChunk l = poisson_chunk(cfg.in_channels / 2, cfg.input_height, cfg.input_width, rate, rng);
    const InputChunk r = poisson_chunk(cfg.in_channels / 2, cfg.input_height, cfg.input_width, rate, rng);
    const ForwardResult fr = infer(net, l, r);
    for (const TraceEntry& e : fr.trace.layers) {
      const bool bottleneck = e.name == "out_rconv" || e.name == "out_combined";
      const bool add = e.name.rfind("out_add", 0) == 0;
      const float hi = bottleneck ? 4.0f : add ? 3.0f : 1.0f;
      for (float v : e.spikes.data().values()) {
        ++checked;
        if (v < 0.0f || v > hi || v != std::floor(v)) ++violations;
        if (e.name == "out_rconv") max_rconv = std::max(max_rconv, static_cast<int>(v));
        if (add) max_add = std::max(max_add, static_cast<int>(v));
      }
    }
  }
  report(3, "spike counts within layer bounds over 100 passes", violations == 0,
         fmt("%.0f violations in %.3g values; max bottleneck %.0f", static_cast<double>(violations),
             static_cast<double>(checked), max_rconv) +
             fmt(", max add %.0f", max_add));
}

void criterion_stateless(const ModelConfig& cfg) {
  StereoSpikeNet net(cfg);
  initialize_weights(net, 17, InitScheme::kKaiming, 1.5);
  std::mt19937_64 rng(4);
  const int n = cfg.in_channels / 2;
  const InputChunk l = poisson_chunk(n, cfg.input_height, cfg.input_width, 0.3, rng);
  const InputChunk r = poisson_chunk(n, cfg.input_height, cfg.input_width, 0.3, rng);
  const DepthMap first = infer(net, l, r).depth;
  const bool repeat = infer(net, l, r).depth.depth == first.depth;
  for (int k = 0; k < 3; ++k) {
    infer(net, poisson_chunk(n, cfg.input_height, cfg.input_width, 0.8, rng),
          poisson_chunk(n, cfg.input_height, cfg.input_width, 0.8, rng));
  }
  const bool interleaved = infer(net, l, r).depth.depth == first.depth;
  report(4, "bitwise-identical depth on repeated input", repeat && interleaved,
         std::string("back-to-back ") + (repeat ? "identical" : "DIFFERENT") + ", after other inputs " +
             (interleaved ? "identical" : "DIFFERENT"));
}

void criterion_losses() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0), keep(0.2, 1.0), coin(0.0, 1.0);
  double worst_reg = 0.0, worst_smooth = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 6, w = 6;
    const double p_keep = keep(rng);
    std::vector<double> pred(h * w), target(h * w);
    std::vector<std::uint8_t> valid(h * w);
    for (int i = 0; i < h * w; ++i) {
      pred[i] = u(rng);
      target[i] = u(rng);
      valid[i] = coin(rng) < p_keep;
    }
    valid[rng() % (h * w)] = 1;

    double mean = 0.0;
    int n = 0;
    for (int i = 0; i < h * w; ++i)
      if (valid[i]) mean += pred[i] - target[i], ++n;
    mean /= n;
    double var = 0.0;
    for (int i = 0; i < h * w; ++i)
      if (valid[i]) var += std::pow(pred[i] - target[i] - mean, 2);
    var /= n;
    double smooth = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int i = y * w + x;
        if (!valid[i]) continue;
        const double ri = pred[i] - target[i];
        if (x + 1 < w && valid[i + 1]) smooth += std::abs(pred[i + 1] - target[i + 1] - ri);
        if (y + 1 < h && valid[i + w]) smooth += std::abs(pred[i + w] - target[i + w] - ri);
      }
    smooth /= n;

    ad::Tape<double> tape(false);
    const std::vector<ResidualMap<double>> maps{make_residual(tape, ad::Tensor<double>::constant({1, h, w}, pred),
                                                              ad::Tensor<double>::constant({1, h, w}, target), valid)};
    const std::span<const ResidualMap<double>> view(maps);
    worst_reg = std::max(worst_reg, std::abs(regression_loss(tape, view).item() - var));
    worst_smooth = std::max(worst_smooth, std::abs(smoothness_loss(tape, view).item() - smooth));
  }

  int exact = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<snn::SpikeTensor> layers;
    float expect = 0.0f;
    for (int l = 0; l < 4; ++l) {
      const int k = 1 + static_cast<int>(rng() % 500);
      const int hi = 1 + static_cast<int>(rng() % 4);
      std::vector<float> v(k);
      float sq = 0.0f;
      for (float& x : v) {
        x = static_cast<float>(rng() % (hi + 1));
        sq += x * x;
      }
      expect += sq / static_cast<float>(2 * k);
      layers.emplace_back(DiffTensor::constant({k}, v), hi);
    }
    DiffTape tape(false);
    exact += spike_penalty(tape, layers).item() == expect;
  }
  report(5, "loss oracles", worst_reg <= 1e-6 && worst_smooth <= 1e-6 && exact == 50,
         fmt("regression max err %.2e, smoothness max err %.2e, ", worst_reg, worst_smooth) +
             fmt("spike penalty exact %.0f/50", exact));
}

void criterion_zero_input(const ModelConfig& base) {
  bool ok = true;
  std::string detail;
  for (Mode mode : {Mode::kBinocular, Mode::kMonocular}) {
    ModelConfig cfg = base;
    cfg.mode = mode;
    StereoSpikeNet net(cfg);
    initialize_weights(net, 23, InitScheme::kKaiming, 2.0);
    InputChunk zero{cfg.in_channels / 2, cfg.input_height, cfg.input_width, 50'000, {}};
    zero.data.assign(static_cast<std::size_t>(cfg.in_channels) * cfg.input_height * cfg.input_width, 0);
    const ForwardResult fr = infer(net, zero, zero);
    int active = 0;
    for (const TraceEntry& e : fr.trace.layers) active += e.density != 0.0;
    const float expect = static_cast<float>(cfg.codec.decode(0.0));
    long long off = 0;
    for (float d : fr.depth.depth) off += d != expect;
    ok = ok && active == 0 && off == 0;
    detail += std::string(mode == Mode::kBinocular ? "bino" : "mono") + fmt(": %.0f active layers, %.0f pixels off ", active, off) +
              fmt("decode(0)=%.4f m; ", expect);
  }
  report(8, "all-zero input is silent and decodes the zero potential", ok, detail);
}

bool trees_identical(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const fs::path other = b / fs::relative(entry.path(), a);
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) return false;
  }
  std::size_t other_files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(b)) other_files += entry.is_regular_file();
  return files == other_files && files > 0;
}

struct TrainedRun {
  double mde = NAN;        // best epoch, the model run_training returns
  double final_mde = NAN;  // last epoch
  int best_epoch = 0;
  evalx::DensityReport report;  // test split, best epoch
  fs::path best;
};

TrainedRun train_model(const RunConfig& rc, const ModelConfig& model, const train::Dataset& data, bool penalty,
                       const fs::path& out) {
  train::TrainPlan plan = rc.plan;
  plan.spike_penalty_enabled = penalty;
  StereoSpikeNet net =
      train::make_initialized_model(model, data, rc.seed, rc.init_gain, rc.calibrate, rc.calibration_samples);
  train::TrainOptions opts;
  opts.out_dir = out;
  opts.on_record = [](const train::EpochRecord& r) {
    std::printf("  epoch %2d %-5s loss %.5f  MDE %.2f cm\n", r.epoch, r.split.c_str(), r.loss, r.mde_cm);
    std::fflush(stdout);
  };
  const train::TrainingLog log = train::run_training(net, data, plan, rc.losses, opts);
  TrainedRun run;
  run.mde = log.best_test_mde;
  run.final_mde = log.records.back().mde_cm;
  run.best_epoch = log.best_epoch;
  run.report = log.best_report;
  run.report.save(out);
  run.best = out / "best.ssk";
  return run;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"StereoSpike acceptance run"};
  fs::path work = "acceptance_work";
  fs::path config;
  int epochs = 0;
  app.add_option("--work", work, "scratch directory for datasets, checkpoints and reports");
  app.add_option("--config", config, "run settings for the training criteria")->check(CLI::ExistingFile);
  app.add_option("--epochs", epochs, "override the epoch count (criteria 6, 7 and 10 then do not count)");
  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig rc;
    if (!config.empty()) rc.load_file(config);
    if (epochs > 0) rc.plan.epochs = epochs;
    rc.finalize();
    fs::create_directories(work);
    std::cout << "settings:\n" << rc.to_text() << std::flush;

    criterion_gradients();
    criterion_surrogate();
    criterion_spike_ranges(rc.model);
    criterion_stateless(rc.model);
    criterion_losses();

    // Dataset for the training criteria.
    const fs::path data_dir = work / "dataset";
    fs::remove_all(data_dir);
    std::printf("generating %d samples into %s\n", rc.count, data_dir.c_str());
    std::fflush(stdout);
    const auto manifest = synth::make_dataset(rc.scenes, rc.count, data_dir, rc.seed);
    const train::Dataset data = train::load_dataset(manifest, rc.model);
    const double baseline = train::constant_baseline_mde(data);
    std::printf("train %zu / test %zu, constant-predictor test MDE %.2f cm\n", data.train.size(), data.test.size(),
                baseline);
    std::fflush(stdout);
    const bool full_length = epochs == 0 || epochs == 30;

    std::printf("training binocular model, %d epochs\n", rc.plan.epochs);
    const TrainedRun bino = train_model(rc, rc.model, data, false, work / "bino");
    const double ratio = bino.mde / baseline;
    report(6, "binocular test MDE at most half the constant baseline", full_length && ratio <= 0.5,
           fmt("%.2f cm at best epoch %.0f vs baseline %.2f cm", bino.mde, bino.best_epoch, baseline) +
               fmt(" = %.1f%%; last epoch %.2f cm", 100.0 * ratio, bino.final_mde));

    std::printf("retraining with the spike penalty, lambda %.3g\n", rc.losses.lambda_spike);
    const TrainedRun sparse = train_model(rc, rc.model, data, true, work / "bino_penalty");
    const double dec_before = bino.report.group_mean("Decoder"), dec_after = sparse.report.group_mean("Decoder");
    const double reduction = dec_after > 0.0 ? dec_before / dec_after : INFINITY;
    const double degradation = sparse.mde / bino.mde - 1.0;
    std::cout << "\nwithout spike penalty\n";
    bino.report.write_text(std::cout);
    std::cout << "\nwith spike penalty\n";
    sparse.report.write_text(std::cout);
    std::cout << std::flush;
    report(7, "spike penalty cuts decoder density at least 2x for at most 25% MDE loss",
           full_length && reduction >= 2.0 && degradation <= 0.25,
           fmt("decoder mean %.1f%% -> %.1f%%", 100.0 * dec_before, 100.0 * dec_after) +
               fmt(" (%.2fx), MDE %.2f -> %.2f cm", reduction, bino.mde, sparse.mde) +
               fmt(" (%+.1f%%)", 100.0 * degradation));

    criterion_zero_input(rc.model);

    {
      const StereoSpikeNet net = load_checkpoint(bino.best);
      const fs::path copy = work / "roundtrip.ssk";
      save_checkpoint(net, copy);
      const StereoSpikeNet back = load_checkpoint(copy);
      bool parity = true;
      for (std::size_t i = 0; i < std::min<std::size_t>(data.test.size(), 10); ++i) {
        const auto& in = data.test[i].input;
        const ForwardResult a = net.infer(in.left, in.right ? &*in.right : nullptr);
        const ForwardResult b = back.infer(in.left, in.right ? &*in.right : nullptr);
        parity = parity && a.depth.depth == b.depth.depth;
      }
      const fs::path sample = data_dir / manifest.samples.front().left;
      const EventStream ev = read_evt(sample);
      write_evt(ev, work / "roundtrip.evt");
      const bool evt = read_evt(work / "roundtrip.evt") == ev && slurp(sample) == slurp(work / "roundtrip.evt");
      synth::make_dataset(rc.scenes, 20, work / "regen_a", rc.seed + 1);
      synth::make_dataset(rc.scenes, 20, work / "regen_b", rc.seed + 1);
      const bool regen = trees_identical(work / "regen_a", work / "regen_b");
      fs::remove_all(work / "regen_a");
      fs::remove_all(work / "regen_b");
      report(9, "checkpoint, .evt and dataset round-trips", parity && evt && regen,
             std::string("checkpoint forward ") + (parity ? "bitwise equal" : "DIFFERS") + ", .evt " +
                 (evt ? "identical" : "DIFFERS") + fmt(" (%.0f events), dataset regeneration ", ev.size()) +
                 (regen ? "byte-identical" : "DIFFERS"));
    }

    ModelConfig mono_cfg = rc.model;
    mono_cfg.mode = Mode::kMonocular;
    std::printf("training monocular model, %d epochs\n", rc.plan.epochs);
    const train::Dataset mono_data = train::load_dataset(manifest, mono_cfg);
    const TrainedRun mono = train_model(rc, mono_cfg, mono_data, false, work / "mono");
    report(10, "monocular and binocular both train below the constant baseline",
           std::isfinite(mono.mde) && mono.mde < baseline && bino.mde < baseline,
           fmt("mono %.2f cm, bino %.2f cm, baseline %.2f cm", mono.mde, bino.mde, baseline));
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
  }

  int passed = 0;
  for (const Verdict& v : verdicts) passed += v.pass;
  for (int id = 1; id <= 10; ++id) {
    bool seen = false;
    for (const Verdict& v : verdicts) seen = seen || v.id == id;
    if (!seen) std::printf("FAIL criterion %d: not reached\n", id);
  }
  std::printf("\n%d/10 criteria passed\n", passed);
  return passed == 10 ? 0 : 1;
}
