// stereospike: dataset generation, training, evaluation and profiling.
//
// Exit status: 0 success, 1 invalid configuration or input, 2 runtime failure.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stereospike/evalx.hpp"
#include "stereospike/gradcheck.hpp"
#include "stereospike/model.hpp"
#include "stereospike/run_config.hpp"
#include "stereospike/synthdata.hpp"
#include "stereospike/train.hpp"

namespace ss = stereospike;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::string> seed, mode, epochs, lr, lambda_smooth, lambda_spike, base_channels, data, out,
      checkpoint, count;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "key = value configuration file");
    cmd->add_option("--seed", seed, "seed for every random choice");
    cmd->add_option("--mode", mode, "mono | bino");
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--lr", lr, "initial learning rate");
    cmd->add_option("--lambda-smooth", lambda_smooth);
    cmd->add_option("--lambda-spike", lambda_spike, "spike penalty weight; > 0 also enables the penalty");
    cmd->add_option("--base-channels", base_channels);
    cmd->add_option("--data", data, "dataset directory or manifest.json");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--checkpoint", checkpoint, ".ssk checkpoint");
    cmd->add_option("--set", overrides, "extra key=value override (repeatable)");
  }

  // File first, then flags, in that order of precedence.
  ss::RunConfig resolve() const {
    ss::RunConfig cfg;
    if (!config.empty()) cfg.load_file(config);
    const std::pair<const char*, const std::optional<std::string>*> flags[] = {
        {"seed", &seed},          {"mode", &mode},       {"epochs", &epochs},
        {"lr", &lr},              {"lambda_smooth", &lambda_smooth},
        {"lambda_spike", &lambda_spike},                 {"base_channels", &base_channels},
        {"data", &data},          {"out", &out},         {"checkpoint", &checkpoint},
        {"count", &count},
    };
    for (const auto& [key, value] : flags) {
      if (*value) cfg.set(key, **value);
    }
    if (lambda_spike && cfg.losses.lambda_spike > 0.0) cfg.plan.spike_penalty_enabled = true;
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ss::ConfigError("--set", "expected key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.finalize();
    return cfg;
  }
};

void echo_config(const ss::RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.txt");
  if (!out) throw std::runtime_error("cannot write " + (dir / "config.txt").string());
  out << cfg.to_text();
}

ss::train::Dataset require_dataset(const ss::RunConfig& cfg, const ss::ModelConfig& model) {
  if (cfg.data.empty()) throw ss::ConfigError("data", "no dataset given (use --data)");
  return ss::train::load_dataset(ss::synth::load_manifest(cfg.data), model);
}

// Checkpoint when given, otherwise a zero-weight model from the config.
ss::StereoSpikeNet model_for(const ss::RunConfig& cfg) {
  if (!cfg.checkpoint.empty()) return ss::load_checkpoint(cfg.checkpoint);
  ss::StereoSpikeNet net(cfg.model);
  ss::initialize_weights(net, cfg.seed, ss::InitScheme::kZero);
  return net;
}

int cmd_synth_gen(const ss::RunConfig& cfg) {
  echo_config(cfg, cfg.out);
  const auto m = ss::synth::make_dataset(cfg.scenes, cfg.count, cfg.out, cfg.seed);
  std::cout << "wrote " << m.samples.size() << " samples (" << m.train_count() << " train, " << m.test_count()
            << " test) to " << cfg.out.string() << '\n';
  return 0;
}

int cmd_train(const ss::RunConfig& cfg) {
  echo_config(cfg, cfg.out);
  const ss::train::Dataset data = require_dataset(cfg, cfg.model);
  const double baseline = data.test.empty() ? NAN : ss::train::constant_baseline_mde(data);
  std::cout << "train " << data.train.size() << " / test " << data.test.size()
            << " samples; constant-predictor test MDE " << baseline << " cm\n";
  ss::StereoSpikeNet net = ss::train::make_initialized_model(cfg.model, data, cfg.seed, cfg.init_gain, cfg.calibrate,
                                                             cfg.calibration_samples);
  ss::train::TrainOptions opts;
  opts.out_dir = cfg.out;
  opts.on_record = [](const ss::train::EpochRecord& r) {
    std::printf("epoch %3d %-5s loss %.5f  MDE %.2f cm\n", r.epoch, r.split.c_str(), r.loss, r.mde_cm);
    std::fflush(stdout);
  };
  const auto log = ss::train::run_training(net, data, cfg.plan, cfg.losses, opts);
  if (log.best_epoch > 0) {
    log.best_report.save(cfg.out);
    std::cout << "best test MDE " << log.best_test_mde << " cm at epoch " << log.best_epoch << " (baseline "
              << baseline << " cm)\n";
  }
  return 0;
}

int cmd_eval(const ss::RunConfig& cfg, bool print_table) {
  const ss::StereoSpikeNet net = model_for(cfg);
  const ss::train::Dataset data = require_dataset(cfg, net.config());
  const auto& split = data.test.empty() ? data.train : data.test;
  const auto result = ss::train::evaluate(net, split, cfg.losses, cfg.plan.spike_penalty_enabled);
  if (!cfg.out.empty()) result.report.save(cfg.out);
  if (print_table) result.report.write_text(std::cout);
  std::cout << "test MDE " << result.mde_cm << " cm, loss " << result.loss << " over " << split.size()
            << " samples\n";
  return std::isfinite(result.mde_cm) ? 0 : kExitRuntime;
}

int cmd_infer(const ss::RunConfig& cfg, const std::string& left, const std::string& right, std::uint64_t start_us,
              std::uint64_t window_us, int chunks) {
  const ss::StereoSpikeNet net = model_for(cfg);
  const bool bino = net.config().mode == ss::Mode::kBinocular;
  if (left.empty()) throw ss::ConfigError("left", "no left event file given");
  if (bino && right.empty()) throw ss::ConfigError("right", "binocular model needs --right");
  if (chunks < 1) throw ss::ConfigError("chunks", "must be >= 1");
  const ss::EventStream ls = ss::read_evt(left);
  const std::optional<ss::EventStream> rs = bino ? std::optional(ss::read_evt(right)) : std::nullopt;
  const int n = net.config().in_channels / 2;
  std::filesystem::create_directories(cfg.out);
  for (int k = 0; k < chunks; ++k) {
    const std::uint64_t t0 = start_us + static_cast<std::uint64_t>(k) * n * window_us;
    const ss::InputChunk lc = ss::make_chunk(ls, t0, n, window_us);
    std::optional<ss::InputChunk> rc;
    if (rs) rc = ss::make_chunk(*rs, t0, n, window_us);
    const ss::ForwardResult fr = net.infer(lc, rc ? &*rc : nullptr);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "pred_%04d", k);
    ss::evalx::write_depth_pgm(fr.depth, cfg.out / (std::string(stem) + ".pgm"));
    ss::evalx::write_depth_f32(fr.depth, cfg.out / (std::string(stem) + ".f32"));
  }
  std::cout << "wrote " << chunks << " depth maps to " << cfg.out.string() << '\n';
  return 0;
}

int cmd_gradcheck(const ss::RunConfig& cfg) {
  bool ok = true;
  for (const auto& c : ss::ad::run_gradcheck_suite(cfg.seed)) {
    std::printf("%-4s %-28s %3d instances  max rel err %.3e  (tol %.0e)  %s\n", c.precision.c_str(), c.name.c_str(),
                c.instances, c.worst_rel_error, c.tolerance, c.passed() ? "ok" : "FAIL");
    ok = ok && c.passed();
  }
  return ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"StereoSpike: spiking stereo depth estimation from event streams"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string left, right;
  std::uint64_t start_us = 0, window_us = 50'000;
  int chunks = 1;

  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic stereo event dataset into --out");
  auto* train = app.add_subcommand("train", "train a model on --data, writing logs and checkpoints to --out");
  auto* eval = app.add_subcommand("eval", "test MDE and density report for --checkpoint on --data");
  auto* infer = app.add_subcommand("infer", "depth rasters for .evt inputs");
  auto* profile = app.add_subcommand("profile", "per-layer firing-rate report");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  for (CLI::App* cmd : {synth, train, eval, infer, profile, gradcheck}) flags.attach(cmd);
  synth->add_option("--count", flags.count, "number of samples");
  infer->add_option("--left", left, "left .evt file");
  infer->add_option("--right", right, "right .evt file (binocular)");
  infer->add_option("--start-us", start_us, "start of the first chunk");
  infer->add_option("--window-us", window_us, "length of one histogram window");
  infer->add_option("--chunks", chunks, "number of consecutive chunks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const ss::RunConfig cfg = flags.resolve();
    if (synth->parsed()) return cmd_synth_gen(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (eval->parsed()) return cmd_eval(cfg, false);
    if (profile->parsed()) return cmd_eval(cfg, true);
    if (infer->parsed()) return cmd_infer(cfg, left, right, start_us, window_us, chunks);
    if (gradcheck->parsed()) return cmd_gradcheck(cfg);
  } catch (const ss::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ss::GeometryError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ss::EventFormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ss::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
