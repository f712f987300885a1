#include "stereospike/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"

#include "stereospike/evalx.hpp"

namespace stereospike::synth {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

int wrap(long long i, int period) {
  const long long m = i % period;
  return static_cast<int>(m < 0 ? m + period : m);
}

// Objects sorted nearest first; ties keep declaration order.
std::vector<const SceneObject*> depth_order(const SceneSpec& spec) {
  std::vector<const SceneObject*> order;
  for (const SceneObject& o : spec.objects) order.push_back(&o);
  std::stable_sort(order.begin(), order.end(),
                   [](const SceneObject* a, const SceneObject* b) { return a->depth < b->depth; });
  return order;
}

struct Placed {
  const SceneObject* object;
  double x0, y0;
};

std::vector<Placed> place(const SceneSpec& spec, const std::vector<const SceneObject*>& order, double t, View view) {
  std::vector<Placed> out;
  for (const SceneObject* o : order) {
    out.push_back({o, o->x + o->vx * t + view_shift(spec, o->depth, view), o->y + o->vy * t});
  }
  return out;
}

const Placed* cover(const std::vector<Placed>& placed, double cx, double cy) {
  for (const Placed& p : placed) {
    if (cx >= p.x0 && cx < p.x0 + p.object->width && cy >= p.y0 && cy < p.y0 + p.object->height) return &p;
  }
  return nullptr;
}

std::string sample_dir(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%04d", i);
  return buf;
}

std::string depth_name(Microseconds t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "depth_%06llu.f32", static_cast<unsigned long long>(t));
  return buf;
}

}  // namespace

Texture::Texture(std::uint64_t seed, double mean, double contrast, double cell, int period)
    : period_(period), cell_(cell), mean_(mean), contrast_(contrast) {
  if (period < 1 || !(cell > 0.0)) throw std::invalid_argument("texture: period and cell must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  lattice_.resize(static_cast<std::size_t>(period) * period);
  for (float& v : lattice_) v = u(rng);
}

double Texture::sample(double u, double v) const {
  if (lattice_.empty() || contrast_ == 0.0) return mean_;
  const double gu = u / cell_, gv = v / cell_;
  const double fu = std::floor(gu), fv = std::floor(gv);
  const double a = gu - fu, b = gv - fv;
  const int i0 = wrap(static_cast<long long>(fu), period_), i1 = wrap(static_cast<long long>(fu) + 1, period_);
  const int j0 = wrap(static_cast<long long>(fv), period_), j1 = wrap(static_cast<long long>(fv) + 1, period_);
  const auto at = [&](int i, int j) { return static_cast<double>(lattice_[static_cast<std::size_t>(j) * period_ + i]); };
  const double n = (1 - a) * (1 - b) * at(i0, j0) + a * (1 - b) * at(i1, j0) + (1 - a) * b * at(i0, j1) +
                   a * b * at(i1, j1);
  return mean_ + contrast_ * n;
}

void SceneSpec::validate() const {
  if (height < 1) throw ConfigError("height", "must be positive");
  if (width < 1) throw ConfigError("width", "must be positive");
  if (!(duration > 0.0)) throw ConfigError("duration", "must be positive");
  if (!(theta > 0.0)) throw ConfigError("theta", "must be positive");
  if (!(render_step > 0.0) || render_step > 1e-3) throw ConfigError("render_step", "must be in (0, 1 ms]");
  if (!(baseline >= 0.0)) throw ConfigError("baseline", "must be >= 0");
  if (!(gt_keep_fraction > 0.0 && gt_keep_fraction <= 1.0)) throw ConfigError("gt_keep_fraction", "must be in (0, 1]");
  if (!(background_depth >= d_min && background_depth <= d_max)) {
    throw ConfigError("background_depth", "outside [d_min, d_max]");
  }
  if (!std::isfinite(background_vx) || !std::isfinite(background_vy)) {
    throw ConfigError("background_velocity", "must be finite");
  }
  for (const SceneObject& o : objects) {
    if (!(o.depth >= d_min && o.depth <= d_max)) throw ConfigError("objects.depth", "outside [d_min, d_max]");
    if (!std::isfinite(o.vx) || !std::isfinite(o.vy)) throw ConfigError("objects.velocity", "must be finite");
    if (!(o.width > 0.0 && o.height > 0.0)) throw ConfigError("objects.size", "must be positive");
  }
}

double view_shift(const SceneSpec& spec, double depth, View view) {
  return view == View::kRight ? -spec.baseline / depth : 0.0;
}

std::vector<float> render_log_luminance(const SceneSpec& spec, double t, View view) {
  const auto placed = place(spec, depth_order(spec), t, view);
  const double bx = spec.background_vx * t + view_shift(spec, spec.background_depth, view);
  const double by = spec.background_vy * t;
  std::vector<float> out(static_cast<std::size_t>(spec.height) * spec.width);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const double cx = x + 0.5, cy = y + 0.5;
      const Placed* p = cover(placed, cx, cy);
      const double l = p ? p->object->texture.sample(cx - p->x0, cy - p->y0) : spec.background.sample(cx - bx, cy - by);
      out[static_cast<std::size_t>(y) * spec.width + x] = static_cast<float>(l);
    }
  }
  return out;
}

DepthMap render_depth(const SceneSpec& spec, double t, View view) {
  const auto placed = place(spec, depth_order(spec), t, view);
  DepthMap m = DepthMap::filled(spec.height, spec.width, static_cast<float>(spec.background_depth));
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      if (const Placed* p = cover(placed, x + 0.5, y + 0.5)) {
        m.depth[static_cast<std::size_t>(y) * spec.width + x] = static_cast<float>(p->object->depth);
      }
    }
  }
  if (spec.gt_keep_fraction < 1.0) {
    std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(std::llround(t * 1e6)) + 7));
    std::bernoulli_distribution keep(spec.gt_keep_fraction);
    for (std::size_t i = 0; i < m.valid.size(); ++i) {
      if (!keep(rng)) {
        m.valid[i] = 0;
        m.depth[i] = std::numeric_limits<float>::quiet_NaN();
      }
    }
  }
  return m;
}

EventStream generate_events(const SceneSpec& spec, View view) {
  spec.validate();
  const int steps = static_cast<int>(std::ceil(spec.duration / spec.render_step - 1e-9));
  std::vector<float> prev = render_log_luminance(spec, 0.0, view);
  std::vector<double> ref(prev.begin(), prev.end());
  std::vector<Event> events;
  const Microseconds end_us = static_cast<Microseconds>(std::llround(spec.duration * 1e6));
  for (int s = 1; s <= steps; ++s) {
    const double t0 = (s - 1) * spec.render_step;
    const double t1 = std::min(s * spec.render_step, spec.duration);
    const std::vector<float> cur = render_log_luminance(spec, t1, view);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const double l0 = prev[i], l1 = cur[i];
      if (l0 == l1) continue;
      const auto emit = [&](Polarity pol) {
        const double frac = std::clamp((ref[i] - l0) / (l1 - l0), 0.0, 1.0);
        auto t = static_cast<Microseconds>(std::llround((t0 + frac * (t1 - t0)) * 1e6));
        t = std::min(t, end_us);
        events.push_back({t, static_cast<std::uint16_t>(i % spec.width), static_cast<std::uint16_t>(i / spec.width), pol});
      };
      while (l1 - ref[i] >= spec.theta) {
        ref[i] += spec.theta;
        emit(Polarity::kOn);
      }
      while (ref[i] - l1 >= spec.theta) {
        ref[i] -= spec.theta;
        emit(Polarity::kOff);
      }
    }
    prev = cur;
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return EventStream(spec.height, spec.width, std::move(events));
}

void SceneFamily::validate() const {
  if (height < 1 || width < 1) throw ConfigError("height", "canvas must be positive");
  if (!(d_min > 0.0 && d_min < d_max)) throw ConfigError("d_min", "need 0 < d_min < d_max");
  if (!(background_depth_min >= d_min && background_depth_min <= d_max)) {
    throw ConfigError("background_depth_min", "outside [d_min, d_max]");
  }
  if (min_objects < 0 || max_objects < min_objects) throw ConfigError("max_objects", "need 0 <= min <= max");
  if (!(min_size > 0.0 && max_size >= min_size)) throw ConfigError("max_size", "need 0 < min_size <= max_size");
  if (!(contrast_min >= 0.0 && contrast_max >= contrast_min)) {
    throw ConfigError("contrast_max", "need 0 <= contrast_min <= contrast_max");
  }
  if (!(duration > 0.0)) throw ConfigError("duration", "must be positive");
  if (!(theta > 0.0)) throw ConfigError("theta", "must be positive");
}

SceneSpec sample_scene(const SceneFamily& family, std::uint64_t seed) {
  family.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const auto log_uniform = [&](double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); };

  SceneSpec s;
  s.height = family.height;
  s.width = family.width;
  s.baseline = family.baseline;
  s.duration = family.duration;
  s.theta = family.theta;
  s.d_min = family.d_min;
  s.d_max = family.d_max;
  s.gt_keep_fraction = family.gt_keep_fraction;
  s.seed = seed;

  const double heading = uniform(0.0, 2.0 * std::acos(-1.0));
  const double ex = family.ego_speed * std::cos(heading), ey = family.ego_speed * std::sin(heading);
  s.background_depth = log_uniform(family.background_depth_min, family.d_max);
  s.background_vx = ex / s.background_depth;
  s.background_vy = ey / s.background_depth;
  s.background = Texture(mix_seed(seed, 0), 0.0, uniform(family.contrast_min, family.contrast_max));

  const int n = std::uniform_int_distribution<int>(family.min_objects, family.max_objects)(rng);
  for (int k = 0; k < n; ++k) {
    SceneObject o;
    o.depth = log_uniform(family.d_min, s.background_depth);
    o.width = uniform(family.min_size, family.max_size);
    o.height = uniform(family.min_size, family.max_size);
    o.vx = ex / o.depth;
    o.vy = ey / o.depth;
    // Centre the object's path on the canvas so it stays mostly visible.
    const double cx = uniform(0.2, 0.8) * family.width - 0.5 * o.vx * family.duration;
    const double cy = uniform(0.2, 0.8) * family.height - 0.5 * o.vy * family.duration;
    o.x = cx - 0.5 * o.width;
    o.y = cy - 0.5 * o.height;
    o.texture = Texture(mix_seed(seed, static_cast<std::uint64_t>(k) + 1), uniform(-0.5, 0.5),
                        uniform(family.contrast_min, family.contrast_max));
    s.objects.push_back(std::move(o));
  }
  s.validate();
  return s;
}

std::size_t DatasetManifest::train_count() const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](const SampleRecord& r) { return r.train; }));
}

std::size_t DatasetManifest::test_count() const { return samples.size() - train_count(); }

DatasetManifest make_dataset(const SceneFamily& family, int count, const std::filesystem::path& out_dir,
                             std::uint64_t seed) {
  if (count < 1) throw ConfigError("count", "must be positive");
  family.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create dataset directory " + out_dir.string() + ": " + ec.message());

  std::vector<int> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(mix_seed(seed, 0xFFFF));
  std::shuffle(order.begin(), order.end(), split_rng);
  const int n_train = static_cast<int>(std::llround(0.8 * count));
  std::vector<bool> is_train(static_cast<std::size_t>(count), false);
  for (int i = 0; i < n_train; ++i) is_train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

  DatasetManifest m;
  m.root = out_dir;
  m.height = family.height;
  m.width = family.width;
  m.duration = static_cast<Microseconds>(std::llround(family.duration * 1e6));
  m.gt_period = kGroundTruthPeriod;
  m.seed = seed;
  for (int i = 0; i < count; ++i) {
    const SceneSpec scene = sample_scene(family, mix_seed(seed, static_cast<std::uint64_t>(i) + 0x10000));
    SampleRecord rec;
    rec.id = sample_dir(i);
    rec.train = is_train[static_cast<std::size_t>(i)];
    const std::filesystem::path dir = out_dir / rec.id;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    rec.left = rec.id + "/left.evt";
    rec.right = rec.id + "/right.evt";
    write_evt(generate_events(scene, View::kLeft), out_dir / rec.left);
    write_evt(generate_events(scene, View::kRight), out_dir / rec.right);
    for (Microseconds t = 0; t <= m.duration; t += m.gt_period) {
      DepthFrame f{t, rec.id + "/" + depth_name(t)};
      evalx::write_depth_f32(render_depth(scene, static_cast<double>(t) * 1e-6), out_dir / f.path);
      rec.depth.push_back(std::move(f));
    }
    m.samples.push_back(std::move(rec));
  }

  nlohmann::json j;
  j["format"] = "stereospike-dataset";
  j["version"] = 1;
  j["height"] = m.height;
  j["width"] = m.width;
  j["duration_us"] = m.duration;
  j["gt_period_us"] = m.gt_period;
  j["seed"] = m.seed;
  j["samples"] = nlohmann::json::array();
  for (const SampleRecord& r : m.samples) {
    nlohmann::json s;
    s["id"] = r.id;
    s["split"] = r.train ? "train" : "test";
    s["left"] = r.left;
    s["right"] = r.right;
    s["depth"] = nlohmann::json::array();
    for (const DepthFrame& f : r.depth) s["depth"].push_back({{"t_us", f.t}, {"path", f.path}});
    j["samples"].push_back(std::move(s));
  }
  std::ofstream out(out_dir / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (out_dir / "manifest.json").string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + (out_dir / "manifest.json").string());
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_or_dir) {
  const std::filesystem::path path = std::filesystem::is_directory(manifest_or_dir)
                                         ? manifest_or_dir / "manifest.json"
                                         : manifest_or_dir;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    DatasetManifest m;
    m.root = path.parent_path();
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.duration = j.at("duration_us").get<Microseconds>();
    m.gt_period = j.at("gt_period_us").get<Microseconds>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("samples")) {
      SampleRecord r;
      r.id = s.at("id").get<std::string>();
      const std::string split = s.at("split").get<std::string>();
      if (split != "train" && split != "test") throw std::runtime_error("sample " + r.id + ": bad split '" + split + "'");
      r.train = split == "train";
      r.left = s.at("left").get<std::string>();
      r.right = s.at("right").get<std::string>();
      for (const auto& f : s.at("depth")) r.depth.push_back({f.at("t_us").get<Microseconds>(), f.at("path").get<std::string>()});
      m.samples.push_back(std::move(r));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed manifest: " + e.what());
  }
}

}  // namespace stereospike::synth
