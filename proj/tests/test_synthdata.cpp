#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "doctest.h"
#include "stereospike/synthdata.hpp"

using namespace stereospike;
using namespace stereospike::synth;

namespace {

SceneSpec flat_scene(int h, int w, double bg_depth) {
  SceneSpec s;
  s.height = h;
  s.width = w;
  s.background_depth = bg_depth;
  s.background = Texture(1, 0.0, 0.0);
  return s;
}

SceneObject block(double x, double y, double w, double h, double depth, double level) {
  SceneObject o;
  o.x = x;
  o.y = y;
  o.width = w;
  o.height = h;
  o.depth = depth;
  o.texture = Texture(2, level, 0.0);
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("texture is periodic and stays within its contrast") {
  const Texture t(5, 0.2, 0.5, 3.0, 24);
  for (double u = 0.0; u < 30.0; u += 1.7) {
    CHECK(t.sample(u, 2.3) == doctest::Approx(t.sample(u + 72.0, 2.3)));
    CHECK(std::abs(t.sample(u, 2.3) - 0.2) <= 0.5);
  }
}

TEST_CASE("a scene without objects has constant depth") {
  const DepthMap d = render_depth(flat_scene(8, 12, 4.0), 0.1);
  for (float v : d.depth) CHECK(v == 4.0f);
  CHECK(d.n_valid() == 96);
}

TEST_CASE("a rectangle covers exactly the pixels whose centres it contains") {
  SceneSpec s = flat_scene(32, 32, 5.0);
  s.objects.push_back(block(3.0, 2.0, 10.0, 8.0, 1.0, 0.5));
  const DepthMap d = render_depth(s, 0.0);
  CHECK(std::count(d.depth.begin(), d.depth.end(), 1.0f) == 80);
  CHECK(d.at(2, 3) == 1.0f);
  CHECK(d.at(9, 12) == 1.0f);
  CHECK(d.at(10, 12) == 5.0f);
  CHECK(d.at(9, 13) == 5.0f);
}

TEST_CASE("nearer surfaces occlude farther ones regardless of order") {
  SceneSpec s = flat_scene(16, 16, 8.0);
  s.objects.push_back(block(0.0, 0.0, 10.0, 10.0, 3.0, 0.1));
  s.objects.push_back(block(5.0, 5.0, 10.0, 10.0, 1.5, 0.9));
  const DepthMap d = render_depth(s, 0.0);
  CHECK(d.at(7, 7) == 1.5f);
  CHECK(d.at(2, 2) == 3.0f);
  CHECK(d.at(14, 14) == 1.5f);
  CHECK(d.at(14, 2) == 8.0f);
  const auto lum = render_log_luminance(s, 0.0, View::kLeft);
  CHECK(lum[7 * 16 + 7] == doctest::Approx(0.9));
}

TEST_CASE("a static scene emits no events") {
  SceneSpec s = flat_scene(12, 12, 5.0);
  s.background = Texture(3, 0.0, 0.7);
  s.objects.push_back(block(2.0, 2.0, 5.0, 5.0, 1.0, 0.8));
  CHECK(generate_events(s, View::kLeft).size() == 0);
  CHECK(generate_events(s, View::kRight).size() == 0);
}

TEST_CASE("a zero baseline gives identical left and right streams") {
  SceneFamily fam;
  fam.height = fam.width = 24;
  fam.min_size = 6;
  fam.max_size = 12;
  fam.baseline = 0.0;
  const SceneSpec s = sample_scene(fam, 11);
  const EventStream l = generate_events(s, View::kLeft);
  CHECK(l.size() > 0);
  CHECK(l == generate_events(s, View::kRight));
}

TEST_CASE("a moving bright bar emits the hand-counted events") {
  // Step of 1.0 in log-luminance crosses theta = 0.15 six times per pixel.
  // Over 0.25 s at 10 px/s the 4 px bar advances 2.5 px: columns 4 and 5
  // brighten, columns 0 and 1 darken, column 2 stays covered.
  SceneSpec s = flat_scene(4, 10, 5.0);
  s.objects.push_back(block(0.0, 0.0, 4.0, 3.0, 1.0, 1.0));
  s.objects.back().vx = 10.0;
  const EventStream ev = generate_events(s, View::kLeft);
  int on = 0, off = 0;
  std::set<int> on_cols, off_cols;
  for (const Event& e : ev.events()) {
    CHECK(e.y < 3);
    if (e.polarity == Polarity::kOn) {
      ++on;
      on_cols.insert(e.x);
    } else {
      ++off;
      off_cols.insert(e.x);
    }
  }
  CHECK(on == 36);
  CHECK(off == 36);
  CHECK(on_cols == std::set<int>{4, 5});
  CHECK(off_cols == std::set<int>{0, 1});
  CHECK(std::is_sorted(ev.events().begin(), ev.events().end(),
                       [](const Event& a, const Event& b) { return a.t < b.t; }));
}

TEST_CASE("right view disparity matches baseline over depth") {
  SceneSpec s = flat_scene(16, 40, 8.0);
  s.baseline = 4.0;
  s.objects.push_back(block(20.0, 4.0, 8.0, 8.0, 1.6, 0.5));
  const DepthMap l = render_depth(s, 0.0, View::kLeft), r = render_depth(s, 0.0, View::kRight);
  const auto first_col = [](const DepthMap& d) {
    for (int x = 0; x < d.width; ++x)
      if (d.at(8, x) == 1.6f) return x;
    return -1;
  };
  const int disparity = first_col(l) - first_col(r);
  CHECK(std::abs(disparity - 4.0 / 1.6) <= 1.0);
  CHECK(view_shift(s, 2.0, View::kRight) == -2.0);
  CHECK(view_shift(s, 2.0, View::kLeft) == 0.0);
}

TEST_CASE("scene validation names the bad field") {
  SceneSpec s = flat_scene(8, 8, 20.0);
  try {
    s.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "background_depth");
  }
  SceneFamily fam;
  fam.max_objects = -1;
  CHECK_THROWS_AS(fam.validate(), ConfigError);
  fam = SceneFamily{};
  fam.contrast_min = 0.7;
  fam.contrast_max = 0.6;
  CHECK_THROWS_AS(fam.validate(), ConfigError);
}

TEST_CASE("sampled scenes follow the translating-camera model") {
  const SceneFamily fam;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SceneSpec s = sample_scene(fam, seed);
    CHECK(s.objects.size() >= 1);
    CHECK(s.objects.size() <= 3);
    const double ego = std::hypot(s.background_vx, s.background_vy) * s.background_depth;
    CHECK(ego == doctest::Approx(fam.ego_speed));
    for (const SceneObject& o : s.objects) {
      CHECK(o.depth <= s.background_depth);
      CHECK(o.vx * o.depth == doctest::Approx(s.background_vx * s.background_depth));
    }
  }
}

TEST_CASE("datasets are reproducible and split 80/20") {
  SceneFamily fam;
  fam.height = fam.width = 16;
  fam.min_size = 4;
  fam.max_size = 10;
  const auto base = std::filesystem::temp_directory_path() / "stereospike_test_synth";
  std::filesystem::remove_all(base);
  const DatasetManifest a = make_dataset(fam, 10, base / "a", 3);
  make_dataset(fam, 10, base / "b", 3);
  CHECK(a.train_count() == 8);
  CHECK(a.test_count() == 2);
  for (const auto& entry : std::filesystem::recursive_directory_iterator(base / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), base / "a");
    CHECK(slurp(entry.path()) == slurp(base / "b" / rel));
  }
  const DatasetManifest loaded = load_manifest(base / "a");
  REQUIRE(loaded.samples.size() == 10);
  std::set<std::string> train, test;
  for (const SampleRecord& r : loaded.samples) {
    (r.train ? train : test).insert(r.id);
    CHECK(r.depth.size() == 6);
    CHECK(r.depth.back().t == 250'000);
    CHECK(std::filesystem::exists(loaded.root / r.left));
  }
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
  for (const auto& id : test) CHECK(train.count(id) == 0);

  const DatasetManifest other = make_dataset(fam, 10, base / "c", 4);
  CHECK(slurp(base / "a" / "sample_0000" / "left.evt") != slurp(base / "c" / "sample_0000" / "left.evt"));
  std::filesystem::remove_all(base);
}
