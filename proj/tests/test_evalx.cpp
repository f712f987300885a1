#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "stereospike/evalx.hpp"
#include "test_util.hpp"

using namespace stereospike;
using namespace stereospike::evalx;

namespace {

ForwardTrace trace_with(const std::vector<std::pair<std::string, std::vector<float>>>& layers) {
  ForwardTrace t;
  for (const auto& [name, values] : layers) {
    snn::SpikeTensor s(DiffTensor::constant({static_cast<int>(values.size())}, values), 4);
    t.layers.push_back({name, s, s.density()});
  }
  return t;
}

}  // namespace

TEST_CASE("mde is zero for a perfect prediction and tracks a constant offset") {
  DepthMap gt = DepthMap::filled(4, 4, 2.0f);
  gt.valid[3] = 0;
  CHECK(mde(gt, gt) == 0.0);
  DepthMap pred = gt;
  for (float& d : pred.depth) d += 0.10f;
  CHECK(mde(pred, gt) == doctest::Approx(10.0).epsilon(1e-5));
  pred.depth[3] = 100.0f;
  CHECK(mde(pred, gt) == doctest::Approx(10.0).epsilon(1e-5));
  for (float& d : pred.depth) d += 0.25f;
  CHECK(mde(pred, gt) == doctest::Approx(35.0).epsilon(1e-5));
}

TEST_CASE("mde rejects mismatched or empty ground truth") {
  DepthMap gt = DepthMap::filled(2, 2, 1.0f);
  CHECK_THROWS_AS(mde(DepthMap::filled(2, 3, 1.0f), gt), GeometryError);
  std::fill(gt.valid.begin(), gt.valid.end(), 0);
  CHECK_THROWS(mde(gt, gt));
}

TEST_CASE("density counts nonzero cells") {
  CHECK(density(snn::SpikeTensor(DiffTensor::constant({4}, {0, 2, 0, 1}), 2)) == 0.5);
  CHECK(density(snn::SpikeTensor(DiffTensor::constant({3}, {0, 0, 0}), 1)) == 0.0);
}

TEST_CASE("report rows average traces and group means recompute from members") {
  const auto a = trace_with({{"out_bottomL", {1, 0, 0, 0}}, {"out_conv1L", {1, 1, 0, 0}},
                             {"out_combined", {2, 0}}, {"out_rconv", {4, 4}},
                             {"out_deconv1", {0, 0, 0, 0}}, {"out_add1", {1, 0, 3, 0}}});
  const auto b = trace_with({{"out_bottomL", {1, 1, 1, 0}}, {"out_conv1L", {0, 0, 0, 0}},
                             {"out_combined", {2, 2}}, {"out_rconv", {0, 0}},
                             {"out_deconv1", {1, 1, 1, 1}}, {"out_add1", {0, 0, 0, 0}}});
  const DensityReport r = density_report({a, b}, 12.5);
  std::vector<std::string> names;
  for (const auto& row : r.rows) names.push_back(row.name);
  const std::vector<std::string> expect{"out_bottomL", "out_conv1L", "Left Encoder Mean", "out_combined",
                                        "out_rconv", "Bottleneck Mean", "out_deconv1", "out_add1", "Decoder Mean"};
  CHECK(names == expect);
  CHECK(r.find("out_bottomL")->density == doctest::Approx(0.5));
  CHECK(r.find("out_combined")->density == doctest::Approx(0.75));
  CHECK(r.group_mean("Left Encoder") == doctest::Approx((0.5 + 0.25) / 2));
  CHECK(r.group_mean("Decoder") == doctest::Approx((0.5 + 0.25) / 2));
  CHECK(r.find("out_add1")->mass_density == doctest::Approx(0.5));

  std::ostringstream csv, txt;
  r.write_csv(csv);
  r.write_text(txt);
  CHECK(csv.str().find("out_combined,75.0,") != std::string::npos);
  CHECK(csv.str().find("MDE_cm,12.5") != std::string::npos);
  CHECK(txt.str().find("Decoder Mean") != std::string::npos);
  CHECK_THROWS(density_report({}, 0.0));
}

TEST_CASE("report of an all-zero forward pass is all zeros") {
  const ModelConfig cfg = testing::small_config();
  StereoSpikeNet net(cfg);
  initialize_weights(net, 1);
  const auto fr = testing::run(net, testing::random_input(cfg, 1, 0.0));
  const DensityReport r = density_report({fr.trace}, 0.0);
  CHECK(r.rows.size() == fr.trace.layers.size() + 4);
  for (const auto& row : r.rows) CHECK(row.density == 0.0);
}

TEST_CASE("depth rasters round-trip through .f32 and write a 16-bit pgm") {
  DepthMap m = DepthMap::filled(3, 5, 1.25f);
  m.depth[7] = 9.5f;
  m.valid[2] = 0;
  const auto dir = std::filesystem::temp_directory_path();
  write_depth_f32(m, dir / "stereospike_test.f32");
  const DepthMap back = read_depth_f32(dir / "stereospike_test.f32");
  CHECK(back.height == 3);
  CHECK(back.width == 5);
  CHECK(back.valid == m.valid);
  CHECK(back.depth[7] == 9.5f);
  CHECK(std::isnan(back.depth[2]));
  write_depth_pgm(m, dir / "stereospike_test.pgm");
  CHECK(std::filesystem::file_size(dir / "stereospike_test.pgm") == std::string("P5\n5 3\n65535\n").size() + 30);
  std::filesystem::remove(dir / "stereospike_test.f32");
  std::filesystem::remove(dir / "stereospike_test.pgm");
}
