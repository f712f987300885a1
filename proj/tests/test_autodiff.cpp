#include <cmath>
#include <random>

#include "doctest.h"
#include "stereospike/autodiff.hpp"
#include "stereospike/gradcheck.hpp"

using namespace stereospike::ad;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Direct seven-loop cross-correlation with zero padding.
std::vector<double> naive_conv(const std::vector<double>& in, int ci, int h, int w, const std::vector<double>& wt,
                               int co, int k, int stride, int pad, int& oh, int& ow) {
  oh = (h + 2 * pad - k) / stride + 1;
  ow = (w + 2 * pad - k) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(co * oh * ow), 0.0);
  for (int o = 0; o < co; ++o)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int c = 0; c < ci; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = y * stride - pad + ky, ix = x * stride - pad + kx;
              if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
              acc += in[(c * h + iy) * w + ix] * wt[((o * ci + c) * k + ky) * k + kx];
            }
        out[(o * oh + y) * ow + x] = acc;
      }
  return out;
}

}  // namespace

TEST_CASE("conv2d matches a direct loop for strides 1 and 2") {
  std::mt19937_64 rng(11);
  for (int stride : {1, 2}) {
    const int ci = 3, co = 4, h = 9, w = 7, k = 3;
    const auto in = random_values(ci * h * w, rng);
    const auto wt = random_values(co * ci * k * k, rng);
    int oh = 0, ow = 0;
    const auto ref = naive_conv(in, ci, h, w, wt, co, k, stride, 1, oh, ow);
    Tape<double> tape(false);
    const auto out = conv2d(tape, Tensor<double>::constant({ci, h, w}, in), Tensor<double>::constant({co, ci, k, k}, wt),
                            stride, 1);
    REQUIRE(out.shape() == Shape{co, oh, ow});
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(out.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d rejects mismatched channels") {
  Tape<float> tape;
  const auto x = Tensor<float>::zeros({2, 4, 4});
  const auto w = Tensor<float>::zeros({1, 3, 3, 3});
  CHECK_THROWS_AS(conv2d(tape, x, w, 1, 1), ShapeError);
}

TEST_CASE("nn_upsample replicates each cell into a block") {
  Tape<float> tape(false);
  const auto x = Tensor<float>::constant({1, 2, 2}, {1, 2, 3, 4});
  const auto y = nn_upsample(tape, x, 2);
  REQUIRE(y.shape() == Shape{1, 4, 4});
  const std::vector<float> expect{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  CHECK(std::vector<float>(y.values().begin(), y.values().end()) == expect);
  CHECK_THROWS(nn_upsample(tape, x, 3));
}

TEST_CASE("heaviside forward is binary with spikes at and above threshold") {
  Tape<float> tape(false);
  const auto x = Tensor<float>::constant({5}, {-1.0f, 0.999f, 1.0f, 1.001f, 7.0f});
  const auto s = heaviside_surrogate(tape, x, 1.0, SurrogateConfig{});
  const std::vector<float> expect{0, 0, 1, 1, 1};
  CHECK(std::vector<float>(s.values().begin(), s.values().end()) == expect);
}

TEST_CASE("heaviside backward is the arctan surrogate") {
  const double alpha = 2.0, pi = std::acos(-1.0);
  std::vector<double> xs;
  for (int i = -50; i <= 50; ++i) xs.push_back(0.1 * i);
  auto x = Tensor<double>::parameter({static_cast<int>(xs.size())}, xs);
  Tape<double> tape;
  const auto loss = sum_reduce(tape, heaviside_surrogate(tape, x, 0.0, SurrogateConfig{alpha}));
  tape.backward(loss);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double t = pi * alpha * xs[i] / 2.0;
    CHECK(x.grad()[i] == doctest::Approx(alpha / (2.0 * (1.0 + t * t))).epsilon(1e-12));
  }
}

TEST_CASE("backward requires a scalar and leaf gradients accumulate") {
  auto w = Tensor<float>::parameter({3}, {1.0f, 2.0f, 3.0f});
  {
    Tape<float> tape;
    const auto y = square(tape, w);
    CHECK_THROWS(tape.backward(y));
  }
  for (int pass = 0; pass < 2; ++pass) {
    Tape<float> tape;
    tape.backward(sum_reduce(tape, scale(tape, w, 3.0)));
  }
  for (float g : w.grad()) CHECK(g == 6.0f);
  w.zero_grad();
  for (float g : w.grad()) CHECK(g == 0.0f);
}

TEST_CASE("a non-recording tape records nothing") {
  const auto w = Tensor<float>::parameter({2}, {1.0f, 2.0f});
  Tape<float> tape(false);
  const auto y = sum_reduce(tape, mul(tape, w, w));
  CHECK(tape.size() == 0);
  CHECK(y.item() == 5.0f);
}

TEST_CASE("elementwise ops reject shape mismatch") {
  Tape<float> tape;
  CHECK_THROWS_AS(add(tape, Tensor<float>::zeros({2}), Tensor<float>::zeros({3})), ShapeError);
}

TEST_CASE("sum_reduce accumulates in double precision") {
  std::vector<float> v(1 << 20, 1e-4f);
  v[0] = 1e4f;
  Tape<float> tape(false);
  const float s = sum_reduce(tape, Tensor<float>::constant({static_cast<int>(v.size())}, v)).item();
  double ref = 0.0;
  for (float x : v) ref += x;
  CHECK(s == static_cast<float>(ref));
}

TEST_CASE("masked_select and gather route gradients back to their sources") {
  auto x = Tensor<double>::parameter({4}, {1, 2, 3, 4});
  Tape<double> tape;
  const std::vector<std::uint8_t> mask{1, 0, 1, 0};
  const std::vector<std::size_t> idx{3, 3, 0};
  const auto a = sum_reduce(tape, masked_select(tape, x, std::span<const std::uint8_t>(mask)));
  const auto b = sum_reduce(tape, gather(tape, x, std::span<const std::size_t>(idx)));
  CHECK(a.item() == 4.0);
  CHECK(b.item() == 9.0);
  tape.backward(add(tape, a, b));
  const std::vector<double> expect{2, 0, 1, 2};
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == expect);
}

TEST_CASE("finite-difference suite passes in both precisions") {
  for (const GradCheckCase& c : run_gradcheck_suite(2024)) {
    INFO(c.precision << " " << c.name << " rel err " << c.worst_rel_error);
    CHECK(c.instances >= 20);
    CHECK(c.passed());
  }
}
