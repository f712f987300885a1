#include "stereospike/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "stereospike/autodiff.hpp"

namespace stereospike::ad {

namespace {

template <typename Real>
class Suite {
 public:
  Suite(std::uint64_t seed, double eps, double tol, int instances, std::string precision)
      : rng_(seed), eps_(eps), tol_(tol), instances_(instances), precision_(std::move(precision)) {}

  Tensor<Real> random(const Shape& shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<Real> v(numel(shape));
    for (Real& x : v) x = static_cast<Real>(u(rng_));
    return Tensor<Real>::constant(shape, std::move(v));
  }

  // Values bounded away from zero, so |x| and the kink stay apart.
  Tensor<Real> random_away_from_zero(const Shape& shape) {
    std::uniform_real_distribution<double> mag(0.2, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<Real> v(numel(shape));
    for (Real& x : v) x = static_cast<Real>(sign(rng_) ? mag(rng_) : -mag(rng_));
    return Tensor<Real>::constant(shape, std::move(v));
  }

  // sum(out * R) for a fixed random R.
  static Tensor<Real> contract(Tape<Real>& tape, const Tensor<Real>& out, const Tensor<Real>& r) {
    return sum_reduce(tape, mul(tape, out, r));
  }

  int rand_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  // `make` returns (f, x) for one random instance.
  using Instance = std::pair<ScalarFn<Real>, Tensor<Real>>;
  void check(const std::string& name, const std::function<Instance()>& make) {
    GradCheckCase c{name, precision_, instances_, 0.0, tol_};
    for (int k = 0; k < instances_; ++k) {
      auto [f, x] = make();
      c.worst_rel_error = std::max(c.worst_rel_error, grad_check<Real>(f, x, eps_).max_rel_error);
    }
    results.push_back(c);
  }

  std::vector<GradCheckCase> results;

 private:
  std::mt19937_64 rng_;
  double eps_;
  double tol_;
  int instances_;
  std::string precision_;
};

template <typename Real>
void run(Suite<Real>& s) {
  using T = Tensor<Real>;
  using Tp = Tape<Real>;

  for (int stride : {1, 2}) {
    const std::string tag = "conv2d(stride " + std::to_string(stride) + ")";
    s.check(tag + "/input", [&s, stride] {
      const int ci = s.rand_int(1, 3), co = s.rand_int(1, 3), h = s.rand_int(4, 7), w = s.rand_int(4, 7);
      const T weight = s.random({co, ci, 3, 3});
      const T probe = s.random({ci, h, w});
      Tp off(false);
      const T r = s.random(conv2d(off, probe, weight, stride, 1).shape());
      return std::make_pair(ScalarFn<Real>([=](Tp& t, const T& x) { return Suite<Real>::contract(t, conv2d(t, x, weight, stride, 1), r); }),
                            probe);
    });
    s.check(tag + "/weight", [&s, stride] {
      const int ci = s.rand_int(1, 3), co = s.rand_int(1, 3), h = s.rand_int(4, 7), w = s.rand_int(4, 7);
      const T input = s.random({ci, h, w});
      const T probe = s.random({co, ci, 3, 3});
      Tp off(false);
      const T r = s.random(conv2d(off, input, probe, stride, 1).shape());
      return std::make_pair(ScalarFn<Real>([=](Tp& t, const T& x) { return Suite<Real>::contract(t, conv2d(t, input, x, stride, 1), r); }),
                            probe);
    });
  }

  s.check("nn_upsample", [&s] {
    const int factor = 1 << s.rand_int(1, 2);
    const T probe = s.random({s.rand_int(1, 3), s.rand_int(2, 4), s.rand_int(2, 4)});
    const T r = s.random({probe.dim(0), probe.dim(1) * factor, probe.dim(2) * factor});
    return std::make_pair(ScalarFn<Real>([=](Tp& t, const T& x) { return Suite<Real>::contract(t, nn_upsample(t, x, factor), r); }),
                          probe);
  });

  using Binary = T (*)(Tp&, const T&, const T&);
  const std::pair<const char*, Binary> binaries[] = {{"add", &add<Real>}, {"sub", &sub<Real>}, {"mul", &mul<Real>}};
  for (const auto& [op_name, op] : binaries) {
    for (int side = 0; side < 2; ++side) {
      s.check(std::string(op_name) + (side == 0 ? "/lhs" : "/rhs"), [&s, op, side] {
        const Shape shape{s.rand_int(1, 3), s.rand_int(2, 5), s.rand_int(2, 5)};
        const T other = s.random(shape), probe = s.random(shape), r = s.random(shape);
        return std::make_pair(ScalarFn<Real>([=](Tp& t, const T& x) {
                                return Suite<Real>::contract(t, side == 0 ? op(t, x, other) : op(t, other, x), r);
                              }),
                              probe);
      });
    }
  }

  s.check("scale", [&s] {
    const Shape shape{s.rand_int(1, 20)};
    const double factor = s.random({1}, -3.0, 3.0).item();
    const T probe = s.random(shape), r = s.random(shape);
    return std::make_pair(ScalarFn<Real>([=](Tp& t, const T& x) { return Suite<Real>::contract(t, scale(t, x, factor), r); }), probe);
  });
  s.check("divide", [&s] {
    const Shape shape{s.rand_int(1, 20)};
    const double divisor = 0.5 + s.random({1}, 0.0, 3.0).item();
    const T probe = s.random(shape), r = s.random(shape);
    return std::make_pair(ScalarFn<Real>([=](Tp& t, const T& x) { return Suite<Real>::contract(t, divide(t, x, divisor), r); }), probe);
  });
  s.check("square", [&s] {
    const Shape shape{s.rand_int(1, 20)};
    const T probe = s.random(shape), r = s.random(shape);
    return std::make_pair(ScalarFn<Real>([=](Tp& t, const T& x) { return Suite<Real>::contract(t, square(t, x), r); }), probe);
  });
  s.check("abs_elem", [&s] {
    const Shape shape{s.rand_int(1, 20)};
    const T probe = s.random_away_from_zero(shape), r = s.random(shape);
    return std::make_pair(ScalarFn<Real>([=](Tp& t, const T& x) { return Suite<Real>::contract(t, abs_elem(t, x), r); }), probe);
  });
  s.check("sum_reduce", [&s] {
    const T probe = s.random({s.rand_int(1, 4), s.rand_int(1, 6)});
    return std::make_pair(ScalarFn<Real>([](Tp& t, const T& x) { return square(t, sum_reduce(t, x)); }), probe);
  });
  s.check("mean_reduce", [&s] {
    const T probe = s.random({s.rand_int(1, 4), s.rand_int(1, 6)});
    return std::make_pair(ScalarFn<Real>([](Tp& t, const T& x) { return square(t, mean_reduce(t, x)); }), probe);
  });
  s.check("masked_select", [&s] {
    const Shape shape{s.rand_int(2, 5), s.rand_int(2, 5)};
    std::vector<std::uint8_t> mask(numel(shape));
    for (auto& m : mask) m = static_cast<std::uint8_t>(s.rand_int(0, 1));
    mask[0] = 1;
    const auto n = static_cast<int>(std::count(mask.begin(), mask.end(), 1));
    const T probe = s.random(shape), r = s.random({n});
    return std::make_pair(ScalarFn<Real>([=](Tp& t, const T& x) {
                            return Suite<Real>::contract(t, masked_select(t, x, std::span<const std::uint8_t>(mask)), r);
                          }),
                          probe);
  });
  s.check("gather", [&s] {
    const Shape shape{s.rand_int(2, 12)};
    std::vector<std::size_t> idx(static_cast<std::size_t>(s.rand_int(1, 16)));
    for (auto& i : idx) i = static_cast<std::size_t>(s.rand_int(0, shape[0] - 1));
    const T probe = s.random(shape), r = s.random({static_cast<int>(idx.size())});
    return std::make_pair(ScalarFn<Real>([=](Tp& t, const T& x) {
                            return Suite<Real>::contract(t, gather(t, x, std::span<const std::size_t>(idx)), r);
                          }),
                          probe);
  });

  // Encoder-style block with the spike step replaced by a smooth square:
  // h = conv_s2(x, w1); y = conv_s1(h^2, w2) + h; out = upsample(y).
  struct Block {
    T x, w1, w2, r;
  };
  const auto make_block = [&s] {
    const int ci = s.rand_int(1, 2), c = s.rand_int(2, 3), hw = 2 * s.rand_int(2, 4);
    Block b{s.random({ci, hw, hw}), s.random({c, ci, 3, 3}, -0.5, 0.5), s.random({c, c, 3, 3}, -0.5, 0.5),
            s.random({c, hw, hw})};
    return b;
  };
  const auto block = [](Tp& t, const T& x, const T& w1, const T& w2, const T& r) {
    const T h = conv2d(t, x, w1, 2, 1);
    const T y = add(t, conv2d(t, square(t, h), w2, 1, 1), h);
    return Suite<Real>::contract(t, nn_upsample(t, y, 2), r);
  };
  s.check("encoder_block/input", [&] {
    const Block b = make_block();
    return std::make_pair(ScalarFn<Real>([=](Tp& t, const T& x) { return block(t, x, b.w1, b.w2, b.r); }), b.x);
  });
  s.check("encoder_block/w1", [&] {
    const Block b = make_block();
    return std::make_pair(ScalarFn<Real>([=](Tp& t, const T& w) { return block(t, b.x, w, b.w2, b.r); }), b.w1);
  });
  s.check("encoder_block/w2", [&] {
    const Block b = make_block();
    return std::make_pair(ScalarFn<Real>([=](Tp& t, const T& w) { return block(t, b.x, b.w1, w, b.r); }), b.w2);
  });
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, const GradCheckOptions& options) {
  Suite<float> f32(seed, options.eps_f32, options.tol_f32, options.instances, "f32");
  run(f32);
  Suite<double> f64(seed + 1, options.eps_f64, options.tol_f64, options.instances, "f64");
  run(f64);
  std::vector<GradCheckCase> all = std::move(f32.results);
  all.insert(all.end(), f64.results.begin(), f64.results.end());
  return all;
}

}  // namespace stereospike::ad
