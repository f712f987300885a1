#include "stereospike/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace stereospike::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

double arctan_surrogate_grad(double x, double alpha) {
  const double z = std::numbers::pi * alpha * x / 2.0;
  return alpha / (2.0 * (1.0 + z * z));
}

// ---------------------------------------------------------------------------
// Tensor

template <typename Real>
typename Tensor<Real>::Storage& Tensor<Real>::storage() const {
  if (!storage_) throw std::logic_error("use of undefined tensor");
  return *storage_;
}

template <typename Real>
Tensor<Real> Tensor<Real>::constant(Shape shape, std::vector<Real> values) {
  if (numel(shape) != values.size()) {
    throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " +
                     to_string(shape));
  }
  auto s = std::make_shared<Storage>();
  s->shape = std::move(shape);
  s->values = std::move(values);
  return Tensor(std::move(s));
}

template <typename Real>
Tensor<Real> Tensor<Real>::parameter(Shape shape, std::vector<Real> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.storage_->requires_grad = true;
  return t;
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  std::vector<Real> v(numel(shape), Real(0));
  Tensor t = constant(std::move(shape), std::move(v));
  t.storage_->requires_grad = requires_grad;
  return t;
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value) {
  return constant(Shape{1}, std::vector<Real>{value});
}

template <typename Real>
Tensor<Real> Tensor<Real>::result(Shape shape, std::vector<Real> values, bool requires_grad) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.storage_->requires_grad = requires_grad;
  t.storage_->leaf = false;
  return t;
}

template <typename Real>
const Shape& Tensor<Real>::shape() const {
  return storage().shape;
}

template <typename Real>
int Tensor<Real>::dim(std::size_t axis) const {
  const Shape& s = storage().shape;
  if (axis >= s.size()) throw ShapeError("axis out of range for shape " + to_string(s));
  return s[axis];
}

template <typename Real>
std::size_t Tensor<Real>::size() const {
  return storage().values.size();
}

template <typename Real>
bool Tensor<Real>::requires_grad() const {
  return storage().requires_grad;
}

template <typename Real>
bool Tensor<Real>::is_leaf() const {
  return storage().leaf;
}

template <typename Real>
std::span<const Real> Tensor<Real>::values() const {
  return storage().values;
}

template <typename Real>
std::span<Real> Tensor<Real>::mutable_values() {
  return storage().values;
}

template <typename Real>
Real Tensor<Real>::item() const {
  const Storage& s = storage();
  if (s.values.size() != 1) throw ShapeError("item() on non-scalar of shape " + to_string(s.shape));
  return s.values[0];
}

template <typename Real>
bool Tensor<Real>::has_grad() const {
  return !storage().grad.empty();
}

template <typename Real>
std::span<const Real> Tensor<Real>::grad() const {
  return storage().grad;
}

template <typename Real>
std::span<Real> Tensor<Real>::mutable_grad() const {
  Storage& s = storage();
  if (s.grad.size() != s.values.size()) s.grad.assign(s.values.size(), Real(0));
  return s.grad;
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  Storage& s = storage();
  std::fill(s.grad.begin(), s.grad.end(), Real(0));
}

template <typename Real>
void Tensor<Real>::release_grad() {
  Storage& s = storage();
  s.grad.clear();
  s.grad.shrink_to_fit();
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  return constant(storage().shape, storage().values);
}

// ---------------------------------------------------------------------------
// Tape

template <typename Real>
bool Tape<Real>::tracks(std::initializer_list<const Tensor<Real>*> operands) const {
  if (!recording_) return false;
  for (const Tensor<Real>* t : operands) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename Real>
void Tape<Real>::record(std::string op, Tensor<Real> output, std::function<void()> backward_rule) {
  nodes_.push_back(Node{std::move(op), std::move(output), std::move(backward_rule)});
}

template <typename Real>
void Tape<Real>::backward(const Tensor<Real>& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  for (Node& n : nodes_) n.output.release_grad();
  Tensor<Real> seed = loss;
  if (!seed.requires_grad()) return;
  seed.mutable_grad()[0] += Real(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.grad().empty()) continue;
    it->backward_rule();
  }
}

// ---------------------------------------------------------------------------
// helpers

namespace {

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <typename Real>
void accumulate(const Tensor<Real>& target, std::span<const Real> delta) {
  if (!target.requires_grad()) return;
  std::span<Real> g = target.mutable_grad();
  for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

struct ConvGeometry {
  int c_in, h, w, c_out, k, stride, pad, h_out, w_out;
  std::size_t cols() const { return static_cast<std::size_t>(c_in) * k * k; }
  std::size_t pixels() const { return static_cast<std::size_t>(h_out) * w_out; }
};

// col[(ci*k + kh)*k + kw][oy*w_out + ox]
template <typename Real>
void im2col(const ConvGeometry& g, const Real* in, Real* col) {
  const std::size_t P = g.pixels();
  for (int ci = 0; ci < g.c_in; ++ci) {
    const Real* plane = in + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int kh = 0; kh < g.k; ++kh) {
      for (int kw = 0; kw < g.k; ++kw) {
        Real* row = col + ((static_cast<std::size_t>(ci) * g.k + kh) * g.k + kw) * P;
        for (int oy = 0; oy < g.h_out; ++oy) {
          const int iy = oy * g.stride - g.pad + kh;
          Real* dst = row + static_cast<std::size_t>(oy) * g.w_out;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.w_out, Real(0));
            continue;
          }
          const Real* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.w_out; ++ox) {
            const int ix = ox * g.stride - g.pad + kw;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : Real(0);
          }
        }
      }
    }
  }
}

template <typename Real>
void col2im_add(const ConvGeometry& g, const Real* col, Real* in_grad) {
  const std::size_t P = g.pixels();
  for (int ci = 0; ci < g.c_in; ++ci) {
    Real* plane = in_grad + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int kh = 0; kh < g.k; ++kh) {
      for (int kw = 0; kw < g.k; ++kw) {
        const Real* row = col + ((static_cast<std::size_t>(ci) * g.k + kh) * g.k + kw) * P;
        for (int oy = 0; oy < g.h_out; ++oy) {
          const int iy = oy * g.stride - g.pad + kh;
          if (iy < 0 || iy >= g.h) continue;
          const Real* src = row + static_cast<std::size_t>(oy) * g.w_out;
          Real* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.w_out; ++ox) {
            const int ix = ox * g.stride - g.pad + kw;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename Real>
inline void axpy(Real a, const Real* __restrict x, Real* __restrict y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

template <typename Real>
Tensor<Real> conv2d(Tape<Real>& tape, const Tensor<Real>& input, const Tensor<Real>& weight,
                    int stride, int padding, std::string_view name) {
  const std::string layer(name);
  if (input.shape().size() != 3) {
    throw ShapeError(layer + ": input must be (C,H,W), got " + to_string(input.shape()));
  }
  if (weight.shape().size() != 4 || weight.dim(2) != weight.dim(3)) {
    throw ShapeError(layer + ": weight must be (C_out,C_in,k,k), got " + to_string(weight.shape()));
  }
  if (weight.dim(1) != input.dim(0)) {
    throw ShapeError(layer + ": weight expects " + std::to_string(weight.dim(1)) +
                     " input channels, input has " + std::to_string(input.dim(0)));
  }
  if (weight.dim(2) % 2 == 0) throw ShapeError(layer + ": kernel size must be odd");
  if (stride < 1 || padding < 0) throw ShapeError(layer + ": invalid stride/padding");

  ConvGeometry g{};
  g.c_in = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.c_out = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = padding;
  g.h_out = (g.h + 2 * padding - g.k) / stride + 1;
  g.w_out = (g.w + 2 * padding - g.k) / stride + 1;
  if (g.h_out <= 0 || g.w_out <= 0) throw ShapeError(layer + ": input smaller than kernel");

  const std::size_t K = g.cols();
  const std::size_t P = g.pixels();
  auto col = std::make_shared<std::vector<Real>>(K * P);
  im2col(g, input.values().data(), col->data());

  std::vector<Real> out(static_cast<std::size_t>(g.c_out) * P, Real(0));
  const Real* w = weight.values().data();
  for (int co = 0; co < g.c_out; ++co) {
    Real* dst = out.data() + static_cast<std::size_t>(co) * P;
    const Real* wrow = w + static_cast<std::size_t>(co) * K;
    for (std::size_t kk = 0; kk < K; ++kk) {
      const Real wv = wrow[kk];
      if (wv != Real(0)) axpy(wv, col->data() + kk * P, dst, P);
    }
  }

  const bool track = tape.tracks({&input, &weight});
  Tensor<Real> result = Tensor<Real>::result({g.c_out, g.h_out, g.w_out}, std::move(out), track);
  if (!track) return result;

  tape.record(layer, result, [g, col, input, weight, result]() mutable {
    const std::size_t K = g.cols();
    const std::size_t P = g.pixels();
    std::span<const Real> dout = result.grad();
    if (weight.requires_grad()) {
      // dW[co][kk] = sum_p dout[co][p] * col[kk][p], via the transposed column buffer.
      std::vector<Real> col_t(K * P);
      for (std::size_t kk = 0; kk < K; ++kk) {
        const Real* src = col->data() + kk * P;
        for (std::size_t p = 0; p < P; ++p) col_t[p * K + kk] = src[p];
      }
      std::span<Real> dw = weight.mutable_grad();
      for (int co = 0; co < g.c_out; ++co) {
        Real* dst = dw.data() + static_cast<std::size_t>(co) * K;
        const Real* grow = dout.data() + static_cast<std::size_t>(co) * P;
        for (std::size_t p = 0; p < P; ++p) {
          const Real gv = grow[p];
          if (gv != Real(0)) axpy(gv, col_t.data() + p * K, dst, K);
        }
      }
    }
    if (input.requires_grad()) {
      std::vector<Real> dcol(K * P, Real(0));
      const Real* w = weight.values().data();
      for (int co = 0; co < g.c_out; ++co) {
        const Real* grow = dout.data() + static_cast<std::size_t>(co) * P;
        const Real* wrow = w + static_cast<std::size_t>(co) * K;
        for (std::size_t kk = 0; kk < K; ++kk) {
          const Real wv = wrow[kk];
          if (wv != Real(0)) axpy(wv, grow, dcol.data() + kk * P, P);
        }
      }
      col2im_add(g, dcol.data(), input.mutable_grad().data());
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// nn_upsample

template <typename Real>
Tensor<Real> nn_upsample(Tape<Real>& tape, const Tensor<Real>& input, int factor) {
  if (factor < 2 || (factor & (factor - 1)) != 0) {
    throw std::invalid_argument("nn_upsample: factor must be a power of two >= 2, got " +
                                std::to_string(factor));
  }
  if (input.shape().size() != 3) {
    throw ShapeError("nn_upsample: input must be (C,H,W), got " + to_string(input.shape()));
  }
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int ho = h * factor, wo = w * factor;
  std::vector<Real> out(static_cast<std::size_t>(c) * ho * wo);
  const Real* in = input.values().data();
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < ho; ++y) {
      const Real* src = in + (static_cast<std::size_t>(ch) * h + y / factor) * w;
      Real* dst = out.data() + (static_cast<std::size_t>(ch) * ho + y) * wo;
      for (int x = 0; x < wo; ++x) dst[x] = src[x / factor];
    }
  }
  const bool track = tape.tracks({&input});
  Tensor<Real> result = Tensor<Real>::result({c, ho, wo}, std::move(out), track);
  if (!track) return result;
  tape.record("nn_upsample", result, [input, result, c, h, w, factor]() mutable {
    const int ho = h * factor, wo = w * factor;
    std::span<const Real> dout = result.grad();
    std::span<Real> din = input.mutable_grad();
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < ho; ++y) {
        const Real* src = dout.data() + (static_cast<std::size_t>(ch) * ho + y) * wo;
        Real* dst = din.data() + (static_cast<std::size_t>(ch) * h + y / factor) * w;
        for (int x = 0; x < wo; ++x) dst[x / factor] += src[x];
      }
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// heaviside with arctan surrogate

template <typename Real>
Tensor<Real> heaviside_surrogate(Tape<Real>& tape, const Tensor<Real>& preact, double threshold,
                                 const SurrogateConfig& cfg) {
  if (!(cfg.alpha > 0.0)) throw std::invalid_argument("surrogate alpha must be > 0");
  std::span<const Real> x = preact.values();
  std::vector<Real> out(x.size());
  const Real th = static_cast<Real>(threshold);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] >= th ? Real(1) : Real(0);
  const bool track = tape.tracks({&preact});
  Tensor<Real> result = Tensor<Real>::result(preact.shape(), std::move(out), track);
  if (!track) return result;
  tape.record("heaviside_surrogate", result, [preact, result, threshold, cfg]() mutable {
    std::span<const Real> x = preact.values();
    std::span<const Real> dout = result.grad();
    std::span<Real> din = preact.mutable_grad();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = arctan_surrogate_grad(static_cast<double>(x[i]) - threshold, cfg.alpha);
      din[i] += dout[i] * static_cast<Real>(d);
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// elementwise

template <typename Real>
Tensor<Real> add(Tape<Real>& tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape(a, b, "add");
  std::span<const Real> av = a.values(), bv = b.values();
  std::vector<Real> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const bool track = tape.tracks({&a, &b});
  Tensor<Real> result = Tensor<Real>::result(a.shape(), std::move(out), track);
  if (!track) return result;
  tape.record("add", result, [a, b, result]() mutable {
    accumulate(a, result.grad());
    accumulate(b, result.grad());
  });
  return result;
}

template <typename Real>
Tensor<Real> sub(Tape<Real>& tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape(a, b, "sub");
  std::span<const Real> av = a.values(), bv = b.values();
  std::vector<Real> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const bool track = tape.tracks({&a, &b});
  Tensor<Real> result = Tensor<Real>::result(a.shape(), std::move(out), track);
  if (!track) return result;
  tape.record("sub", result, [a, b, result]() mutable {
    accumulate(a, result.grad());
    if (b.requires_grad()) {
      std::span<const Real> g = result.grad();
      std::span<Real> db = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> mul(Tape<Real>& tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape(a, b, "mul");
  std::span<const Real> av = a.values(), bv = b.values();
  std::vector<Real> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const bool track = tape.tracks({&a, &b});
  Tensor<Real> result = Tensor<Real>::result(a.shape(), std::move(out), track);
  if (!track) return result;
  tape.record("mul", result, [a, b, result]() mutable {
    std::span<const Real> g = result.grad();
    if (a.requires_grad()) {
      std::span<Real> da = a.mutable_grad();
      std::span<const Real> bv = b.values();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      std::span<Real> db = b.mutable_grad();
      std::span<const Real> av = a.values();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> scale(Tape<Real>& tape, const Tensor<Real>& a, double factor) {
  std::span<const Real> av = a.values();
  const Real f = static_cast<Real>(factor);
  std::vector<Real> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * f;
  const bool track = tape.tracks({&a});
  Tensor<Real> result = Tensor<Real>::result(a.shape(), std::move(out), track);
  if (!track) return result;
  tape.record("scale", result, [a, result, f]() mutable {
    std::span<const Real> g = result.grad();
    std::span<Real> da = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * f;
  });
  return result;
}

template <typename Real>
Tensor<Real> divide(Tape<Real>& tape, const Tensor<Real>& a, double divisor) {
  if (divisor == 0.0) throw std::invalid_argument("divide: zero divisor");
  std::span<const Real> av = a.values();
  const Real d = static_cast<Real>(divisor);
  std::vector<Real> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / d;
  const bool track = tape.tracks({&a});
  Tensor<Real> result = Tensor<Real>::result(a.shape(), std::move(out), track);
  if (!track) return result;
  tape.record("divide", result, [a, result, d]() mutable {
    std::span<const Real> g = result.grad();
    std::span<Real> da = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / d;
  });
  return result;
}

template <typename Real>
Tensor<Real> square(Tape<Real>& tape, const Tensor<Real>& a) {
  std::span<const Real> av = a.values();
  std::vector<Real> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * av[i];
  const bool track = tape.tracks({&a});
  Tensor<Real> result = Tensor<Real>::result(a.shape(), std::move(out), track);
  if (!track) return result;
  tape.record("square", result, [a, result]() mutable {
    std::span<const Real> g = result.grad();
    std::span<const Real> av = a.values();
    std::span<Real> da = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += Real(2) * av[i] * g[i];
  });
  return result;
}

template <typename Real>
Tensor<Real> abs_elem(Tape<Real>& tape, const Tensor<Real>& a) {
  std::span<const Real> av = a.values();
  std::vector<Real> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(av[i]);
  const bool track = tape.tracks({&a});
  Tensor<Real> result = Tensor<Real>::result(a.shape(), std::move(out), track);
  if (!track) return result;
  tape.record("abs", result, [a, result]() mutable {
    std::span<const Real> g = result.grad();
    std::span<const Real> av = a.values();
    std::span<Real> da = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (av[i] > Real(0)) {
        da[i] += g[i];
      } else if (av[i] < Real(0)) {
        da[i] -= g[i];
      }
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// reductions and selection

template <typename Real>
Tensor<Real> sum_reduce(Tape<Real>& tape, const Tensor<Real>& a) {
  double acc = 0.0;
  for (Real v : a.values()) acc += static_cast<double>(v);
  const bool track = tape.tracks({&a});
  Tensor<Real> result = Tensor<Real>::result({1}, {static_cast<Real>(acc)}, track);
  if (!track) return result;
  tape.record("sum_reduce", result, [a, result]() mutable {
    const Real g = result.grad()[0];
    for (Real& d : a.mutable_grad()) d += g;
  });
  return result;
}

template <typename Real>
Tensor<Real> mean_reduce(Tape<Real>& tape, const Tensor<Real>& a) {
  if (a.size() == 0) throw ShapeError("mean_reduce: empty tensor");
  double acc = 0.0;
  for (Real v : a.values()) acc += static_cast<double>(v);
  const double n = static_cast<double>(a.size());
  const bool track = tape.tracks({&a});
  Tensor<Real> result = Tensor<Real>::result({1}, {static_cast<Real>(acc / n)}, track);
  if (!track) return result;
  tape.record("mean_reduce", result, [a, result, n]() mutable {
    const Real g = static_cast<Real>(static_cast<double>(result.grad()[0]) / n);
    for (Real& d : a.mutable_grad()) d += g;
  });
  return result;
}

template <typename Real>
Tensor<Real> gather(Tape<Real>& tape, const Tensor<Real>& a, std::span<const std::size_t> indices) {
  std::span<const Real> av = a.values();
  std::vector<Real> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= av.size()) throw ShapeError("gather: index out of range");
    out[i] = av[indices[i]];
  }
  const bool track = tape.tracks({&a});
  Tensor<Real> result =
      Tensor<Real>::result({static_cast<int>(indices.size())}, std::move(out), track);
  if (!track) return result;
  auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
  tape.record("gather", result, [a, result, idx]() mutable {
    std::span<const Real> g = result.grad();
    std::span<Real> da = a.mutable_grad();
    for (std::size_t i = 0; i < idx->size(); ++i) da[(*idx)[i]] += g[i];
  });
  return result;
}

template <typename Real>
Tensor<Real> masked_select(Tape<Real>& tape, const Tensor<Real>& a, std::span<const std::uint8_t> mask) {
  if (mask.size() != a.size()) {
    throw ShapeError("masked_select: mask has " + std::to_string(mask.size()) +
                     " entries, tensor has shape " + to_string(a.shape()));
  }
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) indices.push_back(i);
  }
  return gather(tape, a, std::span<const std::size_t>(indices));
}

// ---------------------------------------------------------------------------
// grad_check

template <typename Real>
GradCheckResult grad_check(const ScalarFn<Real>& f, const Tensor<Real>& x, double eps) {
  Tensor<Real> probe = Tensor<Real>::parameter(x.shape(), std::vector<Real>(x.values().begin(), x.values().end()));
  Tape<Real> tape;
  Tensor<Real> loss = f(tape, probe);
  tape.backward(loss);
  std::vector<Real> analytic(probe.size(), Real(0));
  if (!probe.grad().empty()) analytic.assign(probe.grad().begin(), probe.grad().end());

  Tape<Real> off(false);
  std::vector<double> numeric(probe.size());
  std::span<Real> v = probe.mutable_values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Real saved = v[i];
    v[i] = static_cast<Real>(saved + eps);
    const double plus = static_cast<double>(f(off, probe).item());
    v[i] = static_cast<Real>(saved - eps);
    const double minus = static_cast<double>(f(off, probe).item());
    v[i] = saved;
    off.clear();
    numeric[i] = (plus - minus) / (2.0 * eps);
  }

  GradCheckResult r;
  double scale = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    scale = std::max({scale, std::abs(numeric[i]), std::abs(static_cast<double>(analytic[i]))});
    const double err = std::abs(numeric[i] - static_cast<double>(analytic[i]));
    if (err > r.max_abs_error) {
      r.max_abs_error = err;
      r.worst_index = i;
    }
  }
  r.max_rel_error = scale > 0.0 ? r.max_abs_error / scale : 0.0;
  return r;
}

// ---------------------------------------------------------------------------

#define STEREOSPIKE_INSTANTIATE(R)                                                                \
  template class Tensor<R>;                                                                       \
  template class Tape<R>;                                                                         \
  template Tensor<R> conv2d(Tape<R>&, const Tensor<R>&, const Tensor<R>&, int, int,              \
                            std::string_view);                                                    \
  template Tensor<R> nn_upsample(Tape<R>&, const Tensor<R>&, int);                                \
  template Tensor<R> heaviside_surrogate(Tape<R>&, const Tensor<R>&, double,                      \
                                         const SurrogateConfig&);                                 \
  template Tensor<R> add(Tape<R>&, const Tensor<R>&, const Tensor<R>&);                           \
  template Tensor<R> sub(Tape<R>&, const Tensor<R>&, const Tensor<R>&);                           \
  template Tensor<R> mul(Tape<R>&, const Tensor<R>&, const Tensor<R>&);                           \
  template Tensor<R> scale(Tape<R>&, const Tensor<R>&, double);                                   \
  template Tensor<R> divide(Tape<R>&, const Tensor<R>&, double);                                  \
  template Tensor<R> square(Tape<R>&, const Tensor<R>&);                                          \
  template Tensor<R> abs_elem(Tape<R>&, const Tensor<R>&);                                        \
  template Tensor<R> sum_reduce(Tape<R>&, const Tensor<R>&);                                      \
  template Tensor<R> mean_reduce(Tape<R>&, const Tensor<R>&);                                     \
  template Tensor<R> gather(Tape<R>&, const Tensor<R>&, std::span<const std::size_t>);            \
  template Tensor<R> masked_select(Tape<R>&, const Tensor<R>&, std::span<const std::uint8_t>);    \
  template GradCheckResult grad_check(const ScalarFn<R>&, const Tensor<R>&, double);

STEREOSPIKE_INSTANTIATE(float)
STEREOSPIKE_INSTANTIATE(double)

#undef STEREOSPIKE_INSTANTIATE

}  // namespace stereospike::ad
