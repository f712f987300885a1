#pragma once

// Minimal reverse-mode automatic differentiation over dense tensors.
//
// A Tensor is a shared handle to a value buffer plus a lazily allocated
// gradient buffer. Operations take a Tape and record a backward rule on it
// when at least one operand requires a gradient. Tape::backward sweeps the
// recorded nodes in reverse order once; there is no time unrolling.
//
// Kernels run single-threaded with a fixed loop order, so results are
// bitwise reproducible for a given build. Full reductions (sum/mean)
// accumulate in double precision.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stereospike::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Real>
class Tape;

template <typename Real>
class Tensor {
 public:
  Tensor() = default;

  // Leaf that never receives gradients.
  static Tensor constant(Shape shape, std::vector<Real> values);
  // Leaf that accumulates gradients (trainable weight).
  static Tensor parameter(Shape shape, std::vector<Real> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(Real value);
  // Non-leaf produced by an operation.
  static Tensor result(Shape shape, std::vector<Real> values, bool requires_grad);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const;
  int dim(std::size_t axis) const;
  std::size_t size() const;
  bool requires_grad() const;
  bool is_leaf() const;

  std::span<const Real> values() const;
  std::span<Real> mutable_values();
  Real item() const;

  bool has_grad() const;
  std::span<const Real> grad() const;
  // Allocates a zero gradient on first use.
  std::span<Real> mutable_grad() const;
  void zero_grad();
  void release_grad();

  // Constant copy of the current values, disconnected from any tape.
  Tensor detach() const;

  bool same_as(const Tensor& other) const { return storage_ == other.storage_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<Real> values;
    std::vector<Real> grad;
    bool requires_grad = false;
    bool leaf = true;
  };

  explicit Tensor(std::shared_ptr<Storage> storage) : storage_(std::move(storage)) {}
  Storage& storage() const;

  std::shared_ptr<Storage> storage_;
};

template <typename Real>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  // True when the tape records and at least one operand needs a gradient.
  bool tracks(std::initializer_list<const Tensor<Real>*> operands) const;

  // `backward_rule` reads the output gradient and accumulates into inputs.
  void record(std::string op, Tensor<Real> output, std::function<void()> backward_rule);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded rule once, newest
  // first. Leaf gradients accumulate across calls; gradients of recorded
  // intermediates are reset at the start of each call.
  void backward(const Tensor<Real>& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t index) const { return nodes_.at(index).op; }

 private:
  struct Node {
    std::string op;
    Tensor<Real> output;
    std::function<void()> backward_rule;
  };
  std::vector<Node> nodes_;
  bool recording_;
};

struct SurrogateConfig {
  double alpha = 2.0;
};

// d spike / d preact for the arctan surrogate, with x = preact - threshold.
double arctan_surrogate_grad(double x, double alpha);

// Cross-correlation without bias. input (C_in,H,W), weight (C_out,C_in,k,k).
template <typename Real>
Tensor<Real> conv2d(Tape<Real>& tape, const Tensor<Real>& input, const Tensor<Real>& weight,
                    int stride, int padding, std::string_view name = "conv2d");

// Replicates each cell into a factor x factor block.
template <typename Real>
Tensor<Real> nn_upsample(Tape<Real>& tape, const Tensor<Real>& input, int factor);

// Binary step forward (spike where preact >= threshold), arctan surrogate backward.
template <typename Real>
Tensor<Real> heaviside_surrogate(Tape<Real>& tape, const Tensor<Real>& preact, double threshold,
                                 const SurrogateConfig& cfg);

template <typename Real>
Tensor<Real> add(Tape<Real>& tape, const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> sub(Tape<Real>& tape, const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> mul(Tape<Real>& tape, const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> scale(Tape<Real>& tape, const Tensor<Real>& a, double factor);
// Elementwise a / divisor, rounded once in Real.
template <typename Real>
Tensor<Real> divide(Tape<Real>& tape, const Tensor<Real>& a, double divisor);
template <typename Real>
Tensor<Real> square(Tape<Real>& tape, const Tensor<Real>& a);
// Subgradient 0 at the kink.
template <typename Real>
Tensor<Real> abs_elem(Tape<Real>& tape, const Tensor<Real>& a);
template <typename Real>
Tensor<Real> sum_reduce(Tape<Real>& tape, const Tensor<Real>& a);
template <typename Real>
Tensor<Real> mean_reduce(Tape<Real>& tape, const Tensor<Real>& a);
// Flattened selection of entries where mask != 0, in row-major order.
template <typename Real>
Tensor<Real> masked_select(Tape<Real>& tape, const Tensor<Real>& a, std::span<const std::uint8_t> mask);
// out[i] = a.flat[indices[i]]; backward scatter-adds.
template <typename Real>
Tensor<Real> gather(Tape<Real>& tape, const Tensor<Real>& a, std::span<const std::size_t> indices);

template <typename Real>
using ScalarFn = std::function<Tensor<Real>(Tape<Real>&, const Tensor<Real>&)>;

struct GradCheckResult {
  // max_i |analytic_i - numeric_i| / max(||analytic||_inf, ||numeric||_inf)
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
};

// Central finite differences over every coordinate of `x`. `f` must map x to
// a scalar and be smooth around x.
template <typename Real>
GradCheckResult grad_check(const ScalarFn<Real>& f, const Tensor<Real>& x, double eps);

using DiffTensor = Tensor<float>;
using DiffTape = Tape<float>;

}  // namespace stereospike::ad
