#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "hnmt/error.hpp"
#include "hnmt/rng.hpp"

namespace hnmt {

using Shape = std::vector<std::int64_t>;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;     // sized like value iff tracked, else empty
  std::vector<double> adjoint;  // per-backward-pass scratch
  std::uint64_t adjoint_epoch = 0;
  bool tracked = false;
  std::int64_t tape_id = -1;  // index of the producing tape node; -1 for leaves
};

}  // namespace detail

// Dense row-major tensor of doubles. Copies share storage; ops never mutate
// their inputs, so sharing is safe. Gradients live alongside the values and
// are written by Tape::backward-style accumulation.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor scalar(double v) { return from({1, 1}, {v}); }
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
  std::int64_t size() const;
  std::int64_t rows() const;  // rank-2 only
  std::int64_t cols() const;

  // Spans point into the shared storage; binding them to a temporary Tensor
  // would dangle, so rvalue access is disabled.
  std::span<const double> value() const&;
  std::span<const double> value() const&& = delete;
  std::span<double> value_mut() &;
  std::span<double> value_mut() && = delete;
  std::span<const double> grad() const&;  // empty when untracked
  std::span<const double> grad() const&& = delete;
  std::span<double> grad_mut() &;
  std::span<double> grad_mut() && = delete;

  double item() const;  // scalar tensors only
  double at(std::int64_t i, std::int64_t j) const;

  bool tracked() const;
  std::int64_t tape_id() const;
  // Marks a leaf as a differentiable parameter and allocates grad storage.
  Tensor& require_grad();
  void zero_grad();
  Tensor clone() const;  // deep copy of values, untracked leaf

  bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }

  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend class Tape;
};

// Reverse-mode tape. Ops executed inside a TapeScope append one node each;
// backward() replays nodes in exact reverse creation order.
class Tape {
 public:
  struct Node {
    std::string_view op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backprop;  // propagates output adjoint into inputs
  };

  std::int64_t size() const { return static_cast<std::int64_t>(nodes_.size()); }
  const Node& node(std::int64_t i) const { return nodes_[static_cast<std::size_t>(i)]; }
  void clear() { nodes_.clear(); }

  // Appends a node and stamps the output with its id. Library-internal.
  Tensor record(std::string_view op, std::vector<Tensor> inputs, Tensor output,
                std::function<void()> backprop);

 private:
  std::vector<Node> nodes_;
};

// RAII activation of a tape on the current thread. Ops record onto the active
// tape when at least one input is tracked; with no active tape they are pure.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// ---- ops ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [m×k]·[k×n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m×k]·[n×k]ᵀ → [m×n]
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_n(const std::vector<Tensor>& terms);  // elementwise sum of equal shapes
Tensor mul(const Tensor& a, const Tensor& b);    // Hadamard
Tensor scale(const Tensor& a, double c);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, std::int64_t start, std::int64_t len);
Tensor concat_rows(const std::vector<Tensor>& blocks);
Tensor slice_rows(const Tensor& x, std::int64_t start, std::int64_t len);
inline Tensor row(const Tensor& x, std::int64_t i) { return slice_rows(x, i, 1); }

// Row softmax with per-row max subtraction. Throws NumericError on NaN input.
Tensor softmax_rows(const Tensor& x);
// Softmax over the unmasked entries of a single row vector; masked outputs are
// exactly zero. Throws ContractError when everything is masked.
Tensor softmax_masked(const Tensor& scores, const std::vector<std::uint8_t>& mask);

Tensor sum_all(const Tensor& x);  // [1×1]
// −log softmax(logits)[target] for a [1×V] row, fused for stability.
Tensor cross_entropy_row(const Tensor& logits, std::int64_t target);
// Inverted dropout: scales kept entries by 1/(1−p) during training so that
// evaluation is the identity.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

// Accumulates ∂loss/∂t into the grad of every tracked tensor on the tape.
// Running it twice without zeroing grads doubles them.
void backward(Tape& tape, const Tensor& loss);

// Max over coordinates of |analytic − central difference| / max(1, |a|, |n|).
// Non-scalar outputs of f are reduced by summation.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps);

}  // namespace hnmt
