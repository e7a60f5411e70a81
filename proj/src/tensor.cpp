#include "hnmt/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>

namespace hnmt {

namespace {

thread_local Tape* t_active_tape = nullptr;
std::atomic<std::uint64_t> g_backward_epoch{1};

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

[[noreturn]] void dim_error(std::string_view op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                       shape_str(b));
}

void check_rank2(std::string_view op, const Tensor& t) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " +
                         shape_str(t.shape()));
  }
}

// Returns this backward pass's adjoint buffer, zeroing it lazily.
std::vector<double>& adjoint_of(const Tensor& t, std::uint64_t epoch) {
  auto* im = t.impl();
  if (im->adjoint_epoch != epoch) {
    im->adjoint.assign(im->value.size(), 0.0);
    im->adjoint_epoch = epoch;
  }
  return im->adjoint;
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (t_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->tracked()) return true;
  }
  return false;
}

// c[i,j] += sum_p a[i,p] * b[p,j]
void mm_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
            std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[i,j] += sum_p a[i,p] * b[j,p]
void mm_nt_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c[i,j] += sum_p a[p,i] * b[p,j]
void mm_tn_acc(const double* a, const double* b, double* c, std::int64_t rows, std::int64_t m,
               std::int64_t n) {
  for (std::int64_t p = 0; p < rows; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const double av = ap[i];
      double* ci = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

Tensor make_result(Shape shape, std::vector<double> data) {
  return Tensor::from(std::move(shape), std::move(data));
}

// Marks a freshly produced op output as tracked (grad allocated) when the op
// is being recorded.
void track_output(Tensor& out) {
  out.require_grad();
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
  return from(std::move(shape), {});
}

Tensor Tensor::full(Shape shape, double v) {
  auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), v));
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  auto impl = std::make_shared<detail::TensorImpl>();
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  if (data.empty()) data.assign(n, 0.0);
  if (data.size() != n) {
    throw DimensionError("Tensor::from: " + std::to_string(data.size()) +
                         " values for shape " + shape_str(shape));
  }
  impl->shape = std::move(shape);
  impl->value = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  std::vector<double> data(n);
  for (auto& v : data) v = rng.uniform(lo, hi);
  return from(std::move(shape), std::move(data));
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::int64_t Tensor::size() const { return static_cast<std::int64_t>(impl_->value.size()); }

std::int64_t Tensor::rows() const {
  check_rank2("rows", *this);
  return impl_->shape[0];
}

std::int64_t Tensor::cols() const {
  check_rank2("cols", *this);
  return impl_->shape[1];
}

std::span<const double> Tensor::value() const& { return impl_->value; }
std::span<double> Tensor::value_mut() & { return impl_->value; }
std::span<const double> Tensor::grad() const& { return impl_->grad; }
std::span<double> Tensor::grad_mut() & { return impl_->grad; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item: tensor is not scalar " + shape_str(shape()));
  return impl_->value[0];
}

double Tensor::at(std::int64_t i, std::int64_t j) const {
  check_rank2("at", *this);
  return impl_->value[static_cast<std::size_t>(i * impl_->shape[1] + j)];
}

bool Tensor::tracked() const { return impl_ && impl_->tracked; }
std::int64_t Tensor::tape_id() const { return impl_->tape_id; }

Tensor& Tensor::require_grad() {
  impl_->tracked = true;
  if (impl_->grad.size() != impl_->value.size()) impl_->grad.assign(impl_->value.size(), 0.0);
  return *this;
}

void Tensor::zero_grad() {
  if (tracked()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  return Tensor::from(impl_->shape, impl_->value);
}

// ---- Tape -------------------------------------------------------------------

Tensor Tape::record(std::string_view op, std::vector<Tensor> inputs, Tensor output,
                    std::function<void()> backprop) {
  output.impl()->tape_id = static_cast<std::int64_t>(nodes_.size());
  track_output(output);
  nodes_.push_back(Node{op, std::move(inputs), output, std::move(backprop)});
  return output;
}

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }
TapeScope::~TapeScope() { t_active_tape = previous_; }

Tape* active_tape() { return t_active_tape; }

// ---- op implementations -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank2("matmul", a);
  check_rank2("matmul", b);
  if (a.cols() != b.rows()) dim_error("matmul", a.shape(), b.shape());
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  mm_acc(a.value().data(), b.value().data(), out.data(), m, k, n);
  Tensor c = make_result({m, n}, std::move(out));
  if (!should_record({&a, &b})) return c;
  return active_tape()->record("matmul", {a, b}, c, [a, b, c, m, k, n]() {
    const std::uint64_t e = c.impl()->adjoint_epoch;
    const auto& g = c.impl()->adjoint;
    if (a.tracked()) mm_nt_acc(g.data(), b.value().data(), adjoint_of(a, e).data(), m, n, k);
    if (b.tracked()) mm_tn_acc(a.value().data(), g.data(), adjoint_of(b, e).data(), m, k, n);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_rank2("matmul_nt", a);
  check_rank2("matmul_nt", b);
  if (a.cols() != b.cols()) dim_error("matmul_nt", a.shape(), b.shape());
  const auto m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  mm_nt_acc(a.value().data(), b.value().data(), out.data(), m, k, n);
  Tensor c = make_result({m, n}, std::move(out));
  if (!should_record({&a, &b})) return c;
  return active_tape()->record("matmul_nt", {a, b}, c, [a, b, c, m, k, n]() {
    const std::uint64_t e = c.impl()->adjoint_epoch;
    const auto& g = c.impl()->adjoint;
    if (a.tracked()) mm_acc(g.data(), b.value().data(), adjoint_of(a, e).data(), m, n, k);
    if (b.tracked()) mm_tn_acc(g.data(), a.value().data(), adjoint_of(b, e).data(), m, n, k);
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return add_n({a, b}); }

Tensor add_n(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw ContractError("add_n: no terms");
  const Shape& shape = terms.front().shape();
  for (const auto& t : terms) {
    if (t.shape() != shape) dim_error("add", shape, t.shape());
  }
  std::vector<double> out(terms.front().value().begin(), terms.front().value().end());
  for (std::size_t i = 1; i < terms.size(); ++i) {
    auto v = terms[i].value();
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += v[j];
  }
  Tensor c = make_result(shape, std::move(out));
  bool rec = t_active_tape != nullptr &&
             std::any_of(terms.begin(), terms.end(), [](const Tensor& t) { return t.tracked(); });
  if (!rec) return c;
  auto inputs = terms;
  return active_tape()->record("add", std::move(inputs), c, [terms, c]() {
    const std::uint64_t e = c.impl()->adjoint_epoch;
    const auto& g = c.impl()->adjoint;
    for (const auto& t : terms) {
      if (!t.tracked()) continue;
      auto& ga = adjoint_of(t, e);
      for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) dim_error("mul", a.shape(), b.shape());
  auto va = a.value();
  auto vb = b.value();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  Tensor c = make_result(a.shape(), std::move(out));
  if (!should_record({&a, &b})) return c;
  return active_tape()->record("mul", {a, b}, c, [a, b, c]() {
    const std::uint64_t e = c.impl()->adjoint_epoch;
    const auto& g = c.impl()->adjoint;
    if (a.tracked()) {
      auto& ga = adjoint_of(a, e);
      auto vb = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (b.tracked()) {
      auto& gb = adjoint_of(b, e);
      auto va = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Tensor scale(const Tensor& a, double cst) {
  auto va = a.value();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * cst;
  Tensor c = make_result(a.shape(), std::move(out));
  if (!should_record({&a})) return c;
  return active_tape()->record("scale", {a}, c, [a, c, cst]() {
    const std::uint64_t e = c.impl()->adjoint_epoch;
    const auto& g = c.impl()->adjoint;
    auto& ga = adjoint_of(a, e);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * cst;
  });
}

Tensor tanh(const Tensor& x) {
  auto vx = x.value();
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(vx[i]);
  Tensor y = make_result(x.shape(), std::move(out));
  if (!should_record({&x})) return y;
  return active_tape()->record("tanh", {x}, y, [x, y]() {
    const std::uint64_t e = y.impl()->adjoint_epoch;
    const auto& g = y.impl()->adjoint;
    auto vy = y.value();
    auto& gx = adjoint_of(x, e);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - vy[i] * vy[i]);
  });
}

Tensor sigmoid(const Tensor& x) {
  auto vx = x.value();
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-vx[i]));
  Tensor y = make_result(x.shape(), std::move(out));
  if (!should_record({&x})) return y;
  return active_tape()->record("sigmoid", {x}, y, [x, y]() {
    const std::uint64_t e = y.impl()->adjoint_epoch;
    const auto& g = y.impl()->adjoint;
    auto vy = y.value();
    auto& gx = adjoint_of(x, e);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * vy[i] * (1.0 - vy[i]);
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check_rank2("concat_cols", a);
  check_rank2("concat_cols", b);
  if (a.rows() != b.rows()) dim_error("concat_cols", a.shape(), b.shape());
  const auto m = a.rows(), ca = a.cols(), cb = b.cols();
  std::vector<double> out(static_cast<std::size_t>(m * (ca + cb)));
  for (std::int64_t i = 0; i < m; ++i) {
    std::copy_n(a.value().data() + i * ca, ca, out.data() + i * (ca + cb));
    std::copy_n(b.value().data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
  }
  Tensor c = make_result({m, ca + cb}, std::move(out));
  if (!should_record({&a, &b})) return c;
  return active_tape()->record("concat_cols", {a, b}, c, [a, b, c, m, ca, cb]() {
    const std::uint64_t e = c.impl()->adjoint_epoch;
    const auto& g = c.impl()->adjoint;
    for (std::int64_t i = 0; i < m; ++i) {
      if (a.tracked()) {
        auto& ga = adjoint_of(a, e);
        for (std::int64_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
      }
      if (b.tracked()) {
        auto& gb = adjoint_of(b, e);
        for (std::int64_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * (ca + cb) + ca + j];
      }
    }
  });
}

Tensor slice_cols(const Tensor& x, std::int64_t start, std::int64_t len) {
  check_rank2("slice_cols", x);
  if (start < 0 || len < 1 || start + len > x.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of " + std::to_string(x.cols()) +
                         " columns");
  }
  const auto m = x.rows(), n = x.cols();
  std::vector<double> out(static_cast<std::size_t>(m * len));
  for (std::int64_t i = 0; i < m; ++i) {
    std::copy_n(x.value().data() + i * n + start, len, out.data() + i * len);
  }
  Tensor y = make_result({m, len}, std::move(out));
  if (!should_record({&x})) return y;
  return active_tape()->record("slice_cols", {x}, y, [x, y, start, len, m, n]() {
    const std::uint64_t e = y.impl()->adjoint_epoch;
    const auto& g = y.impl()->adjoint;
    auto& gx = adjoint_of(x, e);
    for (std::int64_t i = 0; i < m; ++i) {
      for (std::int64_t j = 0; j < len; ++j) gx[i * n + start + j] += g[i * len + j];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& blocks) {
  if (blocks.empty()) throw ContractError("concat_rows: no blocks");
  const auto n = blocks.front().cols();
  std::int64_t m = 0;
  for (const auto& b : blocks) {
    check_rank2("concat_rows", b);
    if (b.cols() != n) dim_error("concat_rows", blocks.front().shape(), b.shape());
    m += b.rows();
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m * n));
  for (const auto& b : blocks) out.insert(out.end(), b.value().begin(), b.value().end());
  Tensor c = make_result({m, n}, std::move(out));
  bool rec = t_active_tape != nullptr &&
             std::any_of(blocks.begin(), blocks.end(), [](const Tensor& t) { return t.tracked(); });
  if (!rec) return c;
  auto inputs = blocks;
  return active_tape()->record("concat_rows", std::move(inputs), c, [blocks, c]() {
    const std::uint64_t e = c.impl()->adjoint_epoch;
    const auto& g = c.impl()->adjoint;
    std::size_t offset = 0;
    for (const auto& b : blocks) {
      const std::size_t count = b.value().size();
      if (b.tracked()) {
        auto& gb = adjoint_of(b, e);
        for (std::size_t i = 0; i < count; ++i) gb[i] += g[offset + i];
      }
      offset += count;
    }
  });
}

Tensor slice_rows(const Tensor& x, std::int64_t start, std::int64_t len) {
  check_rank2("slice_rows", x);
  if (start < 0 || len < 1 || start + len > x.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of " + std::to_string(x.rows()) +
                         " rows");
  }
  const auto n = x.cols();
  std::vector<double> out(x.value().begin() + start * n, x.value().begin() + (start + len) * n);
  Tensor y = make_result({len, n}, std::move(out));
  if (!should_record({&x})) return y;
  return active_tape()->record("slice_rows", {x}, y, [x, y, start, len, n]() {
    const std::uint64_t e = y.impl()->adjoint_epoch;
    const auto& g = y.impl()->adjoint;
    auto& gx = adjoint_of(x, e);
    for (std::int64_t i = 0; i < len; ++i) {
      for (std::int64_t j = 0; j < n; ++j) gx[(start + i) * n + j] += g[i * n + j];
    }
  });
}

namespace {

// Shared forward for softmax variants. Rows with no unmasked entry are the
// caller's problem; `mask` may be empty meaning everything unmasked.
std::vector<double> softmax_forward(const Tensor& x, const std::vector<std::uint8_t>& mask,
                                    std::string_view op) {
  const auto m = x.rows(), n = x.cols();
  auto vx = x.value();
  for (double v : vx) {
    if (std::isnan(v)) throw NumericError(std::string(op) + ": NaN input");
  }
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < n; ++j) {
      if (!mask.empty() && !mask[static_cast<std::size_t>(j)]) continue;
      mx = std::max(mx, vx[i * n + j]);
    }
    double z = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
      if (!mask.empty() && !mask[static_cast<std::size_t>(j)]) continue;
      const double ev = std::exp(vx[i * n + j] - mx);
      out[i * n + j] = ev;
      z += ev;
    }
    for (std::int64_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return out;
}

Tensor softmax_record(const Tensor& x, Tensor y, std::string_view op) {
  if (!should_record({&x})) return y;
  const auto m = x.rows(), n = x.cols();
  return active_tape()->record(op, {x}, y, [x, y, m, n]() {
    const std::uint64_t e = y.impl()->adjoint_epoch;
    const auto& g = y.impl()->adjoint;
    auto vy = y.value();
    auto& gx = adjoint_of(x, e);
    for (std::int64_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::int64_t j = 0; j < n; ++j) dot += g[i * n + j] * vy[i * n + j];
      for (std::int64_t j = 0; j < n; ++j) {
        gx[i * n + j] += vy[i * n + j] * (g[i * n + j] - dot);
      }
    }
  });
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  check_rank2("softmax_rows", x);
  Tensor y = make_result(x.shape(), softmax_forward(x, {}, "softmax_rows"));
  return softmax_record(x, y, "softmax_rows");
}

Tensor softmax_masked(const Tensor& scores, const std::vector<std::uint8_t>& mask) {
  check_rank2("softmax_masked", scores);
  if (scores.rows() != 1) throw DimensionError("softmax_masked: expected a [1×n] row");
  if (static_cast<std::int64_t>(mask.size()) != scores.cols()) {
    throw DimensionError("softmax_masked: mask length " + std::to_string(mask.size()) +
                         " vs " + std::to_string(scores.cols()) + " scores");
  }
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; })) {
    throw ContractError("softmax_masked: all positions masked");
  }
  Tensor y = make_result(scores.shape(), softmax_forward(scores, mask, "softmax_masked"));
  // Masked outputs are exactly zero, so the unmasked softmax backward rule is
  // already exact for them.
  return softmax_record(scores, y, "softmax_masked");
}

Tensor sum_all(const Tensor& x) {
  auto vx = x.value();
  double s = std::accumulate(vx.begin(), vx.end(), 0.0);
  Tensor y = Tensor::scalar(s);
  if (!should_record({&x})) return y;
  return active_tape()->record("sum_all", {x}, y, [x, y]() {
    const std::uint64_t e = y.impl()->adjoint_epoch;
    const double g = y.impl()->adjoint[0];
    auto& gx = adjoint_of(x, e);
    for (auto& v : gx) v += g;
  });
}

Tensor cross_entropy_row(const Tensor& logits, std::int64_t target) {
  check_rank2("cross_entropy_row", logits);
  if (logits.rows() != 1) throw DimensionError("cross_entropy_row: expected a [1×V] row");
  if (target < 0 || target >= logits.cols()) {
    throw ContractError("cross_entropy_row: target " + std::to_string(target) + " out of " +
                        std::to_string(logits.cols()));
  }
  auto v = logits.value();
  double mx = *std::max_element(v.begin(), v.end());
  if (std::isnan(mx)) throw NumericError("cross_entropy_row: NaN logits");
  double z = 0.0;
  for (double lv : v) z += std::exp(lv - mx);
  const double loss = std::log(z) + mx - v[static_cast<std::size_t>(target)];
  Tensor y = Tensor::scalar(loss);
  if (!should_record({&logits})) return y;
  // Save the probabilities for the backward rule.
  std::vector<double> probs(v.size());
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(v[i] - mx) / z;
  return active_tape()->record("cross_entropy_row", {logits}, y,
                               [logits, y, target, probs = std::move(probs)]() {
    const std::uint64_t e = y.impl()->adjoint_epoch;
    const double g = y.impl()->adjoint[0];
    auto& gx = adjoint_of(logits, e);
    for (std::size_t i = 0; i < probs.size(); ++i) gx[i] += g * probs[i];
    gx[static_cast<std::size_t>(target)] -= g;
  });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  auto vx = x.value();
  std::vector<double> mask(vx.size());
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < vx.size(); ++i) {
    mask[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
    out[i] = vx[i] * mask[i];
  }
  Tensor y = make_result(x.shape(), std::move(out));
  if (!should_record({&x})) return y;
  return active_tape()->record("dropout", {x}, y, [x, y, mask = std::move(mask)]() {
    const std::uint64_t e = y.impl()->adjoint_epoch;
    const auto& g = y.impl()->adjoint;
    auto& gx = adjoint_of(x, e);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

// ---- backward / grad_check --------------------------------------------------

void backward(Tape& tape, const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  if (!loss.tracked()) throw ContractError("backward: loss is not tracked");
  const std::int64_t id = loss.tape_id();
  if (id >= 0) {
    if (id >= tape.size() || !tape.node(id).output.same_impl(loss)) {
      throw ContractError("backward: loss was not produced on this tape");
    }
  }
  const std::uint64_t epoch = g_backward_epoch.fetch_add(1) + 1;
  adjoint_of(loss, epoch)[0] = 1.0;
  for (std::int64_t i = tape.size() - 1; i >= 0; --i) {
    const auto& node = tape.node(i);
    // Outputs never touched by this pass carry a stale epoch; their adjoints
    // are all-zero by construction, so propagating them is pure waste.
    if (node.output.impl()->adjoint_epoch != epoch) continue;
    node.backprop();
  }
  // Fold adjoints into grads for every tracked participant, each impl once.
  auto flush = [epoch](const Tensor& t) {
    auto* im = t.impl();
    if (!im->tracked || im->adjoint_epoch != epoch) return;
    // Reuse adjoint_epoch as the "already flushed" marker.
    im->adjoint_epoch = epoch + (1ULL << 63);
    for (std::size_t i = 0; i < im->grad.size(); ++i) im->grad[i] += im->adjoint[i];
  };
  flush(loss);
  for (std::int64_t i = 0; i < tape.size(); ++i) {
    const auto& node = tape.node(i);
    flush(node.output);
    for (const auto& in : node.inputs) flush(in);
  }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor probe = x.clone();
  probe.require_grad();
  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f(probe);
    Tensor loss = y.size() == 1 ? y : sum_all(y);
    backward(tape, loss);
    analytic.assign(probe.grad().begin(), probe.grad().end());
  }
  Tensor work = x.clone();
  auto eval = [&]() {
    Tensor y = f(work);
    auto v = y.value();
    return std::accumulate(v.begin(), v.end(), 0.0);
  };
  double worst = 0.0;
  auto data = work.value_mut();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + eps;
    const double up = eval();
    data[i] = saved - eps;
    const double down = eval();
    data[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace hnmt
