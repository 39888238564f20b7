#include "notescore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "notescore/errors.hpp"
#include "notescore/kernels.hpp"

namespace notescore {

namespace {

thread_local Tape* g_active_tape = nullptr;

void check_shape(Shape s) {
  if (s.rows == 0 || s.cols == 0) throw ShapeError("tensor extents must be positive, got " + s.str());
}

[[noreturn]] void mismatch(std::string_view op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

void require_same(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch(op, a, b);
}

using NodePtr = std::shared_ptr<detail::TensorNode>;

}  // namespace

std::string Shape::str() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::TensorNode>()) {
  check_shape(shape);
  if (values.size() != shape.size()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                     shape.str());
  }
  node_->shape = shape;
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(shape, std::vector<double>(shape.size(), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  return Tensor(shape, std::vector<double>(shape.size(), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1, 1}, {value}, requires_grad); }

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values), requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape().str());
  return node_->value[0];
}

bool Tensor::all_finite() const {
  return std::all_of(node_->value.begin(), node_->value.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::clone() const {
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = node_->shape;
  node->value = node_->value;
  node->requires_grad = node_->requires_grad;
  return Tensor(std::move(node));
}

Tensor make_result(Shape shape) {
  check_shape(shape);
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = shape;
  node->value.assign(shape.size(), 0.0);
  return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------

void Tape::record(std::string_view op, std::function<void()> backward) {
  entries_.push_back({op, std::move(backward)});
}

std::vector<std::string_view> Tape::ops() const {
  std::vector<std::string_view> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.push_back(e.op);
  return names;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? loss.shape().str() : std::string("undefined")));
  }
  if (!loss.requires_grad()) throw ContractError("backward() on a loss that was not recorded on a tape");
  auto& g = loss.node()->grad_buffer();
  g[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
  entries_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss) {
  if (g_active_tape == nullptr) throw ContractError("backward() called with no active tape");
  g_active_tape->backward(loss);
}

namespace detail {

bool record(std::string_view op, std::initializer_list<const Tensor*> inputs, Tensor& out,
            std::function<void()> fn) {
  if (g_active_tape == nullptr) return false;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
  if (!any) return false;
  out.set_requires_grad(true);
  g_active_tape->record(op, std::move(fn));
  return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) mismatch("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = make_result({m, n});
  const auto& ks = kernels::active();
  kernels::gemm_nn(ks, m, k, n, a.values().data(), b.values().data(), out.mutable_values().data(), false);
  NodePtr an = a.node(), bn = b.node(), on = out.node();
  detail::record("matmul", {&a, &b}, out, [an, bn, on, m, k, n] {
    if (on->grad.empty()) return;
    const auto& ks = kernels::active();
    if (an->requires_grad) {
      kernels::gemm_nt(ks, m, n, k, on->grad.data(), bn->value.data(), an->grad_buffer().data(), true);
    }
    if (bn->requires_grad) {
      kernels::gemm_tn(ks, m, k, n, an->value.data(), on->grad.data(), bn->grad_buffer().data(), true);
    }
  });
  return out;
}

namespace {

template <class Forward>
Tensor binary_same_shape(std::string_view op, const Tensor& a, const Tensor& b, Forward forward) {
  require_same(op, a, b);
  Tensor out = make_result(a.shape());
  forward(kernels::active(), a.values().data(), b.values().data(), out.mutable_values().data(), a.size());
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = binary_same_shape("add", a, b, [](const auto& ks, auto x, auto y, auto o, auto n) { ks.add(x, y, o, n); });
  NodePtr an = a.node(), bn = b.node(), on = out.node();
  detail::record("add", {&a, &b}, out, [an, bn, on] {
    if (on->grad.empty()) return;
    const auto& ks = kernels::active();
    const std::size_t n = on->grad.size();
    if (an->requires_grad) ks.axpy(1.0, on->grad.data(), an->grad_buffer().data(), n);
    if (bn->requires_grad) ks.axpy(1.0, on->grad.data(), bn->grad_buffer().data(), n);
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = binary_same_shape("sub", a, b, [](const auto& ks, auto x, auto y, auto o, auto n) { ks.sub(x, y, o, n); });
  NodePtr an = a.node(), bn = b.node(), on = out.node();
  detail::record("sub", {&a, &b}, out, [an, bn, on] {
    if (on->grad.empty()) return;
    const auto& ks = kernels::active();
    const std::size_t n = on->grad.size();
    if (an->requires_grad) ks.axpy(1.0, on->grad.data(), an->grad_buffer().data(), n);
    if (bn->requires_grad) ks.axpy(-1.0, on->grad.data(), bn->grad_buffer().data(), n);
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = binary_same_shape("mul", a, b, [](const auto& ks, auto x, auto y, auto o, auto n) { ks.mul(x, y, o, n); });
  NodePtr an = a.node(), bn = b.node(), on = out.node();
  detail::record("mul", {&a, &b}, out, [an, bn, on] {
    if (on->grad.empty()) return;
    const std::size_t n = on->grad.size();
    if (an->requires_grad) {
      auto& ga = an->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) ga[i] += on->grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gb[i] += on->grad[i] * an->value[i];
    }
  });
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out = make_result(x.shape());
  kernels::active().scale(factor, x.values().data(), out.mutable_values().data(), x.size());
  NodePtr xn = x.node(), on = out.node();
  detail::record("scale", {&x}, out, [xn, on, factor] {
    if (on->grad.empty()) return;
    kernels::active().axpy(factor, on->grad.data(), xn->grad_buffer().data(), on->grad.size());
  });
  return out;
}

Tensor transpose(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = make_result({c, r});
  auto src = x.values();
  auto dst = out.mutable_values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  NodePtr xn = x.node(), on = out.node();
  detail::record("transpose", {&x}, out, [xn, on, r, c] {
    if (on->grad.empty()) return;
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += on->grad[j * r + i];
  });
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) mismatch("concat_cols", parts.front(), p);
    cols += p.cols();
  }
  Tensor out = make_result({rows, cols});
  auto dst = out.mutable_values();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto src = p.values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(src.begin() + r * p.cols(), p.cols(), dst.begin() + r * cols + offset);
    offset += p.cols();
  }
  if (active_tape() != nullptr) {
    std::vector<NodePtr> nodes;
    bool any = false;
    for (const auto& p : parts) {
      nodes.push_back(p.node());
      any = any || p.requires_grad();
    }
    if (any) {
      NodePtr on = out.node();
      out.set_requires_grad(true);
      active_tape()->record("concat_cols", [nodes = std::move(nodes), on, rows, cols] {
        if (on->grad.empty()) return;
        std::size_t off = 0;
        for (const auto& n : nodes) {
          const std::size_t pc = n->shape.cols;
          if (n->requires_grad) {
            auto& g = n->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < pc; ++c) g[r * pc + c] += on->grad[r * cols + off + c];
          }
          off += pc;
        }
      });
    }
  }
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin >= end || end > x.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + x.shape().str());
  }
  const std::size_t c = x.cols();
  Tensor out = make_result({end - begin, c});
  std::copy(x.values().begin() + begin * c, x.values().begin() + end * c, out.mutable_values().begin());
  NodePtr xn = x.node(), on = out.node();
  detail::record("slice_rows", {&x}, out, [xn, on, begin, c] {
    if (on->grad.empty()) return;
    kernels::active().axpy(1.0, on->grad.data(), xn->grad_buffer().data() + begin * c, on->grad.size());
  });
  return out;
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) mismatch("add_row", x, row);
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = make_result(x.shape());
  const auto& ks = kernels::active();
  for (std::size_t i = 0; i < r; ++i)
    ks.add(x.values().data() + i * c, row.values().data(), out.mutable_values().data() + i * c, c);
  NodePtr xn = x.node(), bn = row.node(), on = out.node();
  detail::record("add_row", {&x, &row}, out, [xn, bn, on, r, c] {
    if (on->grad.empty()) return;
    const auto& ks = kernels::active();
    if (xn->requires_grad) ks.axpy(1.0, on->grad.data(), xn->grad_buffer().data(), r * c);
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < r; ++i) ks.axpy(1.0, on->grad.data() + i * c, g.data(), c);
    }
  });
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = make_result(x.shape());
  auto src = x.values();
  auto dst = out.mutable_values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double v = src[i];
    dst[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  NodePtr xn = x.node(), on = out.node();
  detail::record("sigmoid", {&x}, out, [xn, on] {
    if (on->grad.empty()) return;
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = on->value[i];
      g[i] += on->grad[i] * s * (1.0 - s);
    }
  });
  return out;
}

Tensor log(const Tensor& x) {
  Tensor out = make_result(x.shape());
  auto src = x.values();
  auto dst = out.mutable_values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::log(src[i]);
  NodePtr xn = x.node(), on = out.node();
  detail::record("log", {&x}, out, [xn, on] {
    if (on->grad.empty()) return;
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] / xn->value[i];
  });
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = make_result(x.shape());
  auto src = x.values();
  auto dst = out.mutable_values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  NodePtr xn = x.node(), on = out.node();
  detail::record("relu", {&x}, out, [xn, on] {
    if (on->grad.empty()) return;
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xn->value[i] > 0.0) g[i] += on->grad[i];
  });
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = make_result({1, 1});
  out.mutable_values()[0] = kernels::active().sum(x.values().data(), x.size());
  NodePtr xn = x.node(), on = out.node();
  detail::record("sum", {&x}, out, [xn, on] {
    if (on->grad.empty()) return;
    const double g0 = on->grad[0];
    for (auto& g : xn->grad_buffer()) g += g0;
  });
  return out;
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  Tensor out = make_result({1, 1});
  out.mutable_values()[0] = kernels::active().sum(x.values().data(), x.size()) / n;
  NodePtr xn = x.node(), on = out.node();
  detail::record("mean", {&x}, out, [xn, on, n] {
    if (on->grad.empty()) return;
    const double g0 = on->grad[0] / n;
    for (auto& g : xn->grad_buffer()) g += g0;
  });
  return out;
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (ids.empty()) throw ShapeError("embedding: empty id sequence");
  const std::size_t d = table.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows()) {
      throw ShapeError("embedding: id " + std::to_string(id) + " out of range for table " + table.shape().str());
    }
  }
  Tensor out = make_result({ids.size(), d});
  auto dst = out.mutable_values();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.values().begin() + static_cast<std::size_t>(ids[i]) * d, d, dst.begin() + i * d);
  NodePtr tn = table.node(), on = out.node();
  std::vector<int> idcopy(ids.begin(), ids.end());
  detail::record("embedding", {&table}, out, [tn, on, idcopy = std::move(idcopy), d] {
    if (on->grad.empty()) return;
    auto& g = tn->grad_buffer();
    const auto& ks = kernels::active();
    for (std::size_t i = 0; i < idcopy.size(); ++i)
      ks.axpy(1.0, on->grad.data() + i * d, g.data() + static_cast<std::size_t>(idcopy[i]) * d, d);
  });
  return out;
}

Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> masked_cols) {
  const std::size_t r = x.rows(), c = x.cols();
  if (!masked_cols.empty() && masked_cols.size() != c) {
    throw ShapeError("softmax_rows: mask length " + std::to_string(masked_cols.size()) + " vs shape " +
                     x.shape().str());
  }
  const bool masked = !masked_cols.empty();
  if (masked && std::all_of(masked_cols.begin(), masked_cols.end(), [](std::uint8_t m) { return m != 0; })) {
    throw ContractError("softmax_rows: every column is masked");
  }
  Tensor out = make_result(x.shape());
  auto src = x.values();
  auto dst = out.mutable_values();
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = src.data() + i * c;
    double* o = dst.data() + i * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (!masked || masked_cols[j] == 0) mx = std::max(mx, in[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = (masked && masked_cols[j] != 0) ? 0.0 : std::exp(in[j] - mx);
      total += o[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < c; ++j) o[j] *= inv;
  }
  NodePtr xn = x.node(), on = out.node();
  detail::record("softmax_rows", {&x}, out, [xn, on, r, c] {
    if (on->grad.empty()) return;
    auto& g = xn->grad_buffer();
    const auto& ks = kernels::active();
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = on->value.data() + i * c;
      const double* gy = on->grad.data() + i * c;
      const double inner = ks.dot(y, gy, c);
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (gy[j] - inner);
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t r = x.rows(), c = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != c) mismatch("layer_norm", x, gamma);
  if (beta.rows() != 1 || beta.cols() != c) mismatch("layer_norm", x, beta);
  Tensor out = make_result(x.shape());
  // Normalized activations and per-row inverse std are kept for backward.
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(r);
  auto src = x.values();
  auto dst = out.mutable_values();
  const double n = static_cast<double>(c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = src.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += in[j];
    mu /= n;
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (in[j] - mu) * is;
      (*xhat)[i * c + j] = h;
      dst[i * c + j] = gamma.values()[j] * h + beta.values()[j];
    }
  }
  NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
  detail::record("layer_norm", {&x, &gamma, &beta}, out, [xn, gn, bn, on, xhat, inv_std, r, c, n] {
    if (on->grad.empty()) return;
    const auto& gy = on->grad;
    if (gn->requires_grad) {
      auto& gg = gn->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gg[j] += gy[i * c + j] * (*xhat)[i * c + j];
    }
    if (bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += gy[i * c + j];
    }
    if (xn->requires_grad) {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < r; ++i) {
        double sum_g = 0.0, sum_gh = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          const double gh = gy[i * c + j] * gn->value[j];
          sum_g += gh;
          sum_gh += gh * (*xhat)[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) {
          const double gh = gy[i * c + j] * gn->value[j];
          gx[i * c + j] += (*inv_std)[i] / n * (n * gh - sum_g - (*xhat)[i * c + j] * sum_gh);
        }
      }
    }
  });
  return out;
}

}  // namespace notescore
