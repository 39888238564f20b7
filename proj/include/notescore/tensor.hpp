#pragma once

// Dense row-major matrices of doubles with reverse-mode differentiation.
//
// Every tensor is two-dimensional (a scalar is 1x1, a vector is 1xn or nx1).
// Tensors are handles: copying a Tensor shares the underlying storage, which
// is what lets recorded operations refer back to their operands. Use clone()
// for an independent copy.
//
// Operations are recorded only while a Tape is active on the calling thread
// (see TapeScope) and at least one operand requires a gradient. Without an
// active tape every op is a plain forward computation, which is how frozen
// models run inference concurrently.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace notescore {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  std::string str() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  // False when any value is NaN or infinite.
  bool all_finite() const;

  // Detached deep copy that keeps the requires_grad flag.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor make_result(Shape shape);
};

// Fresh, non-gradient output tensor for an op implementation.
Tensor make_result(Shape shape);

// Ordered log of recorded operations. backward() replays it in reverse,
// visiting each entry exactly once, then empties it.
class Tape {
 public:
  struct Entry {
    std::string_view op;
    std::function<void()> backward;
  };

  void record(std::string_view op, std::function<void()> backward);
  void backward(const Tensor& loss);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  std::vector<std::string_view> ops() const;

 private:
  std::vector<Entry> entries_;
};

// Makes `tape` the recording tape for the current thread while alive.
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

// Backpropagates through the tape active on this thread.
void backward(const Tensor& loss);

namespace detail {

// Marks `out` as differentiable and records `fn` when a tape is active and
// any input requires a gradient. Returns true if recorded.
bool record(std::string_view op, std::initializer_list<const Tensor*> inputs, Tensor& out,
            std::function<void()> fn);

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives. Shape mismatches throw ShapeError naming both shapes.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor transpose(const Tensor& x);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
// x[r, :] + row for every r; row must be 1 x cols(x).
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor sigmoid(const Tensor& x);
Tensor log(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Gathers rows of `table` (vocab x d) for each id.
Tensor embedding(const Tensor& table, std::span<const int> ids);
// Row-wise softmax with max subtraction. Columns flagged in `masked_cols`
// (one flag per column, nonzero = masked) get weight exactly 0; at least one
// column per row must stay unmasked.
Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> masked_cols = {});
// Per-row normalization to zero mean and unit variance, then gamma * . + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

}  // namespace notescore
