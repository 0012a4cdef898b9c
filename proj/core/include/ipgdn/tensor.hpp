#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ipgdn/errors.hpp"
#include "ipgdn/rng.hpp"

namespace ipgdn::ad {

namespace detail {

/// Backing storage for one tensor. Shared between the user-visible handle and
/// any tape entries that reference it. Buffers come from a per-thread pool so
/// that training epochs, which allocate the same shapes over and over, reuse
/// warm memory instead of faulting fresh pages.
struct Node {
  Node() = default;
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  int rows = 0;
  int cols = 0;
  std::vector<double> value;  // row-major, size rows*cols
  std::vector<double> grad;   // empty until first accumulation / backward
  bool requires_grad = false;
  bool leaf = true;  // false for op outputs; their grad is transient per backward pass

  std::size_t size() const { return value.size(); }
  void ensure_grad();
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

/// Dense 2-D matrix of 64-bit floats. Copies are shallow (shared storage);
/// operations executed under an active Tape record how to back-propagate.
class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::Node>()) {}

  Tensor(int rows, int cols, double fill = 0.0, bool requires_grad = false);
  Tensor(int rows, int cols, std::vector<double> data, bool requires_grad = false);

  static Tensor row(std::vector<double> data, bool requires_grad = false);
  static Tensor column(std::vector<double> data, bool requires_grad = false);
  static Tensor identity(int n);

  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  std::size_t size() const { return node_->size(); }
  bool empty() const { return node_->size() == 0; }

  double at(int r, int c) const;
  void set(int r, int c, double v);

  std::span<const double> value() const { return node_->value; }
  std::span<double> mutable_value() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const;
  void zero_grad();

  /// Deep copy of the values (fresh storage, no grad, no tape linkage).
  Tensor clone() const;

  const detail::NodePtr& node() const { return node_; }

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  detail::NodePtr node_;

  friend Tensor make_op_output(int rows, int cols, std::span<const Tensor> inputs);
};

/// Ordered record of executed operations. Backward replays it in reverse,
/// visiting each operation exactly once. One tape per training step; leaf
/// gradients accumulate across backward calls until zero_grad.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return entries_.size(); }

  /// Registers an executed operation. `fn` reads output->grad and accumulates
  /// into the grads of the inputs it captured.
  void record(detail::NodePtr output, std::vector<detail::NodePtr> inputs,
              std::function<void()> fn);

  /// Reverse sweep from a scalar loss. Interior gradients are transient per
  /// call; leaf gradients accumulate (calling twice doubles them).
  void backward(const Tensor& loss);

 private:
  struct Entry {
    detail::NodePtr output;
    std::vector<detail::NodePtr> inputs;
    std::function<void()> fn;
  };
  std::vector<Entry> entries_;
};

/// RAII activation of a tape for the current thread. Operations executed with
/// no active tape do not record and produce requires_grad=false outputs.
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

// ---- operations ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise sum; `b` may also be a 1xN row vector broadcast over rows.
Tensor add(const Tensor& a, const Tensor& b);

/// Elementwise product (same shape).
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);

Tensor relu(const Tensor& x);

/// Row-wise softmax with max subtraction.
Tensor row_softmax(const Tensor& x);

/// Each row divided by max(l2 norm, eps). Zero rows stay zero.
Tensor row_l2_normalize(const Tensor& x, double eps = 1e-12);

/// Inverted dropout: training mode zeroes entries with probability `rate` and
/// scales survivors by 1/(1-rate); eval mode is the identity.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

/// Sum of all entries, as a 1x1 tensor.
Tensor sum(const Tensor& x);

/// Sum of squared entries, as a 1x1 tensor.
Tensor sum_squares(const Tensor& x);

/// Rows of `x` selected by `idx` (duplicates allowed).
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);

/// Sums rows of `x` into `num_segments` output rows keyed by `seg`.
Tensor segment_sum(const Tensor& x, const std::vector<int>& seg, int num_segments);

/// Per-row dot product of two same-shape matrices; result is Mx1.
Tensor rowwise_dot(const Tensor& a, const Tensor& b);

/// Row i of `a` multiplied by scalar s[i]; `s` is Mx1.
Tensor scale_rows(const Tensor& a, const Tensor& s);

/// Fused gather + per-row dot: out[i] = a[i] . b[idx[i]]. Equivalent to
/// rowwise_dot(a, gather_rows(b, idx)) without materializing the gather.
Tensor indexed_rowwise_dot(const Tensor& a, const Tensor& b, const std::vector<int>& idx);

/// Fused scale + scatter: out[seg[i]] += weights(i, weight_col) * x[i].
/// Equivalent to segment_sum(scale_rows(x, slice_cols(weights, c, c+1)), ...)
/// without the intermediate row-scaled matrix.
Tensor weighted_segment_sum(const Tensor& x, const Tensor& weights, int weight_col,
                            const std::vector<int>& seg, int num_segments);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);

/// Columns [begin, end) of `x`.
Tensor slice_cols(const Tensor& x, int begin, int end);

// ---- op-author helpers (used by fused ops in other modules) ----------------

/// Allocates the output of an op: marks it interior and propagates
/// requires_grad from `inputs` when a tape is active.
Tensor make_op_output(int rows, int cols, std::span<const Tensor> inputs);
Tensor make_op_output(int rows, int cols, std::initializer_list<Tensor> inputs);

/// True when the op must record a backward entry for this output.
bool recording(const Tensor& output);

/// Accumulates `g` into the grad of `node` if it participates in gradients.
void accumulate_grad(const detail::NodePtr& node, std::span<const double> g);

std::string shape_string(const Tensor& t);

}  // namespace ipgdn::ad
