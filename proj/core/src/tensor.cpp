#include "ipgdn/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>

namespace ipgdn::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

/// Size-keyed free list of zeroed buffers. Training epochs recreate the same
/// tensor shapes every step; recycling avoids per-epoch mmap churn and page
/// faults, which otherwise dominate the runtime.
class BufferPool {
 public:
  std::vector<double> acquire(std::size_t size) {
    if (size == 0) return {};
    auto it = buckets_.find(size);
    if (it != buckets_.end() && !it->second.empty()) {
      std::vector<double> buf = std::move(it->second.back());
      it->second.pop_back();
      held_ -= size;
      std::fill(buf.begin(), buf.end(), 0.0);
      return buf;
    }
    return std::vector<double>(size, 0.0);
  }

  void release(std::vector<double>&& buf) {
    const std::size_t size = buf.size();
    if (size < kMinPooled || held_ + size > kMaxHeld) return;
    held_ += size;
    buckets_[size].push_back(std::move(buf));
  }

 private:
  static constexpr std::size_t kMinPooled = 64;                  // doubles
  static constexpr std::size_t kMaxHeld = 3ull * 1024 * 1024 * 1024 / 8;  // 3 GB
  std::unordered_map<std::size_t, std::vector<std::vector<double>>> buckets_;
  std::size_t held_ = 0;
};

thread_local BufferPool g_pool;

ConstMap map_value(const detail::NodePtr& n) {
  return ConstMap(n->value.data(), n->rows, n->cols);
}

MutMap map_grad(const detail::NodePtr& n) {
  n->ensure_grad();
  return MutMap(n->grad.data(), n->rows, n->cols);
}

thread_local Tape* g_active_tape = nullptr;

std::string dims(int r, int c) { return std::to_string(r) + "x" + std::to_string(c); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a) + " and " +
                     shape_string(b) + " differ");
  }
}

}  // namespace

std::string shape_string(const Tensor& t) { return dims(t.rows(), t.cols()); }

namespace detail {

Node::~Node() {
  g_pool.release(std::move(value));
  g_pool.release(std::move(grad));
}

void Node::ensure_grad() {
  if (grad.empty() && !value.empty()) grad = g_pool.acquire(value.size());
}

}  // namespace detail

Tensor::Tensor(int rows, int cols, double fill, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (rows < 0 || cols < 0) throw ShapeError("tensor dimensions must be non-negative");
  node_->rows = rows;
  node_->cols = cols;
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (fill == 0.0) {
    node_->value = g_pool.acquire(n);
  } else {
    node_->value.assign(n, fill);
  }
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(int rows, int cols, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (rows < 0 || cols < 0) throw ShapeError("tensor dimensions must be non-negative");
  if (data.size() != static_cast<std::size_t>(rows) * cols) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + dims(rows, cols));
  }
  node_->rows = rows;
  node_->cols = cols;
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::row(std::vector<double> data, bool requires_grad) {
  const int n = static_cast<int>(data.size());
  return Tensor(1, n, std::move(data), requires_grad);
}

Tensor Tensor::column(std::vector<double> data, bool requires_grad) {
  const int n = static_cast<int>(data.size());
  return Tensor(n, 1, std::move(data), requires_grad);
}

Tensor Tensor::identity(int n) {
  Tensor t(n, n);
  for (int i = 0; i < n; ++i) t.node_->value[static_cast<std::size_t>(i) * n + i] = 1.0;
  return t;
}

double Tensor::at(int r, int c) const {
  if (r < 0 || r >= rows() || c < 0 || c >= cols()) {
    throw ShapeError("index (" + std::to_string(r) + "," + std::to_string(c) +
                     ") out of range for " + shape_string(*this));
  }
  return node_->value[static_cast<std::size_t>(r) * cols() + c];
}

void Tensor::set(int r, int c, double v) {
  if (r < 0 || r >= rows() || c < 0 || c >= cols()) {
    throw ShapeError("index (" + std::to_string(r) + "," + std::to_string(c) +
                     ") out of range for " + shape_string(*this));
  }
  node_->value[static_cast<std::size_t>(r) * cols() + c] = v;
}

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty()) throw ValidationError("tensor has no gradient");
  return node_->grad;
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::clone() const {
  Tensor out(rows(), cols(), std::vector<double>(node_->value));
  return out;
}

// ---- tape -------------------------------------------------------------------

void Tape::record(detail::NodePtr output, std::vector<detail::NodePtr> inputs,
                  std::function<void()> fn) {
  entries_.push_back(Entry{std::move(output), std::move(inputs), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("backward: loss must be 1x1, got " + shape_string(loss));
  }
  const detail::Node* loss_node = loss.node().get();
  bool on_tape = false;
  for (const auto& e : entries_) {
    if (e.output.get() == loss_node) on_tape = true;
  }
  if (!on_tape) throw ValidationError("backward: loss is not an output recorded on this tape");

  // Interior grads are transient: reset them so repeated backward calls leave
  // leaf grads exactly doubled.
  for (auto& e : entries_) {
    e.output->ensure_grad();
    std::fill(e.output->grad.begin(), e.output->grad.end(), 0.0);
  }
  loss.node()->grad[0] = 1.0;

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    it->fn();
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

// ---- op plumbing ------------------------------------------------------------

Tensor make_op_output(int rows, int cols, std::span<const Tensor> inputs) {
  Tensor out(rows, cols);
  out.node_->leaf = false;
  if (g_active_tape != nullptr) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        out.node_->requires_grad = true;
        break;
      }
    }
  }
  return out;
}

Tensor make_op_output(int rows, int cols, std::initializer_list<Tensor> inputs) {
  return make_op_output(rows, cols, std::span<const Tensor>(inputs.begin(), inputs.size()));
}

bool recording(const Tensor& output) {
  return g_active_tape != nullptr && output.requires_grad();
}

void accumulate_grad(const detail::NodePtr& node, std::span<const double> g) {
  if (!node->requires_grad) return;
  node->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) node->grad[i] += g[i];
}

namespace {

void record_entry(const Tensor& out, std::initializer_list<Tensor> ins,
                  std::function<void()> fn) {
  std::vector<detail::NodePtr> inputs;
  inputs.reserve(ins.size());
  for (const auto& t : ins) inputs.push_back(t.node());
  g_active_tape->record(out.node(), std::move(inputs), std::move(fn));
}

}  // namespace

// ---- operations -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_string(a) + " * " +
                     shape_string(b));
  }
  Tensor out = make_op_output(a.rows(), b.cols(), {a, b});
  MutMap(out.mutable_value().data(), out.rows(), out.cols()).noalias() =
      map_value(a.node()) * map_value(b.node());
  if (recording(out)) {
    auto an = a.node(), bn = b.node(), on = out.node();
    record_entry(out, {a, b}, [an, bn, on]() {
      ConstMap g(on->grad.data(), on->rows, on->cols);
      if (an->requires_grad) map_grad(an).noalias() += g * map_value(bn).transpose();
      if (bn->requires_grad) map_grad(bn).noalias() += map_value(an).transpose() * g;
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool row_broadcast = b.rows() == 1 && a.cols() == b.cols() && a.rows() != 1;
  if (!row_broadcast) require_same_shape(a, b, "add");

  Tensor out = make_op_output(a.rows(), a.cols(), {a, b});
  auto ov = out.mutable_value();
  auto av = a.value();
  auto bv = b.value();
  const int cols = a.cols();
  for (int r = 0; r < a.rows(); ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    const std::size_t bbase = row_broadcast ? 0 : base;
    for (int c = 0; c < cols; ++c) ov[base + c] = av[base + c] + bv[bbase + c];
  }
  if (recording(out)) {
    auto an = a.node(), bn = b.node(), on = out.node();
    record_entry(out, {a, b}, [an, bn, on, row_broadcast]() {
      if (an->requires_grad) accumulate_grad(an, on->grad);
      if (!bn->requires_grad) return;
      bn->ensure_grad();
      if (!row_broadcast) {
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
      } else {
        const int cols = on->cols;
        for (int r = 0; r < on->rows; ++r)
          for (int c = 0; c < cols; ++c)
            bn->grad[c] += on->grad[static_cast<std::size_t>(r) * cols + c];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = make_op_output(a.rows(), a.cols(), {a, b});
  auto ov = out.mutable_value();
  auto av = a.value();
  auto bv = b.value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (recording(out)) {
    auto an = a.node(), bn = b.node(), on = out.node();
    record_entry(out, {a, b}, [an, bn, on]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += on->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          bn->grad[i] += on->grad[i] * an->value[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = make_op_output(a.rows(), a.cols(), {a});
  auto ov = out.mutable_value();
  auto av = a.value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * s;
  if (recording(out)) {
    auto an = a.node(), on = out.node();
    record_entry(out, {a}, [an, on, s]() {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * s;
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = make_op_output(x.rows(), x.cols(), {x});
  auto ov = out.mutable_value();
  auto xv = x.value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (recording(out)) {
    auto xn = x.node(), on = out.node();
    record_entry(out, {x}, [xn, on]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      // Subgradient at 0 is 0.
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        if (xn->value[i] > 0.0) xn->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor row_softmax(const Tensor& x) {
  Tensor out = make_op_output(x.rows(), x.cols(), {x});
  auto ov = out.mutable_value();
  auto xv = x.value();
  const int cols = x.cols();
  for (int r = 0; r < x.rows(); ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < cols; ++c) mx = std::max(mx, xv[base + c]);
    double total = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double e = std::exp(xv[base + c] - mx);
      ov[base + c] = e;
      total += e;
    }
    for (int c = 0; c < cols; ++c) ov[base + c] /= total;
  }
  if (recording(out)) {
    auto xn = x.node(), on = out.node();
    record_entry(out, {x}, [xn, on]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const int cols = on->cols;
      for (int r = 0; r < on->rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * cols;
        double dot = 0.0;
        for (int c = 0; c < cols; ++c) dot += on->grad[base + c] * on->value[base + c];
        for (int c = 0; c < cols; ++c)
          xn->grad[base + c] += on->value[base + c] * (on->grad[base + c] - dot);
      }
    });
  }
  return out;
}

Tensor row_l2_normalize(const Tensor& x, double eps) {
  if (eps <= 0.0) throw ConfigError("row_l2_normalize: eps must be positive");
  Tensor out = make_op_output(x.rows(), x.cols(), {x});
  auto ov = out.mutable_value();
  auto xv = x.value();
  const int cols = x.cols();
  std::vector<double> norms(static_cast<std::size_t>(x.rows()), 0.0);
  for (int r = 0; r < x.rows(); ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    double sq = 0.0;
    for (int c = 0; c < cols; ++c) sq += xv[base + c] * xv[base + c];
    const double denom = std::max(std::sqrt(sq), eps);
    norms[static_cast<std::size_t>(r)] = denom;
    for (int c = 0; c < cols; ++c) ov[base + c] = xv[base + c] / denom;
  }
  if (recording(out)) {
    auto xn = x.node(), on = out.node();
    record_entry(out, {x}, [xn, on, norms = std::move(norms), eps]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const int cols = on->cols;
      for (int r = 0; r < on->rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * cols;
        const double denom = norms[static_cast<std::size_t>(r)];
        if (denom <= eps) {
          // Clamped region: y = x / eps.
          for (int c = 0; c < cols; ++c) xn->grad[base + c] += on->grad[base + c] / denom;
          continue;
        }
        double dot = 0.0;
        for (int c = 0; c < cols; ++c) dot += on->grad[base + c] * on->value[base + c];
        for (int c = 0; c < cols; ++c)
          xn->grad[base + c] += (on->grad[base + c] - on->value[base + c] * dot) / denom;
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) {
    Tensor out = make_op_output(x.rows(), x.cols(), {x});
    std::copy(x.value().begin(), x.value().end(), out.mutable_value().begin());
    if (recording(out)) {
      auto xn = x.node(), on = out.node();
      record_entry(out, {x}, [xn, on]() { accumulate_grad(xn, on->grad); });
    }
    return out;
  }
  Tensor out = make_op_output(x.rows(), x.cols(), {x});
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.size());
  auto ov = out.mutable_value();
  auto xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double m = rng.uniform01() < rate ? 0.0 : keep_scale;
    (*mask)[i] = m;
    ov[i] = xv[i] * m;
  }
  if (recording(out)) {
    auto xn = x.node(), on = out.node();
    record_entry(out, {x}, [xn, on, mask]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        xn->grad[i] += on->grad[i] * (*mask)[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = make_op_output(1, 1, {x});
  out.mutable_value()[0] = std::accumulate(x.value().begin(), x.value().end(), 0.0);
  if (recording(out)) {
    auto xn = x.node(), on = out.node();
    record_entry(out, {x}, [xn, on]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const double g = on->grad[0];
      for (auto& gi : xn->grad) gi += g;
    });
  }
  return out;
}

Tensor sum_squares(const Tensor& x) {
  Tensor out = make_op_output(1, 1, {x});
  double total = 0.0;
  for (double v : x.value()) total += v * v;
  out.mutable_value()[0] = total;
  if (recording(out)) {
    auto xn = x.node(), on = out.node();
    record_entry(out, {x}, [xn, on]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const double g = on->grad[0];
      for (std::size_t i = 0; i < xn->value.size(); ++i) xn->grad[i] += 2.0 * xn->value[i] * g;
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  for (int i : idx) {
    if (i < 0 || i >= x.rows()) {
      throw ValidationError("gather_rows: index " + std::to_string(i) +
                            " out of range for " + shape_string(x));
    }
  }
  const int cols = x.cols();
  Tensor out = make_op_output(static_cast<int>(idx.size()), cols, {x});
  auto ov = out.mutable_value();
  auto xv = x.value();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::size_t src = static_cast<std::size_t>(idx[r]) * cols;
    std::copy_n(xv.begin() + src, cols, ov.begin() + r * cols);
  }
  if (recording(out)) {
    auto xn = x.node(), on = out.node();
    record_entry(out, {x}, [xn, on, idx]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const int cols = on->cols;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const std::size_t dst = static_cast<std::size_t>(idx[r]) * cols;
        const std::size_t src = r * cols;
        for (int c = 0; c < cols; ++c) xn->grad[dst + c] += on->grad[src + c];
      }
    });
  }
  return out;
}

Tensor segment_sum(const Tensor& x, const std::vector<int>& seg, int num_segments) {
  if (seg.size() != static_cast<std::size_t>(x.rows())) {
    throw ShapeError("segment_sum: got " + std::to_string(seg.size()) + " segment ids for " +
                     std::to_string(x.rows()) + " rows");
  }
  for (int s : seg) {
    if (s < 0 || s >= num_segments) {
      throw ValidationError("segment_sum: segment id " + std::to_string(s) +
                            " outside [0," + std::to_string(num_segments) + ")");
    }
  }
  const int cols = x.cols();
  Tensor out = make_op_output(num_segments, cols, {x});
  auto ov = out.mutable_value();
  auto xv = x.value();
  for (std::size_t r = 0; r < seg.size(); ++r) {
    const std::size_t dst = static_cast<std::size_t>(seg[r]) * cols;
    const std::size_t src = r * cols;
    for (int c = 0; c < cols; ++c) ov[dst + c] += xv[src + c];
  }
  if (recording(out)) {
    auto xn = x.node(), on = out.node();
    record_entry(out, {x}, [xn, on, seg]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const int cols = on->cols;
      for (std::size_t r = 0; r < seg.size(); ++r) {
        const std::size_t src = static_cast<std::size_t>(seg[r]) * cols;
        const std::size_t dst = r * cols;
        for (int c = 0; c < cols; ++c) xn->grad[dst + c] += on->grad[src + c];
      }
    });
  }
  return out;
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "rowwise_dot");
  const int cols = a.cols();
  Tensor out = make_op_output(a.rows(), 1, {a, b});
  auto ov = out.mutable_value();
  auto av = a.value();
  auto bv = b.value();
  for (int r = 0; r < a.rows(); ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    double dot = 0.0;
    for (int c = 0; c < cols; ++c) dot += av[base + c] * bv[base + c];
    ov[static_cast<std::size_t>(r)] = dot;
  }
  if (recording(out)) {
    auto an = a.node(), bn = b.node(), on = out.node();
    record_entry(out, {a, b}, [an, bn, on]() {
      const int cols = an->cols;
      for (int r = 0; r < an->rows; ++r) {
        const double g = on->grad[static_cast<std::size_t>(r)];
        const std::size_t base = static_cast<std::size_t>(r) * cols;
        if (an->requires_grad) {
          an->ensure_grad();
          for (int c = 0; c < cols; ++c) an->grad[base + c] += g * bn->value[base + c];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int c = 0; c < cols; ++c) bn->grad[base + c] += g * an->value[base + c];
        }
      }
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  if (s.cols() != 1 || s.rows() != a.rows()) {
    throw ShapeError("scale_rows: scale must be " + std::to_string(a.rows()) +
                     "x1, got " + shape_string(s));
  }
  const int cols = a.cols();
  Tensor out = make_op_output(a.rows(), cols, {a, s});
  auto ov = out.mutable_value();
  auto av = a.value();
  auto sv = s.value();
  for (int r = 0; r < a.rows(); ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    const double m = sv[static_cast<std::size_t>(r)];
    for (int c = 0; c < cols; ++c) ov[base + c] = av[base + c] * m;
  }
  if (recording(out)) {
    auto an = a.node(), sn = s.node(), on = out.node();
    record_entry(out, {a, s}, [an, sn, on]() {
      const int cols = an->cols;
      for (int r = 0; r < an->rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * cols;
        const double m = sn->value[static_cast<std::size_t>(r)];
        if (an->requires_grad) {
          an->ensure_grad();
          for (int c = 0; c < cols; ++c) an->grad[base + c] += on->grad[base + c] * m;
        }
        if (sn->requires_grad) {
          sn->ensure_grad();
          double acc = 0.0;
          for (int c = 0; c < cols; ++c) acc += on->grad[base + c] * an->value[base + c];
          sn->grad[static_cast<std::size_t>(r)] += acc;
        }
      }
    });
  }
  return out;
}

Tensor indexed_rowwise_dot(const Tensor& a, const Tensor& b, const std::vector<int>& idx) {
  if (idx.size() != static_cast<std::size_t>(a.rows())) {
    throw ShapeError("indexed_rowwise_dot: got " + std::to_string(idx.size()) +
                     " indices for " + std::to_string(a.rows()) + " rows");
  }
  if (a.cols() != b.cols()) {
    throw ShapeError("indexed_rowwise_dot: widths differ, " + shape_string(a) + " vs " +
                     shape_string(b));
  }
  for (int i : idx) {
    if (i < 0 || i >= b.rows()) {
      throw ValidationError("indexed_rowwise_dot: index " + std::to_string(i) +
                            " out of range for " + shape_string(b));
    }
  }
  const int cols = a.cols();
  Tensor out = make_op_output(a.rows(), 1, {a, b});
  auto ov = out.mutable_value();
  auto av = a.value();
  auto bv = b.value();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const double* arow = av.data() + r * cols;
    const double* brow = bv.data() + static_cast<std::size_t>(idx[r]) * cols;
    double dot = 0.0;
    for (int c = 0; c < cols; ++c) dot += arow[c] * brow[c];
    ov[r] = dot;
  }
  if (recording(out)) {
    auto an = a.node(), bn = b.node(), on = out.node();
    record_entry(out, {a, b}, [an, bn, on, idx]() {
      const int cols = an->cols;
      const bool need_a = an->requires_grad;
      const bool need_b = bn->requires_grad;
      if (need_a) an->ensure_grad();
      if (need_b) bn->ensure_grad();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const double g = on->grad[r];
        if (g == 0.0) continue;
        const std::size_t abase = r * cols;
        const std::size_t bbase = static_cast<std::size_t>(idx[r]) * cols;
        if (need_a)
          for (int c = 0; c < cols; ++c) an->grad[abase + c] += g * bn->value[bbase + c];
        if (need_b)
          for (int c = 0; c < cols; ++c) bn->grad[bbase + c] += g * an->value[abase + c];
      }
    });
  }
  return out;
}

Tensor weighted_segment_sum(const Tensor& x, const Tensor& weights, int weight_col,
                            const std::vector<int>& seg, int num_segments) {
  if (seg.size() != static_cast<std::size_t>(x.rows()) || weights.rows() != x.rows()) {
    throw ShapeError("weighted_segment_sum: rows of " + shape_string(x) + ", weights " +
                     shape_string(weights) + " and " + std::to_string(seg.size()) +
                     " segment ids disagree");
  }
  if (weight_col < 0 || weight_col >= weights.cols()) {
    throw ShapeError("weighted_segment_sum: weight column " + std::to_string(weight_col) +
                     " out of range for " + shape_string(weights));
  }
  for (int s : seg) {
    if (s < 0 || s >= num_segments) {
      throw ValidationError("weighted_segment_sum: segment id " + std::to_string(s) +
                            " outside [0," + std::to_string(num_segments) + ")");
    }
  }
  const int cols = x.cols();
  const int wcols = weights.cols();
  Tensor out = make_op_output(num_segments, cols, {x, weights});
  auto ov = out.mutable_value();
  auto xv = x.value();
  auto wv = weights.value();
  for (std::size_t r = 0; r < seg.size(); ++r) {
    const double w = wv[r * wcols + weight_col];
    const std::size_t dst = static_cast<std::size_t>(seg[r]) * cols;
    const std::size_t src = r * cols;
    for (int c = 0; c < cols; ++c) ov[dst + c] += w * xv[src + c];
  }
  if (recording(out)) {
    auto xn = x.node(), wn = weights.node(), on = out.node();
    record_entry(out, {x, weights}, [xn, wn, on, seg, weight_col]() {
      const int cols = xn->cols;
      const int wcols = wn->cols;
      const bool need_x = xn->requires_grad;
      const bool need_w = wn->requires_grad;
      if (need_x) xn->ensure_grad();
      if (need_w) wn->ensure_grad();
      for (std::size_t r = 0; r < seg.size(); ++r) {
        const std::size_t gbase = static_cast<std::size_t>(seg[r]) * cols;
        const std::size_t xbase = r * cols;
        const double w = wn->value[r * wcols + weight_col];
        if (need_x)
          for (int c = 0; c < cols; ++c) xn->grad[xbase + c] += w * on->grad[gbase + c];
        if (need_w) {
          double acc = 0.0;
          for (int c = 0; c < cols; ++c) acc += on->grad[gbase + c] * xn->value[xbase + c];
          wn->grad[r * wcols + weight_col] += acc;
        }
      }
    });
  }
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int rows = parts.front().rows();
  int total_cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row counts differ, " + shape_string(parts.front()) +
                       " vs " + shape_string(p));
    }
    total_cols += p.cols();
  }
  Tensor out = make_op_output(rows, total_cols, parts);
  auto ov = out.mutable_value();
  int offset = 0;
  for (const auto& p : parts) {
    auto pv = p.value();
    const int pc = p.cols();
    for (int r = 0; r < rows; ++r)
      std::copy_n(pv.begin() + static_cast<std::size_t>(r) * pc, pc,
                  ov.begin() + static_cast<std::size_t>(r) * total_cols + offset);
    offset += pc;
  }
  if (recording(out)) {
    std::vector<detail::NodePtr> ins;
    ins.reserve(parts.size());
    for (const auto& p : parts) ins.push_back(p.node());
    auto on = out.node();
    auto fn = [ins, on, total_cols]() {
      int offset = 0;
      for (const auto& in : ins) {
        const int pc = in->cols;
        if (in->requires_grad) {
          in->ensure_grad();
          for (int r = 0; r < in->rows; ++r) {
            const std::size_t src = static_cast<std::size_t>(r) * total_cols + offset;
            const std::size_t dst = static_cast<std::size_t>(r) * pc;
            for (int c = 0; c < pc; ++c) in->grad[dst + c] += on->grad[src + c];
          }
        }
        offset += pc;
      }
    };
    std::vector<detail::NodePtr> inputs = ins;
    g_active_tape->record(out.node(), std::move(inputs), std::move(fn));
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const int cols = parts.front().cols();
  int total_rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw ShapeError("concat_rows: column counts differ, " + shape_string(parts.front()) +
                       " vs " + shape_string(p));
    }
    total_rows += p.rows();
  }
  Tensor out = make_op_output(total_rows, cols, parts);
  auto ov = out.mutable_value();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().begin(), p.value().end(), ov.begin() + offset);
    offset += p.size();
  }
  if (recording(out)) {
    std::vector<detail::NodePtr> ins;
    ins.reserve(parts.size());
    for (const auto& p : parts) ins.push_back(p.node());
    auto on = out.node();
    auto fn = [ins, on]() {
      std::size_t offset = 0;
      for (const auto& in : ins) {
        if (in->requires_grad) {
          in->ensure_grad();
          for (std::size_t i = 0; i < in->value.size(); ++i)
            in->grad[i] += on->grad[offset + i];
        }
        offset += in->value.size();
      }
    };
    std::vector<detail::NodePtr> inputs = ins;
    g_active_tape->record(out.node(), std::move(inputs), std::move(fn));
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int begin, int end) {
  if (begin < 0 || end > x.cols() || begin >= end) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") invalid for " + shape_string(x));
  }
  const int width = end - begin;
  Tensor out = make_op_output(x.rows(), width, {x});
  auto ov = out.mutable_value();
  auto xv = x.value();
  for (int r = 0; r < x.rows(); ++r)
    std::copy_n(xv.begin() + static_cast<std::size_t>(r) * x.cols() + begin, width,
                ov.begin() + static_cast<std::size_t>(r) * width);
  if (recording(out)) {
    auto xn = x.node(), on = out.node();
    record_entry(out, {x}, [xn, on, begin, width]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int r = 0; r < on->rows; ++r) {
        const std::size_t dst = static_cast<std::size_t>(r) * xn->cols + begin;
        const std::size_t src = static_cast<std::size_t>(r) * width;
        for (int c = 0; c < width; ++c) xn->grad[dst + c] += on->grad[src + c];
      }
    });
  }
  return out;
}

}  // namespace ipgdn::ad
