#include "ipgdn/hsic.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace ipgdn::hsic {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMat centering(int d) {
  RowMat r = RowMat::Constant(d, d, -1.0 / d);
  for (int i = 0; i < d; ++i) r(i, i) += 1.0;
  return r;
}

}  // namespace

ad::Tensor centering_matrix(int d) {
  if (d < 1) throw ValidationError("centering_matrix: d must be >= 1");
  ad::Tensor out(d, d);
  auto ov = out.mutable_value();
  for (int p = 0; p < d; ++p)
    for (int c = 0; c < d; ++c)
      ov[static_cast<std::size_t>(p) * d + c] = (p == c ? 1.0 : 0.0) - 1.0 / d;
  return out;
}

ad::Tensor gram_inner(std::span<const double> e) {
  const int d = static_cast<int>(e.size());
  if (d < 1) throw ValidationError("gram_inner: empty vector");
  ad::Tensor out(d, d);
  auto ov = out.mutable_value();
  for (int p = 0; p < d; ++p)
    for (int c = 0; c < d; ++c) ov[static_cast<std::size_t>(p) * d + c] = e[p] * e[c];
  return out;
}

double hsic_inner(std::span<const double> e_i, std::span<const double> e_j) {
  if (e_i.size() != e_j.size()) {
    throw ValidationError("hsic_inner: lengths differ, " + std::to_string(e_i.size()) +
                          " vs " + std::to_string(e_j.size()));
  }
  const int d = static_cast<int>(e_i.size());
  if (d < 2) throw ValidationError("hsic_inner: needs at least 2 samples per channel");

  RowMat k(d, d), s(d, d);
  for (int p = 0; p < d; ++p)
    for (int q = 0; q < d; ++q) {
      k(p, q) = e_i[p] * e_i[q];
      s(p, q) = e_j[p] * e_j[q];
    }
  const RowMat r = centering(d);
  const RowMat kr = k * r;
  const RowMat sr = s * r;
  double trace = 0.0;
  for (int p = 0; p < d; ++p) trace += kr.row(p).dot(sr.col(p));
  const double scale = 1.0 / ((d - 1.0) * (d - 1.0));
  return scale * trace;
}

ad::Tensor independence_loss(const ad::Tensor& h, int channels, const std::vector<int>& node_ids) {
  if (channels < 1) throw ValidationError("independence_loss: channels must be >= 1");
  if (h.cols() % channels != 0) {
    throw ShapeError("independence_loss: " + std::to_string(channels) +
                     " channels do not divide width " + std::to_string(h.cols()));
  }
  const int d = h.cols() / channels;

  ad::Tensor out = ad::make_op_output(1, 1, {h});
  if (node_ids.empty() || channels == 1) {
    return out;  // no pairs; stays 0 with no tape entry
  }
  if (d < 2) throw ValidationError("independence_loss: channel width must be >= 2");

  for (int id : node_ids) {
    if (id < 0 || id >= h.rows()) {
      throw ValidationError("independence_loss: node id " + std::to_string(id) +
                            " out of range for " + ad::shape_string(h));
    }
  }

  const auto hv = h.value();
  const int width = h.cols();
  const double c2 = 1.0 / ((d - 1.0) * (d - 1.0));

  // Mean-centered channel blocks, kept for the backward pass: with the
  // inner-product kernel, d HSIC(e_i,e_j) / d e_i = 2 c (e~_i . e~_j) e~_j.
  auto centered = std::make_shared<std::vector<double>>();
  centered->resize(node_ids.size() * static_cast<std::size_t>(width));
  double total = 0.0;
  for (std::size_t u = 0; u < node_ids.size(); ++u) {
    const double* row = hv.data() + static_cast<std::size_t>(node_ids[u]) * width;
    double* crow = centered->data() + u * static_cast<std::size_t>(width);
    for (int m = 0; m < channels; ++m) {
      double mean = 0.0;
      for (int t = 0; t < d; ++t) mean += row[m * d + t];
      mean /= d;
      for (int t = 0; t < d; ++t) crow[m * d + t] = row[m * d + t] - mean;
    }
    for (int i = 0; i < channels; ++i) {
      for (int j = i + 1; j < channels; ++j) {
        // Ordered pairs (i,j) and (j,i) are equal by symmetry; add both.
        const double pair = hsic_inner(std::span(row + i * d, static_cast<std::size_t>(d)),
                                       std::span(row + j * d, static_cast<std::size_t>(d)));
        total += 2.0 * pair;
      }
    }
  }
  out.mutable_value()[0] = total;

  if (ad::recording(out)) {
    auto hn = h.node();
    auto on = out.node();
    auto ids = node_ids;
    ad::active_tape()->record(out.node(), {h.node()}, [hn, on, ids, centered, channels, d, width, c2]() {
      if (!hn->requires_grad) return;
      hn->ensure_grad();
      const double g = on->grad[0];
      if (g == 0.0) return;
      for (std::size_t u = 0; u < ids.size(); ++u) {
        const double* crow = centered->data() + u * static_cast<std::size_t>(width);
        double* grow = hn->grad.data() + static_cast<std::size_t>(ids[u]) * width;
        for (int i = 0; i < channels; ++i) {
          for (int j = i + 1; j < channels; ++j) {
            double s = 0.0;
            for (int t = 0; t < d; ++t) s += crow[i * d + t] * crow[j * d + t];
            // Factor 4 = 2 ordered pairs x the derivative's factor 2.
            const double coeff = g * 4.0 * c2 * s;
            for (int t = 0; t < d; ++t) {
              grow[i * d + t] += coeff * crow[j * d + t];
              grow[j * d + t] += coeff * crow[i * d + t];
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace ipgdn::hsic
