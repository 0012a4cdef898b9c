#include "ipgdn/layers.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace ipgdn {

DisentangleLayerParams DisentangleLayerParams::glorot(int f_in, int channels, int channel_width,
                                                      Rng& rng) {
  if (f_in <= 0 || channels <= 0 || channel_width <= 0) {
    throw ConfigError("layer params: dimensions must be positive");
  }
  DisentangleLayerParams p;
  const double bound = std::sqrt(6.0 / (f_in + channel_width));
  for (int m = 0; m < channels; ++m) {
    ad::Tensor w(f_in, channel_width, 0.0, /*requires_grad=*/true);
    auto wv = w.mutable_value();
    for (auto& v : wv) v = rng.uniform(-bound, bound);
    p.weights.push_back(w);
    p.biases.emplace_back(1, channel_width, 0.0, /*requires_grad=*/true);
  }
  return p;
}

ad::Tensor gcn_layer(const ad::Tensor& h, const ad::Tensor& a_norm, const ad::Tensor& w,
                     bool activation) {
  if (a_norm.rows() != a_norm.cols() || a_norm.rows() != h.rows()) {
    throw ShapeError("gcn_layer: adjacency " + ad::shape_string(a_norm) +
                     " incompatible with features " + ad::shape_string(h));
  }
  ad::Tensor propagated = ad::matmul(a_norm, ad::matmul(h, w));
  return activation ? ad::relu(propagated) : propagated;
}

ad::Tensor channel_project(const ad::Tensor& x, const DisentangleLayerParams& params, int m,
                           double eps) {
  if (m < 0 || m >= params.channels()) {
    throw ValidationError("channel_project: channel " + std::to_string(m) + " out of range");
  }
  ad::Tensor z = ad::relu(ad::add(ad::matmul(x, params.weights[static_cast<std::size_t>(m)]),
                                  params.biases[static_cast<std::size_t>(m)]));
  return ad::row_l2_normalize(z, eps);
}

std::vector<ad::Tensor> route_channels(const std::vector<ad::Tensor>& z,
                                       const std::vector<int>& edge_src,
                                       const std::vector<int>& edge_nbr, int num_nodes,
                                       int iterations, RoutingTrace* trace) {
  if (z.empty()) throw ValidationError("route_channels: no channels");
  if (iterations < 1) throw ConfigError("route_channels: iterations must be >= 1");
  if (edge_src.size() != edge_nbr.size()) {
    throw ShapeError("route_channels: edge arrays differ in length");
  }
  const int channels = static_cast<int>(z.size());

  std::vector<ad::Tensor> z_nbr;
  z_nbr.reserve(z.size());
  for (const auto& zm : z) z_nbr.push_back(ad::gather_rows(zm, edge_nbr));

  std::vector<ad::Tensor> anchors = z;  // e^(0) = own projection
  for (int t = 0; t < iterations; ++t) {
    // Assignment from the previous anchors, softmax across channels per
    // neighbor pair.
    std::vector<ad::Tensor> logits;
    logits.reserve(z.size());
    for (int m = 0; m < channels; ++m) {
      logits.push_back(ad::indexed_rowwise_dot(z_nbr[static_cast<std::size_t>(m)],
                                               anchors[static_cast<std::size_t>(m)], edge_src));
    }
    ad::Tensor p = ad::row_softmax(ad::concat_cols(logits));
    if (trace != nullptr) trace->assignments.push_back(p);

    for (int m = 0; m < channels; ++m) {
      ad::Tensor agg =
          ad::weighted_segment_sum(z_nbr[static_cast<std::size_t>(m)], p, m, edge_src, num_nodes);
      anchors[static_cast<std::size_t>(m)] =
          ad::row_l2_normalize(ad::add(z[static_cast<std::size_t>(m)], agg));
    }
  }
  return anchors;
}

ad::Tensor neighborhood_routing(const ad::Tensor& z_self,
                                const std::vector<ad::Tensor>& z_neighbors, int iterations,
                                RoutingTrace* trace) {
  const int channels = z_self.rows();
  const int d = z_self.cols();
  for (const auto& zn : z_neighbors) {
    if (zn.rows() != channels || zn.cols() != d) {
      throw ShapeError("neighborhood_routing: neighbor shape " + ad::shape_string(zn) +
                       " does not match " + ad::shape_string(z_self));
    }
  }

  // Re-expressed as a 1-node graph: node 0 is the center, nodes 1..K its
  // neighbors; per-channel matrices stack the center row above the neighbors.
  std::vector<ad::Tensor> z(static_cast<std::size_t>(channels));
  for (int m = 0; m < channels; ++m) {
    std::vector<ad::Tensor> rows;
    rows.push_back(ad::gather_rows(z_self, {m}));
    for (const auto& zn : z_neighbors) rows.push_back(ad::gather_rows(zn, {m}));
    z[static_cast<std::size_t>(m)] = ad::concat_rows(rows);
  }
  std::vector<int> edge_src(z_neighbors.size(), 0);
  std::vector<int> edge_nbr(z_neighbors.size());
  std::iota(edge_nbr.begin(), edge_nbr.end(), 1);

  auto anchors = route_channels(z, edge_src, edge_nbr,
                                static_cast<int>(z_neighbors.size()) + 1, iterations, trace);
  std::vector<ad::Tensor> center_rows;
  center_rows.reserve(anchors.size());
  for (const auto& a : anchors) center_rows.push_back(ad::gather_rows(a, {0}));
  return ad::concat_rows(center_rows);
}

DisentangleOutput disentangle_layer(const ad::Tensor& h, const Graph& g,
                                    const DisentangleLayerParams& params, int iterations,
                                    double dropout_rate, bool training, Rng& rng,
                                    RoutingTrace* trace) {
  if (h.rows() != g.n) {
    throw ShapeError("disentangle_layer: features " + ad::shape_string(h) + " but graph has " +
                     std::to_string(g.n) + " nodes");
  }
  if (h.cols() != params.input_width()) {
    throw ShapeError("disentangle_layer: features " + ad::shape_string(h) +
                     " but layer expects width " + std::to_string(params.input_width()));
  }

  std::vector<ad::Tensor> z;
  z.reserve(static_cast<std::size_t>(params.channels()));
  for (int m = 0; m < params.channels(); ++m) z.push_back(channel_project(h, params, m));

  std::vector<int> edge_src, edge_nbr;
  directed_edges(g, edge_src, edge_nbr);
  auto anchors = route_channels(z, edge_src, edge_nbr, g.n, iterations, trace);

  DisentangleOutput out;
  out.pre_dropout = ad::concat_cols(anchors);
  out.output = ad::dropout(out.pre_dropout, dropout_rate, training, rng);
  return out;
}

void directed_edges(const Graph& g, std::vector<int>& edge_src, std::vector<int>& edge_nbr) {
  edge_src.clear();
  edge_nbr.clear();
  edge_src.reserve(2 * g.edges.size());
  edge_nbr.reserve(2 * g.edges.size());
  for (int u = 0; u < g.n; ++u) {
    for (int v : g.adjacency[static_cast<std::size_t>(u)]) {
      edge_src.push_back(u);
      edge_nbr.push_back(v);
    }
  }
}

}  // namespace ipgdn
