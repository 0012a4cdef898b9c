#pragma once

#include <vector>

#include "ipgdn/graph.hpp"
#include "ipgdn/rng.hpp"
#include "ipgdn/tensor.hpp"

namespace ipgdn {

/// Per-channel projection parameters of one disentangle layer: M weight
/// matrices (f_in x d) and M bias rows (1 x d), with d the channel width.
struct DisentangleLayerParams {
  std::vector<ad::Tensor> weights;
  std::vector<ad::Tensor> biases;

  int channels() const { return static_cast<int>(weights.size()); }
  int input_width() const { return weights.empty() ? 0 : weights.front().rows(); }
  int channel_width() const { return weights.empty() ? 0 : weights.front().cols(); }
  int output_width() const { return channels() * channel_width(); }

  /// Uniform Glorot-style init in +-sqrt(6/(fan_in+fan_out)); biases zero.
  static DisentangleLayerParams glorot(int f_in, int channels, int channel_width, Rng& rng);
};

/// One propagation step over the densely normalized adjacency:
/// activation(A_norm * H * W), with activation = ReLU when `activation` is
/// set and identity otherwise.
ad::Tensor gcn_layer(const ad::Tensor& h, const ad::Tensor& a_norm, const ad::Tensor& w,
                     bool activation);

/// Projection of rows of `x` into channel m: l2-normalized ReLU(x W_m + b_m).
/// Rows whose pre-normalization vector is (near-)zero stay zero.
ad::Tensor channel_project(const ad::Tensor& x, const DisentangleLayerParams& params, int m,
                           double eps = 1e-12);

/// Per-iteration neighbor-to-channel assignment probabilities, one
/// (directed-edge x channels) matrix per routing iteration.
struct RoutingTrace {
  std::vector<ad::Tensor> assignments;
};

/// Iterative soft assignment of neighbors to channels. `z` holds one n x d
/// projection matrix per channel; `edge_src`/`edge_nbr` list directed
/// neighbor pairs (canonical order). Anchors start at each node's own
/// projection; every iteration recomputes assignments from the previous
/// anchors, then updates anchors as the l2-normalized weighted neighbor sum.
/// Returns one n x d anchor matrix per channel, differentiable through all
/// T iterations.
std::vector<ad::Tensor> route_channels(const std::vector<ad::Tensor>& z,
                                       const std::vector<int>& edge_src,
                                       const std::vector<int>& edge_nbr, int num_nodes,
                                       int iterations, RoutingTrace* trace = nullptr);

/// Single-node form of route_channels: `z_self` and each neighbor entry hold
/// one channel per row (M x d). Returns the M x d anchor matrix.
ad::Tensor neighborhood_routing(const ad::Tensor& z_self,
                                const std::vector<ad::Tensor>& z_neighbors, int iterations,
                                RoutingTrace* trace = nullptr);

struct DisentangleOutput {
  ad::Tensor pre_dropout;  // n x (M*d); each channel block unit-or-zero norm
  ad::Tensor output;       // pre_dropout after dropout
};

/// Full disentangle layer: project every node into M channels, run
/// neighborhood routing over the graph's edges, concatenate the channel
/// anchors, and apply dropout.
DisentangleOutput disentangle_layer(const ad::Tensor& h, const Graph& g,
                                    const DisentangleLayerParams& params, int iterations,
                                    double dropout_rate, bool training, Rng& rng,
                                    RoutingTrace* trace = nullptr);

/// Directed neighbor pairs (src=u, nbr=v) in canonical ascending order.
void directed_edges(const Graph& g, std::vector<int>& edge_src, std::vector<int>& edge_nbr);

}  // namespace ipgdn
