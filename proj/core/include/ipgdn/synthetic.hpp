#pragma once

#include <cstdint>
#include <vector>

#include "ipgdn/graph.hpp"

namespace ipgdn {

/// Generator knobs beyond the planted-partition core. Defaults give a graph
/// where every factor's community structure is recoverable but noisy.
struct SynthOptions {
  double feature_noise = 0.1;  // stddev of Gaussian noise on one-hot indicators
  int train_per_class = 20;    // stratified training nodes per class
  double val_fraction = 0.2;   // share of all nodes used for validation
};

struct SynthFactorGraph {
  Graph graph;
  /// factor_communities[k][u] = community of node u under factor k.
  std::vector<std::vector<int>> factor_communities;
};

/// Union of `num_factors` independent planted-partition graphs over the same
/// node set. Each factor assigns nodes to equally sized communities; a pair is
/// wired with probability p_in inside a community and p_out across. Features
/// concatenate noisy one-hot community indicators per factor; labels come from
/// factor 0's communities.
SynthFactorGraph synth_factor_graph(int n, int num_factors, int communities_per_factor,
                                    double p_in, double p_out, std::uint64_t seed,
                                    const SynthOptions& opt = {});

}  // namespace ipgdn
