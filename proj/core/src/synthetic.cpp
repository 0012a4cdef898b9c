#include "ipgdn/synthetic.hpp"

#include <algorithm>
#include <numeric>

#include "ipgdn/rng.hpp"

namespace ipgdn {

SynthFactorGraph synth_factor_graph(int n, int num_factors, int communities_per_factor,
                                    double p_in, double p_out, std::uint64_t seed,
                                    const SynthOptions& opt) {
  if (n <= 0 || num_factors <= 0 || communities_per_factor <= 0) {
    throw ConfigError("synth_factor_graph: counts must be positive");
  }
  if (p_in < 0.0 || p_in > 1.0 || p_out < 0.0 || p_out > 1.0) {
    throw ConfigError("synth_factor_graph: probabilities must lie in [0,1]");
  }
  if (n % communities_per_factor != 0) {
    throw ConfigError("synth_factor_graph: n=" + std::to_string(n) +
                      " not divisible by communities_per_factor=" +
                      std::to_string(communities_per_factor));
  }
  if (opt.train_per_class * communities_per_factor > n) {
    throw ConfigError("synth_factor_graph: train_per_class too large for n");
  }

  Rng rng(seed);
  const int q = communities_per_factor;
  const int block = n / q;

  SynthFactorGraph result;
  auto& g = result.graph;
  g.n = n;
  g.num_classes = q;

  // Community assignments: a fresh shuffled equal partition per factor.
  result.factor_communities.resize(static_cast<std::size_t>(num_factors));
  for (int k = 0; k < num_factors; ++k) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    auto& comm = result.factor_communities[static_cast<std::size_t>(k)];
    comm.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) comm[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i / block;
  }

  // Union of per-factor planted partitions.
  std::vector<std::pair<int, int>> raw_edges;
  for (int k = 0; k < num_factors; ++k) {
    const auto& comm = result.factor_communities[static_cast<std::size_t>(k)];
    for (int u = 0; u < n; ++u) {
      for (int v = u + 1; v < n; ++v) {
        const double p = comm[static_cast<std::size_t>(u)] == comm[static_cast<std::size_t>(v)] ? p_in : p_out;
        if (p > 0.0 && rng.uniform01() < p) raw_edges.emplace_back(u, v);
      }
    }
  }
  finalize_edges(g, std::move(raw_edges));

  // Features: per factor a noisy one-hot community indicator, concatenated.
  g.f = num_factors * q;
  {
    std::vector<double> data(static_cast<std::size_t>(n) * g.f, 0.0);
    for (int u = 0; u < n; ++u) {
      for (int k = 0; k < num_factors; ++k) {
        const int c = result.factor_communities[static_cast<std::size_t>(k)][static_cast<std::size_t>(u)];
        data[static_cast<std::size_t>(u) * g.f + k * q + c] = 1.0;
      }
    }
    if (opt.feature_noise > 0.0) {
      for (auto& v : data) v += opt.feature_noise * rng.normal();
    }
    g.features = ad::Tensor(n, g.f, std::move(data));
  }

  g.labels = result.factor_communities.front();

  // Stratified split: train_per_class per label, then a validation slice,
  // remainder is test.
  {
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    for (int c = 0; c < q; ++c) {
      std::vector<int> members;
      for (int u = 0; u < n; ++u)
        if (g.labels[static_cast<std::size_t>(u)] == c) members.push_back(u);
      rng.shuffle(members);
      const int want = std::min<int>(opt.train_per_class, static_cast<int>(members.size()));
      for (int i = 0; i < want; ++i) {
        g.train_mask.push_back(members[static_cast<std::size_t>(i)]);
        taken[static_cast<std::size_t>(members[static_cast<std::size_t>(i)])] = 1;
      }
    }
    std::vector<int> rest;
    for (int u = 0; u < n; ++u)
      if (!taken[static_cast<std::size_t>(u)]) rest.push_back(u);
    rng.shuffle(rest);
    const int val_count = std::min<int>(static_cast<int>(rest.size()),
                                        static_cast<int>(opt.val_fraction * n));
    g.val_mask.assign(rest.begin(), rest.begin() + val_count);
    g.test_mask.assign(rest.begin() + val_count, rest.end());
    std::sort(g.train_mask.begin(), g.train_mask.end());
    std::sort(g.val_mask.begin(), g.val_mask.end());
    std::sort(g.test_mask.begin(), g.test_mask.end());
  }

  validate_graph(g);
  return result;
}

}  // namespace ipgdn
