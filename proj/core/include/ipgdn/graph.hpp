#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "ipgdn/tensor.hpp"

namespace ipgdn {

/// An attributed undirected graph with node features, labels, and
/// train/val/test splits. Edges are canonical (u < v, deduplicated) and the
/// stored edge set never contains self-loops.
struct Graph {
  int n = 0;            // node count
  int f = 0;            // feature dimension
  int num_classes = 0;  // C; labels are in [0, C) or -1 for unlabeled
  ad::Tensor features;  // n x f
  std::vector<std::pair<int, int>> edges;  // sorted, u < v, unique
  std::vector<int> labels;                 // size n, -1 = unlabeled
  std::vector<int> train_mask;             // sorted node ids, pairwise disjoint
  std::vector<int> val_mask;
  std::vector<int> test_mask;
  std::vector<std::vector<int>> adjacency;  // per node, sorted neighbor ids

  std::size_t edge_count() const { return edges.size(); }
  int degree(int u) const { return static_cast<int>(adjacency[static_cast<std::size_t>(u)].size()); }
};

/// Canonicalizes a raw edge list (dedup, u < v) and builds sorted adjacency.
/// Rejects self-loops and out-of-range endpoints.
void finalize_edges(Graph& g, std::vector<std::pair<int, int>> raw_edges);

/// Checks every Graph invariant, throwing ValidationError on the first hit.
void validate_graph(const Graph& g);

/// Loads features.tsv / edges.tsv / labels.tsv / splits.json from `data_dir`.
Graph load_graph(const std::filesystem::path& data_dir);

/// Writes the four dataset files. Feature values round-trip bit-exactly.
void save_graph(const Graph& g, const std::filesystem::path& data_dir);

/// Dense symmetric normalization of the adjacency with self-loops:
/// entry (i,j) = A~(i,j) / sqrt(d~(i) d~(j)) where A~ = A + I.
ad::Tensor normalized_adjacency(const Graph& g);

}  // namespace ipgdn
