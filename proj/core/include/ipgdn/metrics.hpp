#pragma once

#include <vector>

#include "ipgdn/tensor.hpp"

namespace ipgdn::eval {

/// Index of the per-row maximum (first maximum wins ties).
std::vector<int> argmax_rows(const ad::Tensor& scores);

/// Fraction of masked nodes with pred == truth. Every masked node must carry
/// a label; the mask must be non-empty.
double accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                const std::vector<int>& mask);

/// Unweighted mean of per-class F1 over all `num_classes` classes. Classes
/// absent from both predictions and truth within the mask contribute 0.
double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth,
                const std::vector<int>& mask, int num_classes);

struct ClusteringMetrics {
  double clu_acc = 0.0;    // optimal cluster-to-class matching accuracy
  double nmi = 0.0;        // arithmetic-mean normalization
  double ari = 0.0;        // adjusted Rand index
  double precision = 0.0;  // pairwise same-cluster precision
  double f1 = 0.0;         // pairwise F1
};

/// Agreement between a clustering and ground-truth classes. Invariant under
/// any permutation of cluster ids.
ClusteringMetrics clustering_metrics(const std::vector<int>& assignments,
                                     const std::vector<int>& truth);

/// Maximum-total assignment on a rectangular non-negative score matrix
/// (rows x cols); returns per-row matched column or -1. Used for matching
/// cluster ids to class ids.
std::vector<int> hungarian_max(const std::vector<std::vector<double>>& score);

}  // namespace ipgdn::eval
