#pragma once

#include <cstdint>
#include <vector>

#include "ipgdn/tensor.hpp"

namespace ipgdn::eval {

struct ClusteringResult {
  std::vector<int> assignments;        // per row, in [0, k)
  ad::Tensor centroids;                // k x d
  double inertia = 0.0;                // sum of squared distances to centroids
  std::vector<double> inertia_trace;   // per Lloyd iteration, non-increasing
};

/// Lloyd iterations from k-means++ style seeding. Runs `restarts` independent
/// seeded attempts and returns the best by inertia. Deterministic given seed.
/// Empty clusters are re-seeded from the point farthest from its centroid.
ClusteringResult kmeans(const ad::Tensor& points, int k, std::uint64_t seed, int restarts = 1);

/// All restart results, in run order, with the same per-run seeding as
/// kmeans(). Lets callers report both averaged and best-run metrics.
std::vector<ClusteringResult> kmeans_runs(const ad::Tensor& points, int k, std::uint64_t seed,
                                          int restarts);

}  // namespace ipgdn::eval
