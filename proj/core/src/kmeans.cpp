#include "ipgdn/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ipgdn/rng.hpp"

namespace ipgdn::eval {

namespace {

double sq_dist(const double* a, const double* b, int d) {
  double acc = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

ClusteringResult lloyd(const ad::Tensor& points, int k, Rng rng, int max_iters) {
  const int n = points.rows();
  const int d = points.cols();
  const double* x = points.value().data();

  // k-means++ seeding.
  std::vector<double> centroids(static_cast<std::size_t>(k) * d);
  std::vector<double> min_dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  {
    const int first = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    std::copy_n(x + static_cast<std::size_t>(first) * d, d, centroids.begin());
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      const double* prev = centroids.data() + static_cast<std::size_t>(c - 1) * d;
      for (int i = 0; i < n; ++i) {
        min_dist[static_cast<std::size_t>(i)] =
            std::min(min_dist[static_cast<std::size_t>(i)], sq_dist(x + static_cast<std::size_t>(i) * d, prev, d));
        total += min_dist[static_cast<std::size_t>(i)];
      }
      int pick = n - 1;
      if (total > 0.0) {
        const double target = rng.uniform01() * total;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          acc += min_dist[static_cast<std::size_t>(i)];
          if (acc >= target) {
            pick = i;
            break;
          }
        }
      } else {
        pick = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
      }
      std::copy_n(x + static_cast<std::size_t>(pick) * d, d, centroids.begin() + static_cast<std::size_t>(c) * d);
    }
  }

  ClusteringResult result;
  result.assignments.assign(static_cast<std::size_t>(n), 0);
  std::vector<long> counts(static_cast<std::size_t>(k), 0);

  for (int iter = 0; iter < max_iters; ++iter) {
    // Assign.
    bool changed = iter == 0;
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(x + static_cast<std::size_t>(i) * d, centroids.data(), d);
      for (int c = 1; c < k; ++c) {
        const double dist = sq_dist(x + static_cast<std::size_t>(i) * d,
                                    centroids.data() + static_cast<std::size_t>(c) * d, d);
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (result.assignments[static_cast<std::size_t>(i)] != best) changed = true;
      result.assignments[static_cast<std::size_t>(i)] = best;
      inertia += best_d;
    }
    result.inertia = inertia;
    result.inertia_trace.push_back(inertia);
    if (!changed && iter > 0) break;

    // Update.
    std::fill(counts.begin(), counts.end(), 0);
    std::vector<double> sums(static_cast<std::size_t>(k) * d, 0.0);
    for (int i = 0; i < n; ++i) {
      const int c = result.assignments[static_cast<std::size_t>(i)];
      ++counts[static_cast<std::size_t>(c)];
      for (int j = 0; j < d; ++j) sums[static_cast<std::size_t>(c) * d + j] += x[static_cast<std::size_t>(i) * d + j];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        for (int j = 0; j < d; ++j)
          centroids[static_cast<std::size_t>(c) * d + j] =
              sums[static_cast<std::size_t>(c) * d + j] / counts[static_cast<std::size_t>(c)];
      } else {
        // Re-seed an empty cluster from the point farthest from its centroid.
        int farthest = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const int a = result.assignments[static_cast<std::size_t>(i)];
          const double dist = sq_dist(x + static_cast<std::size_t>(i) * d,
                                      centroids.data() + static_cast<std::size_t>(a) * d, d);
          if (dist > far_d) {
            far_d = dist;
            farthest = i;
          }
        }
        std::copy_n(x + static_cast<std::size_t>(farthest) * d, d,
                    centroids.begin() + static_cast<std::size_t>(c) * d);
      }
    }
  }

  result.centroids = ad::Tensor(k, d, std::move(centroids));
  return result;
}

}  // namespace

std::vector<ClusteringResult> kmeans_runs(const ad::Tensor& points, int k, std::uint64_t seed,
                                          int restarts) {
  if (k <= 0) throw ValidationError("kmeans: k must be positive");
  if (k > points.rows()) {
    throw ValidationError("kmeans: k=" + std::to_string(k) + " exceeds point count " +
                          std::to_string(points.rows()));
  }
  if (restarts < 1) throw ValidationError("kmeans: restarts must be >= 1");

  const Rng base(seed);
  std::vector<ClusteringResult> runs;
  runs.reserve(static_cast<std::size_t>(restarts));
  for (int r = 0; r < restarts; ++r) {
    runs.push_back(lloyd(points, k, base.fork(static_cast<std::uint64_t>(r)), 100));
  }
  return runs;
}

ClusteringResult kmeans(const ad::Tensor& points, int k, std::uint64_t seed, int restarts) {
  auto runs = kmeans_runs(points, k, seed, restarts);
  std::size_t best = 0;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].inertia < runs[best].inertia) best = i;
  }
  return runs[best];
}

}  // namespace ipgdn::eval
