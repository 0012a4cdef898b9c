#include "ipgdn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ipgdn::eval {

namespace {

void check_mask(const std::vector<int>& pred, const std::vector<int>& truth,
                const std::vector<int>& mask) {
  if (pred.size() != truth.size()) {
    throw ValidationError("metrics: pred and truth lengths differ");
  }
  if (mask.empty()) throw ValidationError("metrics: empty mask");
  for (int id : mask) {
    if (id < 0 || id >= static_cast<int>(truth.size())) {
      throw ValidationError("metrics: mask id " + std::to_string(id) + " out of range");
    }
    if (truth[static_cast<std::size_t>(id)] < 0) {
      throw ValidationError("metrics: mask contains unlabeled node " + std::to_string(id));
    }
  }
}

double entropy(const std::vector<long>& counts, long total) {
  double h = 0.0;
  for (long c : counts) {
    if (c > 0) {
      const double p = static_cast<double>(c) / total;
      h -= p * std::log(p);
    }
  }
  return h;
}

inline double pairs2(long m) { return 0.5 * static_cast<double>(m) * (m - 1); }

}  // namespace

std::vector<int> argmax_rows(const ad::Tensor& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  const auto v = scores.value();
  const int cols = scores.cols();
  for (int r = 0; r < scores.rows(); ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    int best = 0;
    for (int c = 1; c < cols; ++c)
      if (v[base + c] > v[base + best]) best = c;
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                const std::vector<int>& mask) {
  check_mask(pred, truth, mask);
  long hits = 0;
  for (int id : mask)
    if (pred[static_cast<std::size_t>(id)] == truth[static_cast<std::size_t>(id)]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(mask.size());
}

double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth,
                const std::vector<int>& mask, int num_classes) {
  check_mask(pred, truth, mask);
  if (num_classes <= 0) throw ValidationError("macro_f1: num_classes must be positive");
  std::vector<long> tp(static_cast<std::size_t>(num_classes), 0);
  std::vector<long> fp(static_cast<std::size_t>(num_classes), 0);
  std::vector<long> fn(static_cast<std::size_t>(num_classes), 0);
  for (int id : mask) {
    const int p = pred[static_cast<std::size_t>(id)];
    const int t = truth[static_cast<std::size_t>(id)];
    if (p < 0 || p >= num_classes) {
      throw ValidationError("macro_f1: prediction " + std::to_string(p) + " out of range");
    }
    if (p == t) {
      ++tp[static_cast<std::size_t>(p)];
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(t)];
    }
  }
  double total = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const double denom = 2.0 * tp[static_cast<std::size_t>(c)] + fp[static_cast<std::size_t>(c)] +
                         fn[static_cast<std::size_t>(c)];
    // Classes absent from both pred and truth contribute 0.
    if (denom > 0) total += 2.0 * tp[static_cast<std::size_t>(c)] / denom;
  }
  return total / num_classes;
}

std::vector<int> hungarian_max(const std::vector<std::vector<double>>& score) {
  const int rows = static_cast<int>(score.size());
  if (rows == 0) return {};
  const int cols = static_cast<int>(score.front().size());
  const int n = std::max(rows, cols);

  // Standard potentials-based assignment on the square padded cost matrix,
  // minimizing cost = -score.
  std::vector<std::vector<double>> cost(static_cast<std::size_t>(n),
                                        std::vector<double>(static_cast<std::size_t>(n), 0.0));
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(score[static_cast<std::size_t>(r)].size()) != cols) {
      throw ValidationError("hungarian_max: ragged score matrix");
    }
    for (int c = 0; c < cols; ++c) cost[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
        -score[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }

  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<int> match(static_cast<std::size_t>(n + 1), 0);  // match[col 1..n] = row
  std::vector<int> way(static_cast<std::size_t>(n + 1), 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), kInf);
    std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost[static_cast<std::size_t>(i0 - 1)][static_cast<std::size_t>(j - 1)] -
                           u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<std::size_t>(rows), -1);
  for (int j = 1; j <= n; ++j) {
    const int i = match[static_cast<std::size_t>(j)];
    if (i >= 1 && i <= rows && j <= cols) row_to_col[static_cast<std::size_t>(i - 1)] = j - 1;
  }
  return row_to_col;
}

ClusteringMetrics clustering_metrics(const std::vector<int>& assignments,
                                     const std::vector<int>& truth) {
  if (assignments.size() != truth.size()) {
    throw ValidationError("clustering_metrics: lengths differ, " +
                          std::to_string(assignments.size()) + " vs " +
                          std::to_string(truth.size()));
  }
  if (assignments.empty()) throw ValidationError("clustering_metrics: empty input");
  const long n = static_cast<long>(assignments.size());

  int k = 0, c = 0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] < 0) throw ValidationError("clustering_metrics: negative cluster id");
    if (truth[i] < 0) throw ValidationError("clustering_metrics: unlabeled ground truth");
    k = std::max(k, assignments[i] + 1);
    c = std::max(c, truth[i] + 1);
  }

  // Contingency table.
  std::vector<std::vector<long>> table(static_cast<std::size_t>(k),
                                       std::vector<long>(static_cast<std::size_t>(c), 0));
  std::vector<long> cluster_sizes(static_cast<std::size_t>(k), 0);
  std::vector<long> class_sizes(static_cast<std::size_t>(c), 0);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    ++table[static_cast<std::size_t>(assignments[i])][static_cast<std::size_t>(truth[i])];
    ++cluster_sizes[static_cast<std::size_t>(assignments[i])];
    ++class_sizes[static_cast<std::size_t>(truth[i])];
  }

  ClusteringMetrics m;

  // Accuracy under the best one-to-one cluster-to-class matching.
  {
    std::vector<std::vector<double>> score(static_cast<std::size_t>(k),
                                           std::vector<double>(static_cast<std::size_t>(c), 0.0));
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < c; ++b)
        score[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
            static_cast<double>(table[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]);
    const auto matched = hungarian_max(score);
    long hits = 0;
    for (int a = 0; a < k; ++a) {
      const int b = matched[static_cast<std::size_t>(a)];
      if (b >= 0) hits += table[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    }
    m.clu_acc = static_cast<double>(hits) / n;
  }

  // NMI with arithmetic-mean normalization.
  {
    const double ha = entropy(cluster_sizes, n);
    const double hb = entropy(class_sizes, n);
    double mi = 0.0;
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < c; ++b) {
        const long nij = table[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        if (nij > 0) {
          const double pij = static_cast<double>(nij) / n;
          mi += pij * std::log(static_cast<double>(n) * nij /
                               (static_cast<double>(cluster_sizes[static_cast<std::size_t>(a)]) *
                                class_sizes[static_cast<std::size_t>(b)]));
        }
      }
    }
    if (ha == 0.0 && hb == 0.0) {
      m.nmi = 1.0;  // both partitions constant, hence identical
    } else {
      const double denom = 0.5 * (ha + hb);
      m.nmi = denom > 0.0 ? mi / denom : 0.0;
    }
  }

  // Pair counts shared by ARI, precision, and F1.
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < c; ++b) sum_ij += pairs2(table[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]);
  for (long s : cluster_sizes) sum_a += pairs2(s);
  for (long s : class_sizes) sum_b += pairs2(s);
  const double total_pairs = pairs2(n);

  {
    const double expected = total_pairs > 0.0 ? sum_a * sum_b / total_pairs : 0.0;
    const double max_index = 0.5 * (sum_a + sum_b);
    m.ari = max_index == expected ? (sum_ij == expected ? 1.0 : 0.0)
                                  : (sum_ij - expected) / (max_index - expected);
  }

  {
    // Same-cluster pairs as "positives": tp = same cluster & same class.
    const double tp = sum_ij;
    const double fp = sum_a - sum_ij;
    const double fn = sum_b - sum_ij;
    m.precision = sum_a > 0.0 ? tp / (tp + fp) : 0.0;
    const double recall = sum_b > 0.0 ? tp / (tp + fn) : 0.0;
    m.f1 = (m.precision + recall) > 0.0 ? 2.0 * m.precision * recall / (m.precision + recall) : 0.0;
  }

  return m;
}

}  // namespace ipgdn::eval
