#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ipgdn/kmeans.hpp"
#include "ipgdn/metrics.hpp"
#include "ipgdn/pca.hpp"
#include "testutil.hpp"

using namespace ipgdn;
namespace tu = testutil;

namespace {

/// Brute-force pair-counting oracle for ARI, pairwise precision and F1.
struct PairOracle {
  double ari = 0.0, precision = 0.0, f1 = 0.0;
};

PairOracle pair_oracle(const std::vector<int>& a, const std::vector<int>& b) {
  const int n = static_cast<int>(a.size());
  double same_same = 0, same_diff = 0, diff_same = 0, total = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const bool sa = a[static_cast<std::size_t>(i)] == a[static_cast<std::size_t>(j)];
      const bool sb = b[static_cast<std::size_t>(i)] == b[static_cast<std::size_t>(j)];
      total += 1;
      if (sa && sb) same_same += 1;
      else if (sa) same_diff += 1;
      else if (sb) diff_same += 1;
    }
  }
  PairOracle o;
  const double sum_a = same_same + same_diff;
  const double sum_b = same_same + diff_same;
  const double expected = total > 0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  o.ari = max_index == expected ? (same_same == expected ? 1.0 : 0.0)
                                : (same_same - expected) / (max_index - expected);
  o.precision = sum_a > 0 ? same_same / sum_a : 0.0;
  const double recall = sum_b > 0 ? same_same / sum_b : 0.0;
  o.f1 = (o.precision + recall) > 0 ? 2 * o.precision * recall / (o.precision + recall) : 0.0;
  return o;
}

/// Brute-force best-matching accuracy over all one-to-one cluster-to-class
/// mappings (cluster and class counts <= 3 here, so 3! permutations).
double matching_acc_oracle(const std::vector<int>& a, const std::vector<int>& b, int k, int c) {
  const int s = std::max(k, c);
  std::vector<int> perm(static_cast<std::size_t>(s));
  std::iota(perm.begin(), perm.end(), 0);
  long best = 0;
  do {
    long hits = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (perm[static_cast<std::size_t>(a[i])] == b[i]) ++hits;
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(a.size());
}

/// All partitions of n items into at most max_clusters nonempty clusters,
/// in canonical labeling (first occurrence order).
std::vector<std::vector<int>> all_partitions(int n, int max_clusters) {
  std::vector<std::vector<int>> out;
  std::vector<int> current(static_cast<std::size_t>(n), 0);
  auto rec = [&](auto&& self, int i, int used) -> void {
    if (i == n) {
      out.push_back(current);
      return;
    }
    for (int c = 0; c <= used && c < max_clusters; ++c) {
      current[static_cast<std::size_t>(i)] = c;
      self(self, i + 1, std::max(used, c + 1));
    }
  };
  rec(rec, 0, 0);
  return out;
}

}  // namespace

TEST_CASE("accuracy trivial cases and counting oracle") {
  const std::vector<int> truth{0, 1, 1, 0, 2, 2};
  const std::vector<int> mask{0, 1, 2, 3, 4, 5};
  CHECK(eval::accuracy(truth, truth, mask) == 1.0);

  std::vector<int> half{0, 1, 1, 1, 0, 2};  // 4 of 6 mask nodes incorrect? count below
  long hits = 0;
  for (int id : mask) hits += half[static_cast<std::size_t>(id)] == truth[static_cast<std::size_t>(id)];
  CHECK(eval::accuracy(half, truth, mask) == doctest::Approx(static_cast<double>(hits) / 6));

  Rng rng(3);
  std::vector<int> pred(50), t2(50), m2(50);
  std::iota(m2.begin(), m2.end(), 0);
  for (int i = 0; i < 50; ++i) {
    pred[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(4));
    t2[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(4));
  }
  long expect = 0;
  for (int i = 0; i < 50; ++i) expect += pred[static_cast<std::size_t>(i)] == t2[static_cast<std::size_t>(i)];
  CHECK(eval::accuracy(pred, t2, m2) == static_cast<double>(expect) / 50.0);
}

TEST_CASE("accuracy on exactly half the mask") {
  const std::vector<int> truth{0, 0, 1, 1};
  const std::vector<int> pred{0, 1, 1, 0};
  CHECK(eval::accuracy(pred, truth, {0, 1, 2, 3}) == 0.5);
}

TEST_CASE("accuracy validates the mask") {
  const std::vector<int> truth{0, -1};
  CHECK_THROWS_AS(eval::accuracy({0, 0}, truth, {}), ValidationError);
  CHECK_THROWS_AS(eval::accuracy({0, 0}, truth, {1}), ValidationError);
}

TEST_CASE("macro F1: perfect, mirrored binary case, and confusion-matrix oracle") {
  const std::vector<int> truth{0, 0, 1, 1, 2};
  CHECK(eval::macro_f1(truth, truth, {0, 1, 2, 3, 4}, 3) == 1.0);

  // Class 1: TP=1 (id0), FP=1 (id2), FN=1 (id1); class 0 mirrored.
  const std::vector<int> t2{1, 1, 0, 0};
  const std::vector<int> p2{1, 0, 1, 0};
  CHECK(eval::macro_f1(p2, t2, {0, 1, 2, 3}, 2) == doctest::Approx(0.5).epsilon(1e-12));

  Rng rng(17);
  const int n = 60, c = 4;
  std::vector<int> pred(n), truth3(n), mask(n);
  std::iota(mask.begin(), mask.end(), 0);
  for (int i = 0; i < n; ++i) {
    pred[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(c));
    truth3[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(c));
  }
  // Independent confusion-matrix evaluation.
  double expected = 0.0;
  for (int cls = 0; cls < c; ++cls) {
    double tp = 0, fp = 0, fn = 0;
    for (int i = 0; i < n; ++i) {
      if (pred[static_cast<std::size_t>(i)] == cls && truth3[static_cast<std::size_t>(i)] == cls) tp += 1;
      if (pred[static_cast<std::size_t>(i)] == cls && truth3[static_cast<std::size_t>(i)] != cls) fp += 1;
      if (pred[static_cast<std::size_t>(i)] != cls && truth3[static_cast<std::size_t>(i)] == cls) fn += 1;
    }
    const double denom = 2 * tp + fp + fn;
    if (denom > 0) expected += 2 * tp / denom;
  }
  expected /= c;
  CHECK(std::abs(eval::macro_f1(pred, truth3, mask, c) - expected) < 1e-12);
}

TEST_CASE("kmeans separates two well-separated blobs exactly") {
  Rng rng(5);
  ad::Tensor pts(20, 2);
  for (int i = 0; i < 20; ++i) {
    const double cx = i < 10 ? 0.0 : 50.0;
    pts.set(i, 0, cx + rng.uniform(-1.0, 1.0));
    pts.set(i, 1, rng.uniform(-1.0, 1.0));
  }
  const auto result = eval::kmeans(pts, 2, 9, 4);
  for (int i = 0; i < 10; ++i) CHECK(result.assignments[static_cast<std::size_t>(i)] == result.assignments[0]);
  for (int i = 10; i < 20; ++i) CHECK(result.assignments[static_cast<std::size_t>(i)] == result.assignments[10]);
  CHECK(result.assignments[0] != result.assignments[10]);
}

TEST_CASE("kmeans with k = n drives inertia to zero") {
  Rng rng(7);
  auto pts = tu::random_tensor(6, 3, rng);
  const auto result = eval::kmeans(pts, 6, 11, 2);
  CHECK(result.inertia == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("kmeans inertia never increases across Lloyd iterations") {
  Rng rng(13);
  auto pts = tu::random_tensor(80, 4, rng);
  for (int run = 0; run < 5; ++run) {
    const auto result = eval::kmeans(pts, 5, 100 + static_cast<std::uint64_t>(run), 1);
    for (std::size_t i = 1; i < result.inertia_trace.size(); ++i) {
      CHECK(result.inertia_trace[i] <= result.inertia_trace[i - 1] + 1e-9);
    }
  }
}

TEST_CASE("kmeans is bit-deterministic given a seed and validates k") {
  Rng rng(19);
  auto pts = tu::random_tensor(30, 3, rng);
  const auto a = eval::kmeans(pts, 4, 77, 3);
  const auto b = eval::kmeans(pts, 4, 77, 3);
  CHECK(a.assignments == b.assignments);
  CHECK(a.inertia == b.inertia);
  for (std::size_t i = 0; i < a.centroids.size(); ++i)
    CHECK(a.centroids.value()[i] == b.centroids.value()[i]);
  CHECK_THROWS_AS(eval::kmeans(pts, 31, 1, 1), ValidationError);
}

TEST_CASE("clustering metrics: relabeling invariance and degenerate cases") {
  const std::vector<int> truth{0, 0, 1, 1, 2, 2};
  const std::vector<int> relabeled{2, 2, 0, 0, 1, 1};
  const auto perfect = eval::clustering_metrics(relabeled, truth);
  CHECK(perfect.clu_acc == 1.0);
  CHECK(perfect.nmi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(perfect.ari == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(perfect.f1 == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<int> single{0, 0, 0, 0};
  const std::vector<int> balanced{0, 0, 1, 1};
  const auto collapsed = eval::clustering_metrics(single, balanced);
  CHECK(collapsed.nmi == 0.0);
  CHECK(collapsed.ari == 0.0);
}

TEST_CASE("clustering metrics agree with brute-force pair enumeration on 6 points") {
  const auto partitions = all_partitions(6, 3);
  for (const auto& a : partitions) {
    for (const auto& b : partitions) {
      const auto m = eval::clustering_metrics(a, b);
      const auto o = pair_oracle(a, b);
      CHECK(m.ari == doctest::Approx(o.ari).epsilon(1e-12));
      CHECK(m.precision == doctest::Approx(o.precision).epsilon(1e-12));
      CHECK(m.f1 == doctest::Approx(o.f1).epsilon(1e-12));
      const int k = *std::max_element(a.begin(), a.end()) + 1;
      const int c = *std::max_element(b.begin(), b.end()) + 1;
      CHECK(m.clu_acc == doctest::Approx(matching_acc_oracle(a, b, k, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("clustering metrics are invariant under cluster-id permutation") {
  Rng rng(23);
  std::vector<int> a(40), truth(40);
  for (int i = 0; i < 40; ++i) {
    a[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(3));
    truth[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(3));
  }
  auto swapped = a;
  for (auto& v : swapped) v = (v + 1) % 3;
  const auto m1 = eval::clustering_metrics(a, truth);
  const auto m2 = eval::clustering_metrics(swapped, truth);
  CHECK(m1.clu_acc == m2.clu_acc);
  CHECK(m1.nmi == doctest::Approx(m2.nmi).epsilon(1e-14));
  CHECK(m1.ari == doctest::Approx(m2.ari).epsilon(1e-14));
  CHECK(m1.precision == m2.precision);
  CHECK(m1.f1 == m2.f1);
}

TEST_CASE("ARI of random balanced relabelings is centered near zero") {
  Rng rng(29);
  std::vector<int> truth(40);
  for (int i = 0; i < 40; ++i) truth[static_cast<std::size_t>(i)] = i % 2;
  double mean = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto shuffled = truth;
    rng.shuffle(shuffled);
    mean += eval::clustering_metrics(shuffled, truth).ari;
  }
  mean /= 100.0;
  CHECK(std::abs(mean) < 0.05);
}

TEST_CASE("clustering metric ranges hold on random inputs") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> a(25), b(25);
    for (int i = 0; i < 25; ++i) {
      a[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(4));
      b[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(3));
    }
    const auto m = eval::clustering_metrics(a, b);
    CHECK(m.nmi >= 0.0);
    CHECK(m.nmi <= 1.0 + 1e-12);
    CHECK(m.clu_acc >= 0.0);
    CHECK(m.clu_acc <= 1.0);
    CHECK(m.f1 >= 0.0);
    CHECK(m.f1 <= 1.0 + 1e-12);
    CHECK(m.ari <= 1.0 + 1e-12);
  }
}

TEST_CASE("pca_2d: 2-D centered data is reproduced up to rotation and sign") {
  Rng rng(37);
  ad::Tensor x(30, 2);
  for (int i = 0; i < 30; ++i) {
    x.set(i, 0, rng.uniform(-3.0, 3.0));
    x.set(i, 1, rng.uniform(-1.0, 1.0));
  }
  // center
  double m0 = 0, m1 = 0;
  for (int i = 0; i < 30; ++i) {
    m0 += x.at(i, 0);
    m1 += x.at(i, 1);
  }
  for (int i = 0; i < 30; ++i) {
    x.set(i, 0, x.at(i, 0) - m0 / 30);
    x.set(i, 1, x.at(i, 1) - m1 / 30);
  }
  auto y = eval::pca_2d(x);
  // Full-rank 2-D projection preserves pairwise distances exactly.
  for (int i = 0; i < 30; i += 5) {
    for (int j = i + 1; j < 30; j += 3) {
      const double dx0 = x.at(i, 0) - x.at(j, 0), dx1 = x.at(i, 1) - x.at(j, 1);
      const double dy0 = y.at(i, 0) - y.at(j, 0), dy1 = y.at(i, 1) - y.at(j, 1);
      CHECK(std::abs((dx0 * dx0 + dx1 * dx1) - (dy0 * dy0 + dy1 * dy1)) < 1e-9);
    }
  }
}

TEST_CASE("pca_2d: rank-1 data leaves the second coordinate numerically dead") {
  Rng rng(41);
  ad::Tensor x(25, 4);
  std::vector<double> dir{0.5, -0.25, 1.0, 0.0};
  for (int i = 0; i < 25; ++i) {
    const double t = rng.uniform(-2.0, 2.0);
    for (int c = 0; c < 4; ++c) x.set(i, c, t * dir[static_cast<std::size_t>(c)]);
  }
  auto y = eval::pca_2d(x);
  double mean = 0.0;
  for (int i = 0; i < 25; ++i) mean += y.at(i, 1);
  mean /= 25;
  double var = 0.0;
  for (int i = 0; i < 25; ++i) var += (y.at(i, 1) - mean) * (y.at(i, 1) - mean);
  var /= 24;
  CHECK(var < 1e-18);
}

TEST_CASE("pca_2d projected variance matches an independent eigen oracle") {
  Rng rng(43);
  auto x = tu::random_tensor(60, 5, rng);
  auto y = eval::pca_2d(x);

  // Oracle: power iteration with deflation on the covariance matrix.
  const int n = 60, d = 5;
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) mean[static_cast<std::size_t>(c)] += x.at(i, c) / n;
  std::vector<std::vector<double>> cov(static_cast<std::size_t>(d),
                                       std::vector<double>(static_cast<std::size_t>(d), 0.0));
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        cov[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] +=
            (x.at(i, a) - mean[static_cast<std::size_t>(a)]) *
            (x.at(i, b) - mean[static_cast<std::size_t>(b)]) / (n - 1);

  auto power_eig = [&](std::vector<std::vector<double>> m) {
    std::vector<double> v(static_cast<std::size_t>(d), 1.0);
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
      std::vector<double> next(static_cast<std::size_t>(d), 0.0);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          next[static_cast<std::size_t>(a)] += m[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] * v[static_cast<std::size_t>(b)];
      double norm = 0.0;
      for (double q : next) norm += q * q;
      norm = std::sqrt(norm);
      for (auto& q : next) q /= norm;
      lambda = norm;
      v = next;
    }
    return std::make_pair(lambda, v);
  };
  auto [l1, v1] = power_eig(cov);
  auto deflated = cov;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      deflated[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] -=
          l1 * v1[static_cast<std::size_t>(a)] * v1[static_cast<std::size_t>(b)];
  auto [l2, v2] = power_eig(deflated);

  for (int c = 0; c < 2; ++c) {
    double m2 = 0.0;
    for (int i = 0; i < n; ++i) m2 += y.at(i, c) / n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) var += (y.at(i, c) - m2) * (y.at(i, c) - m2) / (n - 1);
    const double expected = c == 0 ? l1 : l2;
    CHECK(std::abs(var - expected) < 1e-9);
  }
}
