#include <doctest.h>

#include <cmath>
#include <fstream>

#include "ipgdn/graph.hpp"
#include "ipgdn/synthetic.hpp"
#include "testutil.hpp"

using namespace ipgdn;
namespace tu = testutil;
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

void write_tiny_dataset(const fs::path& dir, const std::string& edges = "0\t1\n1\t2\n") {
  write_file(dir / "features.tsv", "1\t0\n0\t1\n0.5\t0.5\n");
  write_file(dir / "edges.tsv", edges);
  write_file(dir / "labels.tsv", "0\n1\n-1\n");
  write_file(dir / "splits.json", R"({"train":[0],"val":[1],"test":[]})");
}

}  // namespace

TEST_CASE("load_graph reads a small dataset") {
  tu::TempDir dir("load");
  write_tiny_dataset(dir.path());
  Graph g = load_graph(dir.path());
  CHECK(g.n == 3);
  CHECK(g.f == 2);
  CHECK(g.num_classes == 2);
  CHECK(g.edge_count() == 2);
  CHECK(g.labels[2] == -1);
  CHECK(g.train_mask == std::vector<int>{0});
  CHECK(g.features.at(2, 0) == 0.5);
}

TEST_CASE("single node with an empty edge file") {
  tu::TempDir dir("single");
  write_file(dir.path() / "features.tsv", "1\t2\t3\n");
  write_file(dir.path() / "edges.tsv", "");
  write_file(dir.path() / "labels.tsv", "0\n");
  write_file(dir.path() / "splits.json", R"({"train":[0],"val":[],"test":[]})");
  Graph g = load_graph(dir.path());
  CHECK(g.n == 1);
  CHECK(g.edge_count() == 0);
}

TEST_CASE("both orientations of an edge collapse to one undirected edge") {
  tu::TempDir dir("dedup");
  write_tiny_dataset(dir.path(), "0\t1\n1\t0\n");
  Graph g = load_graph(dir.path());
  CHECK(g.edge_count() == 1);
  CHECK(g.edges.front() == std::pair<int, int>{0, 1});
}

TEST_CASE("missing file is an I/O error naming the file") {
  tu::TempDir dir("missing");
  write_tiny_dataset(dir.path());
  fs::remove(dir.path() / "edges.tsv");
  CHECK_THROWS_WITH_AS(load_graph(dir.path()), doctest::Contains("edges.tsv"), IoError);
}

TEST_CASE("edge referencing an unknown id reports the line number") {
  tu::TempDir dir("badedge");
  write_tiny_dataset(dir.path(), "0\t1\n2\t7\n");
  CHECK_THROWS_WITH_AS(load_graph(dir.path()), doctest::Contains("edges.tsv:2"), ValidationError);
}

TEST_CASE("malformed feature line reports the line number") {
  tu::TempDir dir("badfeat");
  write_tiny_dataset(dir.path());
  write_file(dir.path() / "features.tsv", "1\t0\n0\tx\n0.5\t0.5\n");
  CHECK_THROWS_WITH_AS(load_graph(dir.path()), doctest::Contains("features.tsv:2"),
                       ValidationError);
}

TEST_CASE("overlapping splits are rejected") {
  tu::TempDir dir("overlap");
  write_tiny_dataset(dir.path());
  write_file(dir.path() / "splits.json", R"({"train":[0,1],"val":[1],"test":[]})");
  CHECK_THROWS_AS(load_graph(dir.path()), ValidationError);
}

TEST_CASE("unknown splits key is rejected") {
  tu::TempDir dir("splitkey");
  write_tiny_dataset(dir.path());
  write_file(dir.path() / "splits.json", R"({"train":[0],"val":[1],"test":[],"extra":[]})");
  CHECK_THROWS_WITH_AS(load_graph(dir.path()), doctest::Contains("extra"), ValidationError);
}

TEST_CASE("self-loops in the edge file are rejected") {
  tu::TempDir dir("selfloop");
  write_tiny_dataset(dir.path(), "0\t0\n");
  CHECK_THROWS_WITH_AS(load_graph(dir.path()), doctest::Contains("self-loop"), ValidationError);
}

TEST_CASE("saved graphs reload bit-identically") {
  auto synth = synth_factor_graph(60, 2, 3, 0.3, 0.02, 99, {.train_per_class = 5});
  tu::TempDir dir("roundtrip");
  save_graph(synth.graph, dir.path());
  Graph loaded = load_graph(dir.path());
  CHECK(loaded.n == synth.graph.n);
  CHECK(loaded.edges == synth.graph.edges);
  CHECK(loaded.labels == synth.graph.labels);
  CHECK(loaded.train_mask == synth.graph.train_mask);
  CHECK(loaded.val_mask == synth.graph.val_mask);
  CHECK(loaded.test_mask == synth.graph.test_mask);
  for (std::size_t i = 0; i < loaded.features.size(); ++i) {
    CHECK(loaded.features.value()[i] == synth.graph.features.value()[i]);
  }
}

TEST_CASE("normalized adjacency: isolated node and two-node edge") {
  Graph single;
  single.n = 1;
  single.f = 1;
  single.num_classes = 1;
  single.features = ad::Tensor(1, 1, {1.0});
  single.labels = {0};
  finalize_edges(single, {});
  validate_graph(single);
  auto a1 = normalized_adjacency(single);
  CHECK(a1.at(0, 0) == 1.0);

  Graph pair;
  pair.n = 2;
  pair.f = 1;
  pair.num_classes = 1;
  pair.features = ad::Tensor(2, 1, {1.0, 1.0});
  pair.labels = {0, 0};
  finalize_edges(pair, {{0, 1}});
  validate_graph(pair);
  auto a2 = normalized_adjacency(pair);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) CHECK(a2.at(r, c) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("normalized adjacency of the 3-path matches the dense formula") {
  Graph g = tu::path_graph(3);
  auto a = normalized_adjacency(g);
  // Degrees with self-loops: 2, 3, 2.
  CHECK(a.at(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-12));
  CHECK(a.at(1, 0) == a.at(0, 1));
  CHECK(a.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(a.at(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(a.at(0, 2) == 0.0);

  // Independent dense evaluation of D^-1/2 (A+I) D^-1/2.
  const double deg[3] = {2, 3, 2};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const bool adj = std::abs(i - j) == 1 || i == j;
      const double expected = adj ? 1.0 / std::sqrt(deg[i] * deg[j]) : 0.0;
      CHECK(a.at(i, j) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("normalized adjacency is symmetric with nonnegative entries and 1/deg diagonal") {
  auto synth = synth_factor_graph(40, 2, 4, 0.4, 0.05, 5, {.train_per_class = 3});
  const Graph& g = synth.graph;
  auto a = normalized_adjacency(g);
  for (int i = 0; i < g.n; ++i) {
    CHECK(a.at(i, i) == doctest::Approx(1.0 / (1.0 + g.degree(i))).epsilon(1e-12));
    for (int j = 0; j < g.n; ++j) {
      CHECK(a.at(i, j) >= 0.0);
      CHECK(a.at(i, j) <= 1.0);
      CHECK(a.at(i, j) == a.at(j, i));
    }
  }
}

TEST_CASE("synth_factor_graph: full in-probability with one factor gives disjoint cliques") {
  auto synth = synth_factor_graph(10, 1, 2, 1.0, 0.0, 3, {.train_per_class = 2});
  const Graph& g = synth.graph;
  CHECK(g.edge_count() == 2 * 10);  // two 5-cliques
  const auto& comm = synth.factor_communities[0];
  for (const auto& [u, v] : g.edges) CHECK(comm[u] == comm[v]);
}

TEST_CASE("synth_factor_graph is deterministic for identical seeds") {
  auto a = synth_factor_graph(50, 2, 5, 0.3, 0.01, 1234, {.train_per_class = 4});
  auto b = synth_factor_graph(50, 2, 5, 0.3, 0.01, 1234, {.train_per_class = 4});
  CHECK(a.graph.edges == b.graph.edges);
  CHECK(a.graph.labels == b.graph.labels);
  CHECK(a.graph.train_mask == b.graph.train_mask);
  for (std::size_t i = 0; i < a.graph.features.size(); ++i) {
    CHECK(a.graph.features.value()[i] == b.graph.features.value()[i]);
  }
}

TEST_CASE("synth_factor_graph edge count sits within 3 sigma of its expectation") {
  const int n = 300;
  auto synth = synth_factor_graph(n, 3, 3, 0.1, 0.005, 2024);
  // Poisson-binomial over pairs: p(pair) = 1 - prod_k (1 - p_k(pair)).
  double mean = 0.0, var = 0.0;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      double keep_out = 1.0;
      for (int k = 0; k < 3; ++k) {
        const auto& comm = synth.factor_communities[static_cast<std::size_t>(k)];
        keep_out *= 1.0 - (comm[u] == comm[v] ? 0.1 : 0.005);
      }
      const double p = 1.0 - keep_out;
      mean += p;
      var += p * (1.0 - p);
    }
  }
  const double sigma = std::sqrt(var);
  CHECK(std::abs(static_cast<double>(synth.graph.edge_count()) - mean) <= 3.0 * sigma);
}

TEST_CASE("synth_factor_graph validates probabilities and divisibility") {
  CHECK_THROWS_AS(synth_factor_graph(10, 1, 2, 1.5, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(synth_factor_graph(10, 1, 3, 0.5, 0.0, 1), ConfigError);
}
