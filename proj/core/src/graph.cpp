#include "ipgdn/graph.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace ipgdn {

namespace {

using nlohmann::json;

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      throw ValidationError(path.filename().string() + ":" +
                            std::to_string(lines.size() + 1) +
                            ": carriage return found; files must use Unix newlines");
    }
    lines.push_back(line);
  }
  // Tolerate exactly one trailing blank line (a final '\n').
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

double parse_double(const std::string& tok, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || tok.empty() || errno == ERANGE || !std::isfinite(v)) {
    throw ValidationError(where + ": malformed float '" + tok + "'");
  }
  return v;
}

long parse_int(const std::string& tok, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size() || tok.empty() || errno == ERANGE) {
    throw ValidationError(where + ": malformed integer '" + tok + "'");
  }
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<int> parse_mask(const json& arr, const char* name, int n) {
  if (!arr.is_array()) throw ValidationError(std::string("splits.json: '") + name + "' must be an array");
  std::vector<int> ids;
  ids.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number_integer()) {
      throw ValidationError(std::string("splits.json: '") + name + "' contains a non-integer id");
    }
    const long id = v.get<long>();
    if (id < 0 || id >= n) {
      throw ValidationError(std::string("splits.json: '") + name + "' id " + std::to_string(id) +
                            " outside [0," + std::to_string(n) + ")");
    }
    ids.push_back(static_cast<int>(id));
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ValidationError(std::string("splits.json: '") + name + "' contains duplicate ids");
  }
  return ids;
}

}  // namespace

void finalize_edges(Graph& g, std::vector<std::pair<int, int>> raw_edges) {
  for (auto& [u, v] : raw_edges) {
    if (u == v) throw ValidationError("self-loop on node " + std::to_string(u));
    if (u < 0 || v < 0 || u >= g.n || v >= g.n) {
      throw ValidationError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                            ") references a node outside [0," + std::to_string(g.n) + ")");
    }
    if (u > v) std::swap(u, v);
  }
  std::sort(raw_edges.begin(), raw_edges.end());
  raw_edges.erase(std::unique(raw_edges.begin(), raw_edges.end()), raw_edges.end());
  g.edges = std::move(raw_edges);

  g.adjacency.assign(static_cast<std::size_t>(g.n), {});
  for (const auto& [u, v] : g.edges) {
    g.adjacency[static_cast<std::size_t>(u)].push_back(v);
    g.adjacency[static_cast<std::size_t>(v)].push_back(u);
  }
  for (auto& nbrs : g.adjacency) std::sort(nbrs.begin(), nbrs.end());
}

void validate_graph(const Graph& g) {
  if (g.n <= 0) throw ValidationError("graph has no nodes");
  if (g.features.rows() != g.n || g.features.cols() != g.f) {
    throw ValidationError("feature matrix shape " + ad::shape_string(g.features) +
                          " does not match n=" + std::to_string(g.n) +
                          ", f=" + std::to_string(g.f));
  }
  if (g.labels.size() != static_cast<std::size_t>(g.n)) {
    throw ValidationError("labels length " + std::to_string(g.labels.size()) +
                          " does not match node count " + std::to_string(g.n));
  }
  for (int i = 0; i < g.n; ++i) {
    const int y = g.labels[static_cast<std::size_t>(i)];
    if (y < -1 || y >= g.num_classes) {
      throw ValidationError("node " + std::to_string(i) + " has label " + std::to_string(y) +
                            " outside [0," + std::to_string(g.num_classes) + ") or -1");
    }
  }
  for (const auto& [u, v] : g.edges) {
    if (u >= v) throw ValidationError("edge list is not canonical (u<v)");
    if (u < 0 || v >= g.n) throw ValidationError("edge endpoint out of range");
  }
  std::vector<char> seen(static_cast<std::size_t>(g.n), 0);
  auto check_mask = [&](const std::vector<int>& mask, const char* name) {
    for (int id : mask) {
      if (id < 0 || id >= g.n) {
        throw ValidationError(std::string(name) + " mask id " + std::to_string(id) +
                              " out of range");
      }
      if (seen[static_cast<std::size_t>(id)]) {
        throw ValidationError("node " + std::to_string(id) + " appears in more than one split");
      }
      seen[static_cast<std::size_t>(id)] = 1;
    }
  };
  check_mask(g.train_mask, "train");
  check_mask(g.val_mask, "val");
  check_mask(g.test_mask, "test");
}

Graph load_graph(const std::filesystem::path& data_dir) {
  const auto features_path = data_dir / "features.tsv";
  const auto edges_path = data_dir / "edges.tsv";
  const auto labels_path = data_dir / "labels.tsv";
  const auto splits_path = data_dir / "splits.json";
  for (const auto& p : {features_path, edges_path, labels_path, splits_path}) {
    if (!std::filesystem::exists(p)) throw IoError("missing file: " + p.string());
  }

  Graph g;

  // features.tsv: line index = node id.
  {
    const auto lines = read_lines(features_path);
    if (lines.empty()) throw ValidationError("features.tsv is empty");
    g.n = static_cast<int>(lines.size());
    std::vector<double> data;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto toks = split_tabs(lines[i]);
      const std::string where = "features.tsv:" + std::to_string(i + 1);
      if (i == 0) {
        g.f = static_cast<int>(toks.size());
        data.reserve(static_cast<std::size_t>(g.n) * g.f);
      } else if (static_cast<int>(toks.size()) != g.f) {
        throw ValidationError(where + ": expected " + std::to_string(g.f) +
                              " columns, got " + std::to_string(toks.size()));
      }
      for (const auto& t : toks) data.push_back(parse_double(t, where));
    }
    g.features = ad::Tensor(g.n, g.f, std::move(data));
  }

  // edges.tsv: "u<TAB>v" per line, order-insensitive, deduplicated.
  {
    const auto lines = read_lines(edges_path);
    std::vector<std::pair<int, int>> raw;
    raw.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string where = "edges.tsv:" + std::to_string(i + 1);
      const auto toks = split_tabs(lines[i]);
      if (toks.size() != 2) throw ValidationError(where + ": expected 'u<TAB>v'");
      const long u = parse_int(toks[0], where);
      const long v = parse_int(toks[1], where);
      if (u < 0 || u >= g.n || v < 0 || v >= g.n) {
        throw ValidationError(where + ": edge (" + std::to_string(u) + "," + std::to_string(v) +
                              ") references an unknown node id");
      }
      if (u == v) throw ValidationError(where + ": self-loop on node " + std::to_string(u));
      raw.emplace_back(static_cast<int>(u), static_cast<int>(v));
    }
    finalize_edges(g, std::move(raw));
  }

  // labels.tsv: one integer per line, -1 = unlabeled.
  {
    const auto lines = read_lines(labels_path);
    if (lines.size() != static_cast<std::size_t>(g.n)) {
      throw ValidationError("labels.tsv has " + std::to_string(lines.size()) +
                            " lines but features.tsv has " + std::to_string(g.n));
    }
    g.labels.reserve(lines.size());
    int max_label = -1;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string where = "labels.tsv:" + std::to_string(i + 1);
      const long y = parse_int(lines[i], where);
      if (y < -1) throw ValidationError(where + ": label must be >= -1");
      g.labels.push_back(static_cast<int>(y));
      max_label = std::max(max_label, static_cast<int>(y));
    }
    g.num_classes = max_label + 1;
  }

  // splits.json: {"train": [...], "val": [...], "test": [...]}.
  {
    std::ifstream in(splits_path, std::ios::binary);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ValidationError("splits.json: " + std::string(e.what()));
    }
    if (!j.is_object()) throw ValidationError("splits.json: top level must be an object");
    for (const auto& [key, _] : j.items()) {
      if (key != "train" && key != "val" && key != "test") {
        throw ValidationError("splits.json: unknown key '" + key + "'");
      }
    }
    for (const char* key : {"train", "val", "test"}) {
      if (!j.contains(key)) throw ValidationError(std::string("splits.json: missing key '") + key + "'");
    }
    g.train_mask = parse_mask(j["train"], "train", g.n);
    g.val_mask = parse_mask(j["val"], "val", g.n);
    g.test_mask = parse_mask(j["test"], "test", g.n);
  }

  validate_graph(g);
  return g;
}

void save_graph(const Graph& g, const std::filesystem::path& data_dir) {
  std::filesystem::create_directories(data_dir);
  auto open_out = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    return out;
  };

  {
    auto out = open_out(data_dir / "features.tsv");
    char buf[64];
    const auto vals = g.features.value();
    for (int r = 0; r < g.n; ++r) {
      for (int c = 0; c < g.f; ++c) {
        // %.17g round-trips doubles exactly.
        std::snprintf(buf, sizeof buf, "%.17g", vals[static_cast<std::size_t>(r) * g.f + c]);
        if (c) out << '\t';
        out << buf;
      }
      out << '\n';
    }
  }
  {
    auto out = open_out(data_dir / "edges.tsv");
    for (const auto& [u, v] : g.edges) out << u << '\t' << v << '\n';
  }
  {
    auto out = open_out(data_dir / "labels.tsv");
    for (int y : g.labels) out << y << '\n';
  }
  {
    auto out = open_out(data_dir / "splits.json");
    json j;
    j["train"] = g.train_mask;
    j["val"] = g.val_mask;
    j["test"] = g.test_mask;
    out << j.dump(2) << '\n';
  }
}

ad::Tensor normalized_adjacency(const Graph& g) {
  const int n = g.n;
  std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    // Self-loop counts once, so the degree is >= 1 and never divides by zero.
    inv_sqrt_deg[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(1.0 + g.degree(i));
  }
  ad::Tensor a(n, n);
  auto av = a.mutable_value();
  for (int i = 0; i < n; ++i) {
    av[static_cast<std::size_t>(i) * n + i] =
        inv_sqrt_deg[static_cast<std::size_t>(i)] * inv_sqrt_deg[static_cast<std::size_t>(i)];
  }
  for (const auto& [u, v] : g.edges) {
    const double w = inv_sqrt_deg[static_cast<std::size_t>(u)] * inv_sqrt_deg[static_cast<std::size_t>(v)];
    av[static_cast<std::size_t>(u) * n + v] = w;
    av[static_cast<std::size_t>(v) * n + u] = w;
  }
  return a;
}

}  // namespace ipgdn
