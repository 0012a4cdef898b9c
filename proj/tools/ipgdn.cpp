// Command-line entry point: training, evaluation, clustering, embedding
// export, scatter plots, and hyper-parameter sweeps over one graph dataset.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ipgdn/checkpoint.hpp"
#include "ipgdn/graph.hpp"
#include "ipgdn/kmeans.hpp"
#include "ipgdn/metrics.hpp"
#include "ipgdn/model.hpp"
#include "ipgdn/pca.hpp"
#include "ipgdn/plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kArtifactVersion = "ipgdn 0.1.0";

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct PhaseTimer {
  std::map<std::string, double> ms;
  std::chrono::steady_clock::time_point mark = std::chrono::steady_clock::now();

  void lap(const std::string& phase) {
    const auto now = std::chrono::steady_clock::now();
    ms[phase] += std::chrono::duration<double, std::milli>(now - mark).count();
    mark = now;
  }
};

std::uint64_t fnv1a64(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ipgdn::IoError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return h;
}

json dataset_fingerprint(const fs::path& data_dir) {
  json files = json::object();
  for (const char* name : {"features.tsv", "edges.tsv", "labels.tsv", "splits.json"}) {
    const fs::path p = data_dir / name;
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(p)));
    files[name] = {{"bytes", fs::file_size(p)}, {"fnv1a64", hex}};
  }
  return {{"dir", data_dir.string()}, {"files", files}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ipgdn::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw ipgdn::IoError("failed writing " + path.string());
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const ipgdn::ModelConfig& cfg, const fs::path& data_dir,
                    const PhaseTimer& timer) {
  json manifest;
  manifest["artifact"] = kArtifactVersion;
  manifest["command"] = command;
  manifest["seed"] = cfg.seed;
  manifest["config"] = json::parse(cfg.to_json_text());
  manifest["dataset"] = dataset_fingerprint(data_dir);
  manifest["timings_ms"] = timer.ms;
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

json trace_to_json(const ipgdn::TrainTrace& trace) {
  return {{"loss", trace.loss},
          {"cel", trace.cel},
          {"hsic", trace.hsic},
          {"val_acc", trace.val_acc},
          {"best_epoch", trace.best_epoch}};
}

ipgdn::ModelConfig load_config(const std::string& config_path, bool seed_given,
                               std::uint64_t seed) {
  ipgdn::ModelConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw ipgdn::IoError("cannot open " + config_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    cfg = ipgdn::ModelConfig::from_json_text(text);
  }
  if (seed_given) cfg.seed = seed;
  cfg.validate();
  return cfg;
}

ipgdn::ForwardResult eval_forward(const ipgdn::IpgdnModel& model, const ipgdn::Graph& g,
                                  const ipgdn::ModelConfig& cfg) {
  ipgdn::Rng rng(cfg.seed);
  ipgdn::ad::Tensor a_norm;
  const ipgdn::ad::Tensor* a_norm_ptr = nullptr;
  if (model.kind == ipgdn::ModelKind::GcnBaseline) {
    a_norm = ipgdn::normalized_adjacency(g);
    a_norm_ptr = &a_norm;
  }
  return ipgdn::forward(model, g, cfg, /*training=*/false, rng, a_norm_ptr);
}

struct TestMetrics {
  double acc = 0.0;
  double macro_f1 = 0.0;
};

TestMetrics test_metrics(const ipgdn::IpgdnModel& model, const ipgdn::Graph& g,
                         const ipgdn::ModelConfig& cfg) {
  const auto fr = eval_forward(model, g, cfg);
  const auto pred = ipgdn::eval::argmax_rows(fr.logits);
  TestMetrics m;
  m.acc = ipgdn::eval::accuracy(pred, g.labels, g.test_mask);
  m.macro_f1 = ipgdn::eval::macro_f1(pred, g.labels, g.test_mask, g.num_classes);
  return m;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(var / static_cast<double>(xs.size()));
  return out;
}

// ---- subcommands -----------------------------------------------------------

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_dir, bool seed_given, std::uint64_t seed, int seeds) {
  PhaseTimer timer;
  auto cfg = load_config(config_path, seed_given, seed);
  const auto graph = ipgdn::load_graph(data_dir);
  timer.lap("load");
  fs::create_directories(out_dir);

  json summary;
  if (seeds <= 1) {
    std::cerr << "training: " << graph.n << " nodes, " << graph.edge_count() << " edges, seed "
              << cfg.seed << "\n";
    const auto result = ipgdn::train(graph, cfg);
    timer.lap("train");
    ipgdn::save_checkpoint(fs::path(out_dir) / "checkpoint.bin", cfg, result.model);
    write_text(fs::path(out_dir) / "trace.json", trace_to_json(result.trace).dump() + "\n");
    const auto tm = test_metrics(result.model, graph, cfg);
    timer.lap("write");
    summary["epochs_run"] = result.trace.loss.size();
    summary["best_epoch"] = result.trace.best_epoch;
    summary["test_acc"] = tm.acc;
    summary["test_macro_f1"] = tm.macro_f1;
  } else {
    std::vector<double> accs, f1s, val_accs;
    for (int i = 0; i < seeds; ++i) {
      ipgdn::ModelConfig run_cfg = cfg;
      run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(i);
      std::cerr << "training seed " << run_cfg.seed << " (" << (i + 1) << "/" << seeds << ")\n";
      const auto result = ipgdn::train(graph, run_cfg);
      const fs::path run_dir = fs::path(out_dir) / ("seed_" + std::to_string(i));
      fs::create_directories(run_dir);
      ipgdn::save_checkpoint(run_dir / "checkpoint.bin", run_cfg, result.model);
      write_text(run_dir / "trace.json", trace_to_json(result.trace).dump() + "\n");
      const auto tm = test_metrics(result.model, graph, run_cfg);
      accs.push_back(tm.acc);
      f1s.push_back(tm.macro_f1);
      if (result.trace.best_epoch > 0) {
        val_accs.push_back(result.trace.val_acc[static_cast<std::size_t>(result.trace.best_epoch - 1)]);
      }
    }
    timer.lap("train");
    const auto acc = mean_std(accs);
    const auto f1 = mean_std(f1s);
    const auto val = mean_std(val_accs);
    summary["seeds"] = seeds;
    summary["test_acc"] = {{"mean", acc.mean}, {"std", acc.std}};
    summary["test_macro_f1"] = {{"mean", f1.mean}, {"std", f1.std}};
    summary["val_acc"] = {{"mean", val.mean}, {"std", val.std}};
  }

  write_manifest(out_dir, "train", cfg, data_dir, timer);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& checkpoint_path) {
  const auto graph = ipgdn::load_graph(data_dir);
  const auto ckpt = ipgdn::load_checkpoint(checkpoint_path);
  const auto tm = test_metrics(ckpt.model, graph, ckpt.config);
  json out;
  out["acc"] = tm.acc;
  out["macro_f1"] = tm.macro_f1;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_cluster(const std::string& data_dir, const std::string& checkpoint_path, int k,
                int restarts, std::uint64_t seed) {
  const auto graph = ipgdn::load_graph(data_dir);
  const auto ckpt = ipgdn::load_checkpoint(checkpoint_path);
  const auto fr = eval_forward(ckpt.model, graph, ckpt.config);

  // Cluster the labeled nodes only; -1 rows have no ground truth.
  std::vector<int> labeled;
  for (int u = 0; u < graph.n; ++u)
    if (graph.labels[static_cast<std::size_t>(u)] >= 0) labeled.push_back(u);
  if (labeled.empty()) throw ipgdn::ValidationError("cluster: dataset has no labeled nodes");

  const int d = fr.h_final.cols();
  ipgdn::ad::Tensor embeddings(static_cast<int>(labeled.size()), d);
  {
    auto dst = embeddings.mutable_value();
    const auto src = fr.h_final.value();
    for (std::size_t i = 0; i < labeled.size(); ++i)
      std::copy_n(src.begin() + static_cast<std::size_t>(labeled[i]) * d, d, dst.begin() + i * d);
  }
  std::vector<int> truth;
  truth.reserve(labeled.size());
  for (int u : labeled) truth.push_back(graph.labels[static_cast<std::size_t>(u)]);

  if (k <= 0) k = graph.num_classes;
  const auto runs = ipgdn::eval::kmeans_runs(embeddings, k, seed, restarts);

  json per_metric = json::object();
  std::vector<double> accs, nmis, aris, precs, f1s;
  std::size_t best = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto m = ipgdn::eval::clustering_metrics(runs[i].assignments, truth);
    accs.push_back(m.clu_acc);
    nmis.push_back(m.nmi);
    aris.push_back(m.ari);
    precs.push_back(m.precision);
    f1s.push_back(m.f1);
    if (runs[i].inertia < runs[best].inertia) best = i;
  }
  const auto best_metrics = ipgdn::eval::clustering_metrics(runs[best].assignments, truth);

  json out;
  out["k"] = k;
  out["restarts"] = restarts;
  out["mean"] = {{"clu_acc", mean_std(accs).mean},
                 {"nmi", mean_std(nmis).mean},
                 {"ari", mean_std(aris).mean},
                 {"precision", mean_std(precs).mean},
                 {"f1", mean_std(f1s).mean}};
  out["best"] = {{"clu_acc", best_metrics.clu_acc},
                 {"nmi", best_metrics.nmi},
                 {"ari", best_metrics.ari},
                 {"precision", best_metrics.precision},
                 {"f1", best_metrics.f1}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_embed(const std::string& data_dir, const std::string& checkpoint_path,
              const std::string& out_dir) {
  PhaseTimer timer;
  const auto graph = ipgdn::load_graph(data_dir);
  const auto ckpt = ipgdn::load_checkpoint(checkpoint_path);
  timer.lap("load");
  const auto fr = eval_forward(ckpt.model, graph, ckpt.config);
  timer.lap("forward");

  fs::create_directories(out_dir);
  const fs::path out_path = fs::path(out_dir) / "embeddings.tsv";
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw ipgdn::IoError("cannot write " + out_path.string());
  const auto v = fr.h_final.value();
  const int d = fr.h_final.cols();
  char buf[64];
  for (int r = 0; r < fr.h_final.rows(); ++r) {
    for (int c = 0; c < d; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", v[static_cast<std::size_t>(r) * d + c]);
      if (c) out << '\t';
      out << buf;
    }
    out << '\n';
  }
  out.close();
  timer.lap("write");
  write_manifest(out_dir, "embed", ckpt.config, data_dir, timer);
  std::cout << json{{"rows", fr.h_final.rows()}, {"cols", d}}.dump() << "\n";
  return 0;
}

int cmd_plot(const std::string& data_dir, const std::string& checkpoint_path,
             const std::string& out_dir) {
  PhaseTimer timer;
  const auto graph = ipgdn::load_graph(data_dir);
  const auto ckpt = ipgdn::load_checkpoint(checkpoint_path);
  timer.lap("load");
  const auto fr = eval_forward(ckpt.model, graph, ckpt.config);
  const auto coords = ipgdn::eval::pca_2d(fr.h_final);
  timer.lap("forward");
  fs::create_directories(out_dir);
  ipgdn::write_scatter_svg(fs::path(out_dir) / "scatter.svg", coords, graph.labels,
                           graph.num_classes);
  timer.lap("write");
  write_manifest(out_dir, "plot", ckpt.config, data_dir, timer);
  std::cout << json{{"points", coords.rows()}}.dump() << "\n";
  return 0;
}

void apply_sweep_param(ipgdn::ModelConfig& cfg, const std::string& name, double value) {
  if (name == "lambda") {
    cfg.lambda = value;
  } else if (name == "lr") {
    cfg.lr = value;
  } else if (name == "weight_decay") {
    cfg.weight_decay = value;
  } else if (name == "dropout") {
    cfg.dropout = value;
  } else if (name == "T") {
    cfg.routing_iters = static_cast<int>(value);
  } else if (name == "L") {
    cfg.layers = static_cast<int>(value);
  } else if (name == "M") {
    cfg.channels = static_cast<int>(value);
  } else if (name == "delta_f") {
    cfg.delta_f = static_cast<int>(value);
  } else {
    throw ipgdn::ConfigError("sweep: unknown parameter '" + name + "'");
  }
}

int cmd_sweep(const std::string& data_dir, const std::string& config_path,
              const std::string& out_dir, bool seed_given, std::uint64_t seed,
              const std::string& param, const std::vector<double>& values) {
  if (values.size() < 2) throw ipgdn::ConfigError("sweep: need at least 2 values");
  PhaseTimer timer;
  const auto base_cfg = load_config(config_path, seed_given, seed);
  const auto graph = ipgdn::load_graph(data_dir);
  timer.lap("load");

  json entries = json::array();
  for (double value : values) {
    ipgdn::ModelConfig cfg = base_cfg;  // shared seed across values
    apply_sweep_param(cfg, param, value);
    cfg.validate();
    std::cerr << "sweep " << param << "=" << value << "\n";
    const auto result = ipgdn::train(graph, cfg);
    const auto tm = test_metrics(result.model, graph, cfg);
    double best_val = 0.0;
    if (result.trace.best_epoch > 0) {
      best_val = result.trace.val_acc[static_cast<std::size_t>(result.trace.best_epoch - 1)];
    }
    entries.push_back({{"value", value},
                       {"val_acc", best_val},
                       {"test_acc", tm.acc},
                       {"final_hsic", result.trace.hsic.back()},
                       {"epochs_run", result.trace.loss.size()}});
  }
  timer.lap("train");

  fs::create_directories(out_dir);
  json out;
  out["param"] = param;
  out["seed"] = base_cfg.seed;
  out["entries"] = entries;
  write_text(fs::path(out_dir) / "sweep.json", out.dump(2) + "\n");
  write_manifest(out_dir, "sweep", base_cfg, data_dir, timer);
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled graph convolutional networks with an independence-promoting "
               "regularizer: training, evaluation, clustering, and embedding export"};
  app.require_subcommand(1);

  std::string data_dir, config_path, out_dir, checkpoint_path, param = "lambda";
  std::uint64_t seed = 0;
  bool seed_given = false;
  int seeds = 1, k = 0, restarts = 20;
  std::vector<double> values;

  auto add_common = [&](CLI::App* cmd, bool needs_out) {
    cmd->add_option("--data-dir", data_dir, "Dataset directory")->required();
    auto* seed_opt = cmd->add_option("--seed", seed, "RNG seed override");
    cmd->callback([seed_opt, &seed_given]() { seed_given = seed_opt->count() > 0; });
    if (needs_out) cmd->add_option("--out", out_dir, "Output directory")->required();
  };

  auto* train = app.add_subcommand("train", "Train a model; writes checkpoint + trace");
  add_common(train, true);
  train->add_option("--config", config_path, "Model config JSON");
  train->add_option("--seeds", seeds, "Run N seeds and report mean +- std")
      ->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Test-set accuracy and macro F1 of a checkpoint");
  add_common(eval, false);
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();

  auto* cluster = app.add_subcommand("cluster", "KMeans over the learned embeddings");
  add_common(cluster, false);
  cluster->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  cluster->add_option("--k", k, "Cluster count (defaults to the class count)");
  cluster->add_option("--restarts", restarts, "KMeans restarts")->check(CLI::PositiveNumber);

  auto* embed = app.add_subcommand("embed", "Export final-layer embeddings as TSV");
  add_common(embed, true);
  embed->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();

  auto* plot = app.add_subcommand("plot", "2-D projection scatter plot as SVG");
  add_common(plot, true);
  plot->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();

  auto* sweep = app.add_subcommand("sweep", "Train once per parameter value (shared seed)");
  add_common(sweep, true);
  sweep->add_option("--config", config_path, "Model config JSON");
  sweep->add_option("--param", param, "Config field to sweep (default: lambda)");
  sweep->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (train->parsed()) return cmd_train(data_dir, config_path, out_dir, seed_given, seed, seeds);
    if (eval->parsed()) return cmd_eval(data_dir, checkpoint_path);
    if (cluster->parsed()) return cmd_cluster(data_dir, checkpoint_path, k, restarts, seed);
    if (embed->parsed()) return cmd_embed(data_dir, checkpoint_path, out_dir);
    if (plot->parsed()) return cmd_plot(data_dir, checkpoint_path, out_dir);
    if (sweep->parsed())
      return cmd_sweep(data_dir, config_path, out_dir, seed_given, seed, param, values);
  } catch (const ipgdn::TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const ipgdn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
