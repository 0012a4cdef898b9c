#include "ipgdn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ipgdn/hsic.hpp"
#include "ipgdn/metrics.hpp"

namespace ipgdn {

namespace {

using nlohmann::json;

std::string scope_name(HsicScope s) { return s == HsicScope::Labeled ? "labeled" : "all"; }
std::string kind_name(ModelKind k) { return k == ModelKind::Ipgdn ? "ipgdn" : "gcn-baseline"; }

HsicScope scope_from(const std::string& s) {
  if (s == "labeled") return HsicScope::Labeled;
  if (s == "all") return HsicScope::All;
  throw ConfigError("hsic_scope must be 'labeled' or 'all', got '" + s + "'");
}

ModelKind kind_from(const std::string& s) {
  if (s == "ipgdn") return ModelKind::Ipgdn;
  if (s == "gcn-baseline") return ModelKind::GcnBaseline;
  throw ConfigError("model_kind must be 'ipgdn' or 'gcn-baseline', got '" + s + "'");
}

}  // namespace

void ModelConfig::validate() const {
  if (channels < 1) throw ConfigError("M must be >= 1");
  if (delta_f < 1) throw ConfigError("delta_f must be >= 1");
  if (routing_iters < 1) throw ConfigError("T must be >= 1");
  if (layers < 1 || layers > 6) throw ConfigError("L must lie in [1,6]");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0,1)");
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (lambda > 0.0 && channels > 1 && delta_f < 2) {
    throw ConfigError("delta_f must be >= 2 for the independence penalty");
  }
}

ModelConfig ModelConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");

  static const char* known[] = {"M",      "delta_f",      "T",      "L",       "lambda",
                                "dropout", "lr",           "weight_decay", "epochs",
                                "patience", "seed",        "hsic_scope",   "model_kind"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return key == k; }) == std::end(known)) {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }

  ModelConfig cfg;
  auto get_int = [&](const char* key, int& out) {
    if (j.contains(key)) {
      if (!j[key].is_number_integer()) throw ConfigError(std::string("config: '") + key + "' must be an integer");
      out = j[key].get<int>();
    }
  };
  auto get_double = [&](const char* key, double& out) {
    if (j.contains(key)) {
      if (!j[key].is_number()) throw ConfigError(std::string("config: '") + key + "' must be a number");
      out = j[key].get<double>();
    }
  };
  get_int("M", cfg.channels);
  get_int("delta_f", cfg.delta_f);
  get_int("T", cfg.routing_iters);
  get_int("L", cfg.layers);
  get_double("lambda", cfg.lambda);
  get_double("dropout", cfg.dropout);
  get_double("lr", cfg.lr);
  get_double("weight_decay", cfg.weight_decay);
  get_int("epochs", cfg.epochs);
  get_int("patience", cfg.patience);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
      throw ConfigError("config: 'seed' must be an integer");
    }
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("hsic_scope")) {
    if (!j["hsic_scope"].is_string()) throw ConfigError("config: 'hsic_scope' must be a string");
    cfg.hsic_scope = scope_from(j["hsic_scope"].get<std::string>());
  }
  if (j.contains("model_kind")) {
    if (!j["model_kind"].is_string()) throw ConfigError("config: 'model_kind' must be a string");
    cfg.model_kind = kind_from(j["model_kind"].get<std::string>());
  }
  cfg.validate();
  return cfg;
}

std::string ModelConfig::to_json_text() const {
  json j;
  j["M"] = channels;
  j["delta_f"] = delta_f;
  j["T"] = routing_iters;
  j["L"] = layers;
  j["lambda"] = lambda;
  j["dropout"] = dropout;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["epochs"] = epochs;
  j["patience"] = patience;
  j["seed"] = seed;
  j["hsic_scope"] = scope_name(hsic_scope);
  j["model_kind"] = kind_name(model_kind);
  return j.dump(2);
}

IpgdnModel IpgdnModel::init(int input_dim, int num_classes, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  if (input_dim < 1 || num_classes < 1) {
    throw ConfigError("model init: input_dim and num_classes must be positive");
  }
  IpgdnModel model;
  model.kind = cfg.model_kind;
  model.input_dim = input_dim;
  model.num_classes = num_classes;
  const int width = cfg.hidden_width();

  if (cfg.model_kind == ModelKind::Ipgdn) {
    int f_in = input_dim;
    for (int l = 0; l < cfg.layers; ++l) {
      model.layer_params.push_back(
          DisentangleLayerParams::glorot(f_in, cfg.channels, cfg.delta_f, rng));
      f_in = width;
    }
  } else {
    int f_in = input_dim;
    for (int l = 0; l < cfg.layers; ++l) {
      ad::Tensor w(f_in, width, 0.0, /*requires_grad=*/true);
      const double bound = std::sqrt(6.0 / (f_in + width));
      for (auto& v : w.mutable_value()) v = rng.uniform(-bound, bound);
      model.gcn_weights.push_back(w);
      f_in = width;
    }
  }

  model.head_weight = ad::Tensor(width, num_classes, 0.0, /*requires_grad=*/true);
  const double bound = std::sqrt(6.0 / (width + num_classes));
  for (auto& v : model.head_weight.mutable_value()) v = rng.uniform(-bound, bound);
  model.head_bias = ad::Tensor(1, num_classes, 0.0, /*requires_grad=*/true);
  return model;
}

std::vector<ad::Tensor> IpgdnModel::parameters() const {
  std::vector<ad::Tensor> out;
  for (const auto& [_, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, ad::Tensor>> IpgdnModel::named_parameters() const {
  std::vector<std::pair<std::string, ad::Tensor>> out;
  for (std::size_t l = 0; l < layer_params.size(); ++l) {
    const auto& p = layer_params[l];
    for (int m = 0; m < p.channels(); ++m) {
      out.emplace_back("layer" + std::to_string(l) + ".channel" + std::to_string(m) + ".W",
                       p.weights[static_cast<std::size_t>(m)]);
      out.emplace_back("layer" + std::to_string(l) + ".channel" + std::to_string(m) + ".b",
                       p.biases[static_cast<std::size_t>(m)]);
    }
  }
  for (std::size_t l = 0; l < gcn_weights.size(); ++l) {
    out.emplace_back("layer" + std::to_string(l) + ".W", gcn_weights[l]);
  }
  out.emplace_back("head.W", head_weight);
  out.emplace_back("head.b", head_bias);
  return out;
}

std::vector<ad::Tensor> IpgdnModel::weight_matrices() const {
  std::vector<ad::Tensor> out;
  for (const auto& [name, t] : named_parameters()) {
    if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".W") == 0) out.push_back(t);
  }
  return out;
}

void IpgdnModel::zero_grad() {
  for (auto& p : parameters()) p.zero_grad();
}

ForwardResult forward(const IpgdnModel& model, const Graph& g, const ModelConfig& cfg,
                      bool training, Rng& rng, const ad::Tensor* a_norm) {
  if (g.f != model.input_dim) {
    throw ShapeError("forward: graph features have width " + std::to_string(g.f) +
                     " but the model expects " + std::to_string(model.input_dim));
  }
  if (g.num_classes > model.num_classes) {
    throw ShapeError("forward: graph has " + std::to_string(g.num_classes) +
                     " classes but the model head outputs " + std::to_string(model.num_classes));
  }

  ad::Tensor h = g.features;
  ad::Tensor h_final;
  if (model.kind == ModelKind::Ipgdn) {
    for (std::size_t l = 0; l < model.layer_params.size(); ++l) {
      auto out = disentangle_layer(h, g, model.layer_params[l], cfg.routing_iters, cfg.dropout,
                                   training, rng);
      h_final = out.pre_dropout;
      h = out.output;
    }
  } else {
    if (a_norm == nullptr) {
      throw ValidationError("forward: the baseline model needs the normalized adjacency");
    }
    for (std::size_t l = 0; l < model.gcn_weights.size(); ++l) {
      ad::Tensor pre = gcn_layer(h, *a_norm, model.gcn_weights[l], /*activation=*/true);
      h_final = pre;
      h = ad::dropout(pre, cfg.dropout, training, rng);
    }
  }

  ForwardResult result;
  result.h_final = h_final;
  result.logits = ad::add(ad::matmul(h, model.head_weight), model.head_bias);
  return result;
}

ad::Tensor cross_entropy(const ad::Tensor& logits, const std::vector<int>& labels,
                         const std::vector<int>& mask) {
  if (labels.size() != static_cast<std::size_t>(logits.rows())) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(logits.rows()) + " logit rows");
  }
  const int cols = logits.cols();
  for (int id : mask) {
    if (id < 0 || id >= logits.rows()) {
      throw ValidationError("cross_entropy: mask id " + std::to_string(id) + " out of range");
    }
    const int y = labels[static_cast<std::size_t>(id)];
    if (y < 0) {
      throw ValidationError("cross_entropy: mask contains unlabeled node " + std::to_string(id));
    }
    if (y >= cols) {
      throw ValidationError("cross_entropy: label " + std::to_string(y) +
                            " exceeds logit width " + std::to_string(cols));
    }
  }

  ad::Tensor out = ad::make_op_output(1, 1, {logits});
  const auto lv = logits.value();
  double total = 0.0;
  for (int id : mask) {
    const double* row = lv.data() + static_cast<std::size_t>(id) * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < cols; ++c) mx = std::max(mx, row[c]);
    double lse = 0.0;
    for (int c = 0; c < cols; ++c) lse += std::exp(row[c] - mx);
    lse = mx + std::log(lse);
    total += lse - row[labels[static_cast<std::size_t>(id)]];
  }
  out.mutable_value()[0] = total;

  if (ad::recording(out)) {
    auto ln = logits.node();
    auto on = out.node();
    auto mask_copy = mask;
    auto labels_copy = labels;
    ad::active_tape()->record(out.node(), {logits.node()}, [ln, on, mask_copy, labels_copy, cols]() {
      if (!ln->requires_grad) return;
      ln->ensure_grad();
      const double g = on->grad[0];
      if (g == 0.0) return;
      for (int id : mask_copy) {
        const double* row = ln->value.data() + static_cast<std::size_t>(id) * cols;
        double* grow = ln->grad.data() + static_cast<std::size_t>(id) * cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < cols; ++c) mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (int c = 0; c < cols; ++c) denom += std::exp(row[c] - mx);
        for (int c = 0; c < cols; ++c) {
          const double softmax = std::exp(row[c] - mx) / denom;
          const double onehot = c == labels_copy[static_cast<std::size_t>(id)] ? 1.0 : 0.0;
          grow[c] += g * (softmax - onehot);
        }
      }
    });
  }
  return out;
}

const std::vector<int>& hsic_nodes(const Graph& g, const ModelConfig& cfg,
                                   std::vector<int>& all_nodes_storage) {
  if (cfg.hsic_scope == HsicScope::Labeled) return g.train_mask;
  all_nodes_storage.resize(static_cast<std::size_t>(g.n));
  std::iota(all_nodes_storage.begin(), all_nodes_storage.end(), 0);
  return all_nodes_storage;
}

LossParts total_loss(const ad::Tensor& logits, const ad::Tensor& h_final, const Graph& g,
                     const ModelConfig& cfg, std::span<const ad::Tensor> weight_matrices) {
  LossParts parts;
  ad::Tensor cel = cross_entropy(logits, g.labels, g.train_mask);
  parts.cel = cel.value()[0];

  std::vector<int> storage;
  const auto& scope = hsic_nodes(g, cfg, storage);
  ad::Tensor penalty = hsic::independence_loss(h_final, cfg.channels, scope);
  parts.hsic_value = penalty.value()[0];

  ad::Tensor total = cel;
  if (cfg.lambda > 0.0) total = ad::add(total, ad::scale(penalty, cfg.lambda));
  if (cfg.weight_decay > 0.0) {
    for (const auto& w : weight_matrices) {
      total = ad::add(total, ad::scale(ad::sum_squares(w), cfg.weight_decay));
    }
  }
  parts.total = total;
  return parts;
}

void adam_step(std::span<const ad::Tensor> params, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].size(), 0.0);
      state.v[i].assign(params[i].size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ValidationError("adam_step: state initialized for a different parameter set");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor p = params[i];
    auto values = p.mutable_value();
    const bool has_grad = p.has_grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double grad = has_grad ? p.grad()[j] : 0.0;
      m[j] = beta1 * m[j] + (1.0 - beta1) * grad;
      v[j] = beta2 * v[j] + (1.0 - beta2) * grad * grad;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

TrainResult train(const Graph& g, const ModelConfig& cfg) {
  cfg.validate();
  if (g.train_mask.empty()) throw ValidationError("train: train mask is empty");
  if (cfg.lambda > 0.0 && cfg.channels > 1 && cfg.delta_f < 2) {
    throw ConfigError("train: delta_f must be >= 2 for the independence penalty");
  }

  Rng rng(cfg.seed);
  IpgdnModel model = IpgdnModel::init(g.f, g.num_classes, cfg, rng);
  const auto params = model.parameters();
  const auto weights = model.weight_matrices();

  ad::Tensor a_norm;
  const ad::Tensor* a_norm_ptr = nullptr;
  if (cfg.model_kind == ModelKind::GcnBaseline) {
    a_norm = normalized_adjacency(g);
    a_norm_ptr = &a_norm;
  }

  AdamState adam;
  TrainTrace trace;
  double best_val = -1.0;
  int epochs_since_best = 0;
  std::vector<std::vector<double>> best_snapshot;

  auto snapshot = [&]() {
    best_snapshot.clear();
    for (const auto& p : params) {
      best_snapshot.emplace_back(p.value().begin(), p.value().end());
    }
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    ad::Tape tape;
    LossParts parts;
    {
      ad::TapeScope scope(tape);
      ForwardResult fr = forward(model, g, cfg, /*training=*/true, rng, a_norm_ptr);
      parts = total_loss(fr.logits, fr.h_final, g, cfg, weights);
      if (!std::isfinite(parts.total.value()[0])) {
        throw TrainingError("training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch));
      }
      tape.backward(parts.total);
    }
    adam_step(params, adam, cfg.lr);
    model.zero_grad();

    double val_acc = 0.0;
    if (!g.val_mask.empty()) {
      ForwardResult fr = forward(model, g, cfg, /*training=*/false, rng, a_norm_ptr);
      val_acc = eval::accuracy(eval::argmax_rows(fr.logits), g.labels, g.val_mask);
    }

    trace.loss.push_back(parts.total.value()[0]);
    trace.cel.push_back(parts.cel);
    trace.hsic.push_back(parts.hsic_value);
    trace.val_acc.push_back(val_acc);

    if (!g.val_mask.empty()) {
      if (val_acc > best_val) {
        best_val = val_acc;
        trace.best_epoch = epoch;
        epochs_since_best = 0;
        snapshot();
      } else if (++epochs_since_best >= cfg.patience) {
        break;
      }
    }
  }

  if (!best_snapshot.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      ad::Tensor p = params[i];
      std::copy(best_snapshot[i].begin(), best_snapshot[i].end(), p.mutable_value().begin());
    }
  }

  return TrainResult{std::move(model), std::move(trace)};
}

}  // namespace ipgdn
