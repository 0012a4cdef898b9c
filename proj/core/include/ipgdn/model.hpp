#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ipgdn/graph.hpp"
#include "ipgdn/layers.hpp"
#include "ipgdn/rng.hpp"
#include "ipgdn/tensor.hpp"

namespace ipgdn {

enum class HsicScope { Labeled, All };
enum class ModelKind { Ipgdn, GcnBaseline };

struct ModelConfig {
  int channels = 4;        // M
  int delta_f = 16;        // per-channel width
  int routing_iters = 7;   // T
  int layers = 2;          // L
  double lambda = 5e-6;    // independence regularization weight
  double dropout = 0.5;
  double lr = 0.01;
  double weight_decay = 5e-4;
  int epochs = 1000;
  int patience = 100;      // early-stop window on validation accuracy
  std::uint64_t seed = 1;
  HsicScope hsic_scope = HsicScope::Labeled;
  ModelKind model_kind = ModelKind::Ipgdn;

  int hidden_width() const { return channels * delta_f; }

  void validate() const;

  /// Strict JSON (de)serialization: unknown keys are a hard error, known keys
  /// are optional and fall back to the defaults above.
  static ModelConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

/// The trainable network: L disentangle layers (or plain propagation layers
/// for the baseline) followed by a fully-connected head of width C.
struct IpgdnModel {
  ModelKind kind = ModelKind::Ipgdn;
  int input_dim = 0;
  int num_classes = 0;
  std::vector<DisentangleLayerParams> layer_params;  // used when kind == Ipgdn
  std::vector<ad::Tensor> gcn_weights;               // used when kind == GcnBaseline
  ad::Tensor head_weight;  // f_L x C
  ad::Tensor head_bias;    // 1 x C

  static IpgdnModel init(int input_dim, int num_classes, const ModelConfig& cfg, Rng& rng);

  std::vector<ad::Tensor> parameters() const;
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters() const;
  std::vector<ad::Tensor> weight_matrices() const;  // l2-penalized subset
  int feature_width() const { return head_weight.rows(); }
  void zero_grad();
};

struct ForwardResult {
  ad::Tensor logits;   // n x C, pre-softmax
  ad::Tensor h_final;  // n x f_L, final representation before its dropout
};

/// Runs the stacked layers and the fully-connected head. The head consumes
/// the dropped-out activations while h_final is taken pre-dropout. For the
/// baseline, `a_norm` must be the densely normalized adjacency.
ForwardResult forward(const IpgdnModel& model, const Graph& g, const ModelConfig& cfg,
                      bool training, Rng& rng, const ad::Tensor* a_norm = nullptr);

/// Masked softmax cross-entropy, computed with a fused log-softmax:
/// -sum over masked nodes of log softmax(logits)[node, label].
ad::Tensor cross_entropy(const ad::Tensor& logits, const std::vector<int>& labels,
                         const std::vector<int>& mask);

struct LossParts {
  ad::Tensor total;        // scalar on the tape
  double cel = 0.0;        // cross-entropy value
  double hsic_value = 0.0; // unweighted independence penalty value
};

/// cross_entropy over the train mask + lambda * independence penalty over the
/// configured node scope + weight_decay * sum of squared weight entries.
LossParts total_loss(const ad::Tensor& logits, const ad::Tensor& h_final, const Graph& g,
                     const ModelConfig& cfg, std::span<const ad::Tensor> weight_matrices);

struct AdamState {
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One Adam update with bias correction over `params` (reads their grads).
/// Parameters without an accumulated gradient are treated as zero-gradient.
void adam_step(std::span<const ad::Tensor> params, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct TrainTrace {
  std::vector<double> loss;
  std::vector<double> cel;
  std::vector<double> hsic;
  std::vector<double> val_acc;
  int best_epoch = -1;  // 1-based; -1 when no validation was possible
};

struct TrainResult {
  IpgdnModel model;
  TrainTrace trace;
};

/// Full-batch training with Adam and early stopping on validation accuracy;
/// the best-validation parameters are restored before returning.
TrainResult train(const Graph& g, const ModelConfig& cfg);

/// Node scope the independence penalty sums over.
const std::vector<int>& hsic_nodes(const Graph& g, const ModelConfig& cfg,
                                   std::vector<int>& all_nodes_storage);

}  // namespace ipgdn
