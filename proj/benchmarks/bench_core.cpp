#include <benchmark/benchmark.h>

#include "ipgdn/graph.hpp"
#include "ipgdn/hsic.hpp"
#include "ipgdn/layers.hpp"
#include "ipgdn/model.hpp"
#include "ipgdn/synthetic.hpp"

using namespace ipgdn;

namespace {

SynthFactorGraph make_graph(int n) {
  // Degree stays fixed as n grows, so layer cost should scale linearly.
  return synth_factor_graph(n, 2, 5, 40.0 / n, 5.0 / n, 7, {.train_per_class = 10});
}

void BM_DisentangleLayerForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto synth = make_graph(n);
  Rng prng(3);
  auto params = DisentangleLayerParams::glorot(synth.graph.f, 4, 16, prng);
  Rng rng(1);
  for (auto _ : state) {
    auto out = disentangle_layer(synth.graph.features, synth.graph, params, 7, 0.0, false, rng);
    benchmark::DoNotOptimize(out.pre_dropout.value().data());
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_DisentangleLayerForward)->RangeMultiplier(2)->Range(256, 4096)->Complexity(benchmark::oN);

void BM_TrainEpoch(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto synth = make_graph(n);
  ModelConfig cfg;
  cfg.channels = 4;
  cfg.delta_f = 16;
  cfg.routing_iters = 7;
  cfg.layers = 2;
  cfg.epochs = 1;
  cfg.patience = 10;
  for (auto _ : state) {
    auto result = train(synth.graph, cfg);
    benchmark::DoNotOptimize(result.trace.loss.data());
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_TrainEpoch)->RangeMultiplier(2)->Range(256, 2048)->Complexity(benchmark::oN)
    ->Unit(benchmark::kMillisecond);

void BM_IndependencePenalty(benchmark::State& state) {
  const int nodes = static_cast<int>(state.range(0));
  Rng rng(5);
  ad::Tensor h(nodes, 64);
  for (auto& v : h.mutable_value()) v = rng.uniform(-1.0, 1.0);
  std::vector<int> ids(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) ids[static_cast<std::size_t>(i)] = i;
  for (auto _ : state) {
    auto loss = hsic::independence_loss(h, 4, ids);
    benchmark::DoNotOptimize(loss.value().data());
  }
  state.SetComplexityN(nodes);
}
BENCHMARK(BM_IndependencePenalty)->RangeMultiplier(4)->Range(64, 4096)->Complexity(benchmark::oN);

void BM_NormalizedAdjacency(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto synth = make_graph(n);
  for (auto _ : state) {
    auto a = normalized_adjacency(synth.graph);
    benchmark::DoNotOptimize(a.value().data());
  }
}
BENCHMARK(BM_NormalizedAdjacency)->RangeMultiplier(2)->Range(256, 2048);

}  // namespace

BENCHMARK_MAIN();
