#include <benchmark/benchmark.h>

#include <random>

#include "bnl/agent.hpp"

namespace {

// One gradient update (sample, forward online + target, backward, Adam) on
// a replay buffer pre-filled with random binary frames.
void BM_TrainStep(benchmark::State& state) {
  bnl::NetworkSpec spec;
  spec.bottleneck = static_cast<bnl::BottleneckKind>(state.range(0));
  spec.head_scale = static_cast<std::size_t>(state.range(1));
  std::optional<bnl::sparsity::SparsityConfig> sparse;
  if (spec.bottleneck == bnl::BottleneckKind::kSparseFlatten) sparse.emplace();
  bnl::AgentConfig cfg;
  cfg.min_replay_history = 256;
  bnl::DqnAgent agent(spec, cfg, sparse, 100000, 1);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 512; ++i) {
    bnl::TensorF obs({10, 10, 2});
    for (auto& v : obs.data()) v = rng() % 8 == 0 ? 1.0f : 0.0f;
    agent.replay().add(obs, rng() % spec.num_actions, 0.0f, rng() % 50 == 0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(agent.train_step());
  state.SetLabel(std::string(bnl::to_string(spec.bottleneck)) + " x" + std::to_string(spec.head_scale));
}

void TrainStepArgs(benchmark::internal::Benchmark* b) {
  using bnl::BottleneckKind;
  for (auto kind : {BottleneckKind::kFlatten, BottleneckKind::kGap, BottleneckKind::kGmp, BottleneckKind::kSoftMoE1,
                    BottleneckKind::kSparseFlatten}) {
    for (int scale : {1, 8}) b->Args({static_cast<int>(kind), scale});
  }
}
BENCHMARK(BM_TrainStep)->Apply(TrainStepArgs)->Unit(benchmark::kMillisecond);

}  // namespace
