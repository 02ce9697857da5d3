#include <benchmark/benchmark.h>

#include <random>

#include "bnl/ops.hpp"

namespace {

bnl::TensorF uniform(bnl::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  bnl::TensorF t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Square products at the sizes the head actually sees (batch × features × width).
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const bnl::VarF a(uniform({32, n}, 1)), b(uniform({n, n}, 2));
  bnl::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(bnl::ops::matmul(a, b).value().data().data());
  state.SetItemsProcessed(state.iterations() * 32 * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(512);

// 3×3 same-padded conv over a 10×10 frame, the encoder's first stage.
void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const bnl::VarF x(uniform({32, 10, 10, c}, 3)), k(uniform({3, 3, c, 32}, 4));
  bnl::NoGradGuard guard;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bnl::ops::conv2d(x, k, 1, bnl::ops::Padding::kSame).value().data().data());
  }
}
BENCHMARK(BM_Conv2dForward)->Arg(2)->Arg(16)->Arg(32);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const bnl::TensorF x0 = uniform({32, 10, 10, c}, 5), k0 = uniform({3, 3, c, 32}, 6);
  for (auto _ : state) {
    bnl::VarF x(x0, true), k(k0, true);
    bnl::ops::sum_all(bnl::ops::conv2d(x, k, 1, bnl::ops::Padding::kSame)).backward();
    benchmark::DoNotOptimize(k.grad().data().data());
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(2)->Arg(16)->Arg(32);

}  // namespace
