#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "bnl/layers.hpp"
#include "bnl/network.hpp"
#include "bnl/sparsity.hpp"
#include "support/grad_cases.hpp"
#include "support/oracles.hpp"
#include "support/specs.hpp"

using namespace bnl;
using namespace bnl::testing;

namespace {

NetworkSpec default_spec(BottleneckKind b, std::size_t scale = 1) {
  NetworkSpec s;
  s.bottleneck = b;
  s.head_scale = scale;
  return s;
}

TensorD permute_positions(const TensorD& f, const std::vector<std::size_t>& perm) {
  const std::size_t C = f.dim(2);
  TensorD out(f.shape());
  for (std::size_t p = 0; p < perm.size(); ++p)
    for (std::size_t c = 0; c < C; ++c) out[p * C + c] = f[perm[p] * C + c];
  return out;
}

}  // namespace

TEST(Encoder, MiniImpalaOn10x10x2Gives3x3x32) {
  Network net(default_spec(BottleneckKind::kFlatten), 1);
  TensorF obs({10, 10, 2}, 1.0f);
  const auto out = net.forward(VarF(obs));
  EXPECT_EQ(out.encoder_out.shape(), (Shape{1, 3, 3, 32}));
  EXPECT_EQ(encoder_output_shape(net.spec()), (Shape{3, 3, 32}));
}

TEST(Encoder, MiniCnnShape) {
  NetworkSpec s = default_spec(BottleneckKind::kGap);
  s.encoder = EncoderKind::kMiniCnn;
  Network net(s, 2);
  const auto out = net.forward(VarF(TensorF({10, 10, 2}, 0.5f)));
  EXPECT_EQ(out.encoder_out.shape(), (Shape{1, 5, 5, 32}));
}

TEST(Encoder, ExtraBlocksKeepShapeAndAddExactlyTheirParameters) {
  // Both deepening variants in circulation: two and four extra blocks.
  NetworkSpec a = default_spec(BottleneckKind::kFlatten);
  Network na(a, 3);
  TensorF obs({10, 10, 2}, 1.0f);
  const std::size_t C = 32;
  const std::size_t block = 2 * (3 * 3 * C * C + C);
  for (std::size_t extra : {2u, 4u}) {
    NetworkSpec b = a;
    b.extra_resnet_blocks = extra;
    Network nb(b, 3);
    EXPECT_EQ(na.forward(VarF(obs)).encoder_out.shape(), nb.forward(VarF(obs)).encoder_out.shape());
    EXPECT_EQ(nb.parameter_count() - na.parameter_count(), extra * block);
  }
}

TEST(Encoder, ZeroNetworkGivesZeroOutput) {
  Network net(default_spec(BottleneckKind::kFlatten));
  const auto out = net.forward(VarF(TensorF({10, 10, 2}, 0.0f)));
  for (float v : out.encoder_out.value().data()) EXPECT_EQ(v, 0.0f);
}

TEST(Encoder, OutputShapeMatchesHandTraceOverRandomSpecs) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 40; ++i) {
    NetworkSpec s = random_spec(rng);
    const auto e = expected_encoder_shape(s);
    EXPECT_EQ(encoder_output_shape(s), (Shape{e.h, e.w, e.c}));
    if (i < 10) {
      Network net(s, static_cast<std::uint64_t>(i));
      const auto out = net.forward(VarF(TensorF(s.input_shape, 1.0f)));
      EXPECT_EQ(out.encoder_out.shape(), (Shape{1, e.h, e.w, e.c}));
    }
  }
}

TEST(Encoder, SpatialCollapseIsRejected) {
  NetworkSpec s;
  s.input_shape = {1, 1, 1};
  s.encoder_channels = {4, 4, 4};
  EXPECT_NO_THROW(s.validate());  // ceil-mode pooling never reaches zero
  s.input_shape = {0, 4, 1};
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Pooling, GapExamples) {
  VarD f(TensorD({2, 2, 1}, {1, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(ops::global_avg_pool(f).value()[0], 2.5);
  for (std::size_t h : {1u, 3u, 7u}) {
    VarD c(TensorD({h, h + 1, 2}, 1.75));
    auto g = ops::global_avg_pool(c).value();
    EXPECT_DOUBLE_EQ(g[0], 1.75);
    EXPECT_DOUBLE_EQ(g[1], 1.75);
  }
}

TEST(Pooling, GapMatchesLoopOracleExactly) {
  std::mt19937_64 rng(6);
  TensorD f = random_tensor({3, 3, 2}, rng);
  const auto g = ops::global_avg_pool(VarD(f)).value();
  const auto o = gap_oracle(f);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(g[c], o[c]);
}

TEST(Pooling, GapBackwardIsUniform) {
  VarD f(TensorD({2, 3, 2}, 1.0), true);
  ops::sum_all(ops::global_avg_pool(f)).backward();
  for (double g : f.grad().data()) EXPECT_DOUBLE_EQ(g, 1.0 / 6.0);
}

TEST(Pooling, GmpExamplesAndDominatesGap) {
  VarD f(TensorD({2, 2, 1}, {1, 2, 3, 4}));
  EXPECT_EQ(ops::global_max_pool(f).value()[0], 4.0);
  EXPECT_EQ(ops::global_max_pool(VarD(TensorD({3, 3, 1}, -2.0))).value()[0], -2.0);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    TensorD t = random_tensor({1 + rng() % 5, 1 + rng() % 5, 1 + rng() % 4}, rng);
    auto mx = ops::global_max_pool(VarD(t)).value();
    auto av = ops::global_avg_pool(VarD(t)).value();
    for (std::size_t c = 0; c < mx.size(); ++c) EXPECT_GE(mx[c], av[c]);
  }
}

TEST(Pooling, GmpTieGoesToFirstPosition) {
  VarD f(TensorD({2, 2, 1}, {3, 1, 3, 0}), true);
  ops::sum_all(ops::global_max_pool(f)).backward();
  EXPECT_EQ(f.grad()[0], 1.0);
  EXPECT_EQ(f.grad()[2], 0.0);
}

TEST(Pooling, PooledBottlenecksArePermutationInvariantFlattenIsNot) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    const std::size_t H = 2 + rng() % 3, W = 2 + rng() % 3, C = 1 + rng() % 4;
    TensorD f = distinct({H, W, C}, rng);
    std::vector<std::size_t> perm(H * W);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    if (std::is_sorted(perm.begin(), perm.end())) std::swap(perm[0], perm[1]);
    TensorD g = permute_positions(f, perm);
    const auto a1 = ops::global_avg_pool(VarD(f)).value(), a2 = ops::global_avg_pool(VarD(g)).value();
    const auto m1 = ops::global_max_pool(VarD(f)).value(), m2 = ops::global_max_pool(VarD(g)).value();
    for (std::size_t c = 0; c < C; ++c) {
      EXPECT_NEAR(a1[c], a2[c], 1e-12);
      EXPECT_EQ(m1[c], m2[c]);
    }
    // Flatten witness: a generic dense readout sees the permutation.
    TensorD w = random_tensor({H * W * C, 1}, rng);
    const double y1 = matmul_oracle(f.reshaped({1, H * W * C}), w)[0];
    const double y2 = matmul_oracle(g.reshaped({1, H * W * C}), w)[0];
    EXPECT_NE(y1, y2);
  }
}

TEST(SoftMoE, SingleTokenIgnoresSlotLogits) {
  std::mt19937_64 rng(9);
  layers::SoftMoE1Params<double> p{VarD(random_tensor({3, 2}, rng)), VarD(random_tensor({3, 4}, rng)),
                                   VarD(random_tensor({4}, rng))};
  TensorD x = random_tensor({1, 1, 3}, rng);
  const auto y = layers::softmoe1_forward(p, VarD(x)).value();
  for (std::size_t k = 0; k < 4; ++k) {
    double acc = p.expert_bias.value()[k];
    for (std::size_t c = 0; c < 3; ++c) acc += x[c] * p.expert_weights.value()[c * 4 + k];
    EXPECT_NEAR(y[k], std::max(0.0, acc), 1e-12);
  }
  p.slot_logit_weights.mutable_value() = random_tensor({3, 2}, rng, -5, 5);
  const auto y2 = layers::softmoe1_forward(p, VarD(x)).value();
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(y[k], y2[k], 1e-12);
}

TEST(SoftMoE, IdenticalTokensGiveThatToken) {
  std::mt19937_64 rng(10);
  layers::SoftMoE1Params<double> p{VarD(random_tensor({3, 1}, rng)), VarD(random_tensor({3, 2}, rng)),
                                   VarD(random_tensor({2}, rng))};
  TensorD tok = random_tensor({3}, rng);
  TensorD x({1, 1, 2, 3});
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t c = 0; c < 3; ++c) x[t * 3 + c] = tok[c];
  const auto out = layers::softmoe1_forward_batched(p, VarD(x));
  EXPECT_NEAR(out.dispatch.value()[0], 0.5, 1e-12);
  EXPECT_NEAR(out.dispatch.value()[1], 0.5, 1e-12);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out.slot_inputs.value()[c], tok[c], 1e-12);
}

TEST(SoftMoE, MatchesSmallMatrixOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 4, C = 3, p = 2, d = 5;
    TensorD x = random_tensor({n, C}, rng), phi = random_tensor({C, p}, rng);
    TensorD w = random_tensor({C, d}, rng), b = random_tensor({d}, rng);
    layers::SoftMoE1Params<double> params{VarD(phi), VarD(w), VarD(b)};
    const auto y = layers::softmoe1_forward(params, VarD(x.reshaped({2, 2, C}))).value();
    const auto o = softmoe_oracle(x, phi, w, b);
    for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(y[k], o.output[k], 1e-5 * std::max(1.0, std::abs(o.output[k])));
  }
}

TEST(SoftMoE, StochasticMatricesAndEquivariance) {
  std::mt19937_64 rng(12);
  const std::size_t H = 3, W = 3, C = 4, p = 3;
  layers::SoftMoE1Params<float> params{VarF(random_tensor_f({C, p}, rng)), VarF(random_tensor_f({C, 6}, rng)),
                                       VarF(random_tensor_f({6}, rng))};
  TensorF x = random_tensor_f({1, H, W, C}, rng);
  const auto out = layers::softmoe1_forward_batched(params, VarF(x));
  const auto& D = out.dispatch.value();
  const auto& Cm = out.combine.value();
  for (std::size_t j = 0; j < p; ++j) {
    double s = 0;
    for (std::size_t t = 0; t < H * W; ++t) s += D[t * p + j];
    EXPECT_LT(std::abs(s - 1.0), 1e-6);
  }
  for (std::size_t t = 0; t < H * W; ++t) {
    double s = 0;
    for (std::size_t j = 0; j < p; ++j) s += Cm[t * p + j];
    EXPECT_LT(std::abs(s - 1.0), 1e-6);
  }
  std::vector<std::size_t> perm(H * W);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  TensorF xp(x.shape());
  for (std::size_t t = 0; t < H * W; ++t)
    for (std::size_t c = 0; c < C; ++c) xp[perm[t] * C + c] = x[t * C + c];
  const auto outp = layers::softmoe1_forward_batched(params, VarF(xp));
  for (std::size_t t = 0; t < H * W; ++t)
    for (std::size_t j = 0; j < p; ++j) EXPECT_EQ(out.logits.value()[t * p + j], outp.logits.value()[perm[t] * p + j]);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(out.output.value()[k], outp.output.value()[k], 1e-6);
}

TEST(Head, ZeroWeightsReturnFinalBias) {
  NetworkSpec s = default_spec(BottleneckKind::kGap);
  Network net(s);
  auto idx = net.find("head/output/bias");
  ASSERT_TRUE(idx.has_value());
  net.params()[*idx].var.mutable_value() = TensorF({3}, {0.5f, -1.0f, 2.0f});
  std::mt19937_64 rng(13);
  const auto q = net.q_values(random_tensor_f({10, 10, 2}, rng, 0, 1));
  EXPECT_EQ(q[0], 0.5f);
  EXPECT_EQ(q[1], -1.0f);
  EXPECT_EQ(q[2], 2.0f);
}

TEST(Head, WidthAndBottleneckCounts) {
  NetworkSpec s = default_spec(BottleneckKind::kFlatten, 4);
  EXPECT_EQ(s.head_width(), 256u);
  Network flat(s, 1);
  EXPECT_EQ(flat.bottleneck_param().var.value().size(), 73728u);
  EXPECT_EQ(flat.bottleneck_param().var.shape(), (Shape{288, 256}));
  s.bottleneck = BottleneckKind::kGap;
  Network gap(s, 1);
  EXPECT_EQ(gap.bottleneck_param().var.value().size(), 8192u);
}

TEST(Head, ExtraLayersAddHiddenDenseLayers) {
  NetworkSpec s = default_spec(BottleneckKind::kGap);
  s.head_extra_layers = 2;
  Network net(s, 1);
  EXPECT_EQ(net.head().hidden.size(), 3u);
  const auto out = net.forward(VarF(TensorF({10, 10, 2}, 1.0f)), true);
  EXPECT_EQ(out.psi.size(), 3u);
}

TEST(Head, WidthMismatchThrows) {
  layers::HeadParams<float> h;
  h.hidden.push_back({VarF(TensorF({4, 2})), VarF(TensorF({2}))});
  h.output = {VarF(TensorF({2, 3})), VarF(TensorF({3}))};
  EXPECT_THROW(layers::head_forward(h, VarF(TensorF({5}))), ShapeError);
}

TEST(Network, BottleneckCountIdentityOverRandomSpecs) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 60; ++i) {
    NetworkSpec s = random_spec(rng);
    Network net(s, static_cast<std::uint64_t>(i));
    EXPECT_EQ(net.bottleneck_param().var.value().size(), expected_dense_bottleneck_count(s));
    EXPECT_TRUE(net.bottleneck_param().is_bottleneck);
  }
}

TEST(Network, QValuesPureFiniteAndBatched) {
  std::mt19937_64 rng(15);
  for (auto b : {BottleneckKind::kFlatten, BottleneckKind::kGap, BottleneckKind::kGmp, BottleneckKind::kSoftMoE1,
                 BottleneckKind::kSparseFlatten}) {
    Network net(default_spec(b), 4);
    TensorF obs = random_tensor_f({10, 10, 2}, rng, 0, 1);
    const auto q1 = net.q_values(obs);
    const auto q2 = net.q_values(obs);
    EXPECT_EQ(q1, q2) << to_string(b);
    EXPECT_TRUE(q1.all_finite());
    TensorF batch({2, 10, 10, 2});
    std::copy(obs.data().begin(), obs.data().end(), batch.data().begin());
    std::copy(obs.data().begin(), obs.data().end(), batch.data().begin() + 200);
    const auto qb = net.q_values(batch);
    ASSERT_EQ(qb.shape(), (Shape{2, 3}));
    for (std::size_t a = 0; a < 3; ++a) {
      EXPECT_NEAR(qb[a], q1[a], 1e-5f);
      EXPECT_NEAR(qb[3 + a], q1[a], 1e-5f);
    }
  }
}

TEST(Network, ForwardDoesNotMutateParameters) {
  Network net(default_spec(BottleneckKind::kSoftMoE1), 5);
  std::vector<TensorF> before;
  for (const auto& p : net.params()) before.push_back(p.var.value());
  auto out = net.forward(VarF(TensorF({10, 10, 2}, 1.0f)), true);
  ops::sum_all(out.q).backward();
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(net.params()[i].var.value(), before[i]);
}

TEST(Network, SeedDeterminesInitialisation) {
  Network a(default_spec(BottleneckKind::kFlatten), 7), b(default_spec(BottleneckKind::kFlatten), 7),
      c(default_spec(BottleneckKind::kFlatten), 8);
  EXPECT_EQ(a.params()[0].var.value(), b.params()[0].var.value());
  EXPECT_NE(a.params()[0].var.value(), c.params()[0].var.value());
  for (const auto& p : a.params()) {
    if (p.kind == ParamKind::kBias) {
      for (float v : p.var.value().data()) EXPECT_EQ(v, 0.0f);
    }
  }
}

TEST(Network, CloneIsIndependent) {
  Network a(default_spec(BottleneckKind::kGap), 1);
  Network b = a.clone();
  b.params()[0].var.mutable_value()[0] += 1.0f;
  EXPECT_NE(a.params()[0].var.value()[0], b.params()[0].var.value()[0]);
}
