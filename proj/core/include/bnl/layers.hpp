#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bnl/autograd.hpp"
#include "bnl/network_spec.hpp"
#include "bnl/ops.hpp"

namespace bnl::layers {

template <typename T>
struct ConvParams {
  Var<T> kernel;  // kh×kw×Cin×Cout
  Var<T> bias;    // Cout
};

template <typename T>
struct DenseParams {
  Var<T> weight;  // in×out
  Var<T> bias;    // out
};

template <typename T>
struct ResidualBlockParams {
  ConvParams<T> conv1;
  ConvParams<T> conv2;
};

template <typename T>
struct EncoderStageParams {
  ConvParams<T> conv;
  std::vector<ResidualBlockParams<T>> blocks;
};

template <typename T>
struct EncoderParams {
  std::vector<EncoderStageParams<T>> stages;  // mini-impala
  std::vector<ConvParams<T>> convs;           // mini-cnn
};

/// Single-expert soft MoE. The expert is shared by every slot, so its
/// weight block is C×dim(ψ) regardless of the token count.
template <typename T>
struct SoftMoE1Params {
  Var<T> slot_logit_weights;  // C×p
  Var<T> expert_weights;      // C×dim(ψ)
  Var<T> expert_bias;         // dim(ψ)
  std::size_t slots() const { return slot_logit_weights.shape().at(1); }
};

template <typename T>
struct HeadParams {
  std::vector<DenseParams<T>> hidden;
  DenseParams<T> output;
};

/// Post-relu activations in forward order, one entry per relu site.
template <typename T>
using ActivationTrace = std::vector<Var<T>>;

template <typename T>
Var<T> conv_forward(const ConvParams<T>& p, const Var<T>& x, std::size_t stride = 1);

template <typename T>
Var<T> dense_forward(const DenseParams<T>& p, const Var<T>& x);

/// relu → conv → relu → conv, plus the skip connection.
template <typename T>
Var<T> residual_block_forward(const ResidualBlockParams<T>& p, const Var<T>& x, ActivationTrace<T>* trace);

/// φ(x). Accepts H₀×W₀×C₀ or N×H₀×W₀×C₀ and returns the post-relu H×W×C map.
template <typename T>
Var<T> encoder_forward(const NetworkSpec& spec, const EncoderParams<T>& params, const Var<T>& x,
                       ActivationTrace<T>* trace = nullptr);

/// Internal quantities of a SoftMoE-1 pass, batched N×…
template <typename T>
struct SoftMoE1Output {
  Var<T> output;       // N×dim(ψ)
  Var<T> logits;       // N×n×p
  Var<T> dispatch;     // N×n×p, softmax over tokens
  Var<T> combine;      // N×n×p, softmax over slots
  Var<T> slot_inputs;  // N×p×C
};

/// Tokens are the H·W spatial positions of an N×H×W×C map.
template <typename T>
SoftMoE1Output<T> softmoe1_forward_batched(const SoftMoE1Params<T>& params, const Var<T>& features);

/// H×W×C → dim(ψ).
template <typename T>
Var<T> softmoe1_forward(const SoftMoE1Params<T>& params, const Var<T>& features);

/// dense→relu for each hidden layer, then a linear output layer.
template <typename T>
Var<T> head_forward(const HeadParams<T>& params, const Var<T>& features, ActivationTrace<T>* trace = nullptr);

}  // namespace bnl::layers
