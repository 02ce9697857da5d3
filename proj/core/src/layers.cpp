#include "bnl/layers.hpp"

#include <stdexcept>

namespace bnl::layers {

using ops::Padding;

template <typename T>
Var<T> conv_forward(const ConvParams<T>& p, const Var<T>& x, std::size_t stride) {
  return ops::add_bias(ops::conv2d(x, p.kernel, stride, Padding::kSame), p.bias);
}

template <typename T>
Var<T> dense_forward(const DenseParams<T>& p, const Var<T>& x) {
  if (x.shape().size() == 1) {
    const std::size_t n = x.shape()[0];
    Var<T> row = ops::reshape(x, Shape{1, n});
    Var<T> out = ops::add_bias(ops::matmul(row, p.weight), p.bias);
    return ops::reshape(out, Shape{p.weight.shape()[1]});
  }
  return ops::add_bias(ops::matmul(x, p.weight), p.bias);
}

template <typename T>
Var<T> residual_block_forward(const ResidualBlockParams<T>& p, const Var<T>& x, ActivationTrace<T>* trace) {
  Var<T> h = ops::relu(x);
  if (trace) trace->push_back(h);
  h = conv_forward(p.conv1, h);
  h = ops::relu(h);
  if (trace) trace->push_back(h);
  h = conv_forward(p.conv2, h);
  return ops::add(h, x);
}

template <typename T>
Var<T> encoder_forward(const NetworkSpec& spec, const EncoderParams<T>& params, const Var<T>& x,
                       ActivationTrace<T>* trace) {
  Var<T> h = x;
  if (spec.encoder == EncoderKind::kMiniImpala) {
    if (params.stages.empty()) throw std::invalid_argument("encoder has no stages");
    for (const auto& stage : params.stages) {
      h = conv_forward(stage.conv, h);
      h = ops::maxpool2d(h, 2, 2);
      for (const auto& block : stage.blocks) h = residual_block_forward(block, h, trace);
    }
    h = ops::relu(h);
    if (trace) trace->push_back(h);
    return h;
  }
  if (params.convs.size() != 2) throw std::invalid_argument("mini-cnn expects two conv layers");
  h = ops::relu(conv_forward(params.convs[0], h, 1));
  if (trace) trace->push_back(h);
  h = ops::relu(conv_forward(params.convs[1], h, 2));
  if (trace) trace->push_back(h);
  return h;
}

template <typename T>
SoftMoE1Output<T> softmoe1_forward_batched(const SoftMoE1Params<T>& params, const Var<T>& features) {
  const auto& s = features.shape();
  if (s.size() != 4) throw ShapeError("softmoe1 expects N×H×W×C features, got " + shape_str(s));
  const std::size_t slots = params.slot_logit_weights.shape().at(1);
  if (slots < 1) throw std::invalid_argument("softmoe1 needs at least one slot");
  const std::size_t batch = s[0], tokens = s[1] * s[2], channels = s[3];
  const std::size_t width = params.expert_weights.shape().at(1);

  SoftMoE1Output<T> out;
  Var<T> x = ops::reshape(features, Shape{batch, tokens, channels});
  out.logits = ops::reshape(ops::matmul(ops::reshape(x, Shape{batch * tokens, channels}), params.slot_logit_weights),
                            Shape{batch, tokens, slots});
  out.dispatch = ops::softmax(out.logits, 1);
  out.combine = ops::softmax(out.logits, 2);
  out.slot_inputs = ops::bmm(ops::transpose_last2(out.dispatch), x);
  Var<T> expert = ops::relu(ops::add_bias(
      ops::matmul(ops::reshape(out.slot_inputs, Shape{batch * slots, channels}), params.expert_weights),
      params.expert_bias));
  Var<T> per_token = ops::bmm(out.combine, ops::reshape(expert, Shape{batch, slots, width}));
  out.output = ops::mean(per_token, {1});
  return out;
}

template <typename T>
Var<T> softmoe1_forward(const SoftMoE1Params<T>& params, const Var<T>& features) {
  const auto& s = features.shape();
  if (s.size() != 3) throw ShapeError("softmoe1_forward expects H×W×C, got " + shape_str(s));
  Var<T> batched = ops::reshape(features, Shape{1, s[0], s[1], s[2]});
  Var<T> out = softmoe1_forward_batched(params, batched).output;
  return ops::reshape(out, Shape{out.shape()[1]});
}

template <typename T>
Var<T> head_forward(const HeadParams<T>& params, const Var<T>& features, ActivationTrace<T>* trace) {
  Var<T> h = features;
  for (const auto& layer : params.hidden) {
    const std::size_t in = h.shape().back();
    if (in != layer.weight.shape()[0]) {
      throw ShapeError("head: feature width " + std::to_string(in) + " does not match layer input " +
                       std::to_string(layer.weight.shape()[0]));
    }
    h = ops::relu(dense_forward(layer, h));
    if (trace) trace->push_back(h);
  }
  if (h.shape().back() != params.output.weight.shape()[0]) throw ShapeError("head: output layer width mismatch");
  return dense_forward(params.output, h);
}

#define BNL_INSTANTIATE_LAYERS(T)                                                                              \
  template Var<T> conv_forward<T>(const ConvParams<T>&, const Var<T>&, std::size_t);                           \
  template Var<T> dense_forward<T>(const DenseParams<T>&, const Var<T>&);                                      \
  template Var<T> residual_block_forward<T>(const ResidualBlockParams<T>&, const Var<T>&, ActivationTrace<T>*); \
  template Var<T> encoder_forward<T>(const NetworkSpec&, const EncoderParams<T>&, const Var<T>&,               \
                                     ActivationTrace<T>*);                                                     \
  template SoftMoE1Output<T> softmoe1_forward_batched<T>(const SoftMoE1Params<T>&, const Var<T>&);             \
  template Var<T> softmoe1_forward<T>(const SoftMoE1Params<T>&, const Var<T>&);                                \
  template Var<T> head_forward<T>(const HeadParams<T>&, const Var<T>&, ActivationTrace<T>*);

BNL_INSTANTIATE_LAYERS(float)
BNL_INSTANTIATE_LAYERS(double)

#undef BNL_INSTANTIATE_LAYERS

}  // namespace bnl::layers
