#include "bnl/network.hpp"

#include <cmath>
#include <random>

namespace bnl {

namespace {

template <typename T>
Var<T> leaf(Shape shape) {
  return Var<T>(Tensor<T>(std::move(shape)), true);
}

template <typename T>
layers::ConvParams<T> make_conv(std::size_t cin, std::size_t cout) {
  return {leaf<T>({3, 3, cin, cout}), leaf<T>({cout})};
}

template <typename T>
layers::DenseParams<T> make_dense(std::size_t in, std::size_t out) {
  return {leaf<T>({in, out}), leaf<T>({out})};
}

template <typename T>
layers::ResidualBlockParams<T> make_block(std::size_t channels) {
  return {make_conv<T>(channels, channels), make_conv<T>(channels, channels)};
}

}  // namespace

template <typename T>
QNetwork<T>::QNetwork(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  build();
}

template <typename T>
QNetwork<T>::QNetwork(NetworkSpec spec, std::uint64_t seed) : QNetwork(std::move(spec)) {
  std::mt19937_64 rng(seed);
  for (auto& p : params_) {
    if (p.kind == ParamKind::kBias) continue;
    const auto& shape = p.var.shape();
    std::size_t fan_in = 1;
    for (std::size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (T& v : p.var.mutable_value().data()) v = static_cast<T>(dist(rng));
  }
}

template <typename T>
void QNetwork<T>::register_param(std::string name, Var<T> var, ParamKind kind, ParamGroup group) {
  params_.push_back({std::move(name), std::move(var), kind, group});
}

template <typename T>
void QNetwork<T>::build() {
  const std::size_t in_channels = spec_.input_shape[2];
  if (spec_.encoder == EncoderKind::kMiniImpala) {
    std::size_t cin = in_channels;
    for (std::size_t s = 0; s < spec_.encoder_channels.size(); ++s) {
      const std::size_t ch = spec_.encoder_channels[s];
      layers::EncoderStageParams<T> stage;
      stage.conv = make_conv<T>(cin, ch);
      std::size_t blocks = 1;
      if (s + 1 == spec_.encoder_channels.size()) blocks += spec_.extra_resnet_blocks;
      for (std::size_t b = 0; b < blocks; ++b) stage.blocks.push_back(make_block<T>(ch));
      encoder_.stages.push_back(std::move(stage));
      cin = ch;
    }
  } else {
    encoder_.convs.push_back(make_conv<T>(in_channels, 16));
    encoder_.convs.push_back(make_conv<T>(16, 32));
  }

  const Shape enc = encoder_output_shape(spec_);
  const std::size_t width = spec_.head_width();
  std::size_t hidden_layers = 1 + spec_.head_extra_layers;
  std::size_t next_in = bottleneck_input_dim(spec_);
  if (spec_.bottleneck == BottleneckKind::kSoftMoE1) {
    softmoe_ = layers::SoftMoE1Params<T>{leaf<T>({enc[2], spec_.softmoe_slots}), leaf<T>({enc[2], width}),
                                         leaf<T>({width})};
    hidden_layers -= 1;
    next_in = width;
  }
  for (std::size_t i = 0; i < hidden_layers; ++i) {
    head_.hidden.push_back(make_dense<T>(next_in, width));
    next_in = width;
  }
  head_.output = make_dense<T>(next_in, spec_.num_actions);

  // catalog, in a fixed order shared with checkpoints
  for (std::size_t s = 0; s < encoder_.stages.size(); ++s) {
    const auto& stage = encoder_.stages[s];
    const std::string prefix = "encoder/stage" + std::to_string(s);
    register_param(prefix + "/conv/kernel", stage.conv.kernel, ParamKind::kConvKernel, ParamGroup::kEncoder);
    register_param(prefix + "/conv/bias", stage.conv.bias, ParamKind::kBias, ParamGroup::kEncoder);
    for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
      const std::string bp = prefix + "/block" + std::to_string(b);
      const auto& block = stage.blocks[b];
      register_param(bp + "/conv1/kernel", block.conv1.kernel, ParamKind::kConvKernel, ParamGroup::kEncoder);
      register_param(bp + "/conv1/bias", block.conv1.bias, ParamKind::kBias, ParamGroup::kEncoder);
      register_param(bp + "/conv2/kernel", block.conv2.kernel, ParamKind::kConvKernel, ParamGroup::kEncoder);
      register_param(bp + "/conv2/bias", block.conv2.bias, ParamKind::kBias, ParamGroup::kEncoder);
    }
  }
  for (std::size_t i = 0; i < encoder_.convs.size(); ++i) {
    const std::string prefix = "encoder/conv" + std::to_string(i);
    register_param(prefix + "/kernel", encoder_.convs[i].kernel, ParamKind::kConvKernel, ParamGroup::kEncoder);
    register_param(prefix + "/bias", encoder_.convs[i].bias, ParamKind::kBias, ParamGroup::kEncoder);
  }
  if (softmoe_) {
    register_param("head/softmoe/slot_logits", softmoe_->slot_logit_weights, ParamKind::kSlotLogits,
                   ParamGroup::kHead);
    bottleneck_index_ = params_.size();
    register_param("head/softmoe/expert/weight", softmoe_->expert_weights, ParamKind::kDenseWeight,
                   ParamGroup::kHead);
    register_param("head/softmoe/expert/bias", softmoe_->expert_bias, ParamKind::kBias, ParamGroup::kHead);
  }
  for (std::size_t i = 0; i < head_.hidden.size(); ++i) {
    const std::string prefix = "head/dense" + std::to_string(i);
    if (!softmoe_ && i == 0) bottleneck_index_ = params_.size();
    register_param(prefix + "/weight", head_.hidden[i].weight, ParamKind::kDenseWeight, ParamGroup::kHead);
    register_param(prefix + "/bias", head_.hidden[i].bias, ParamKind::kBias, ParamGroup::kHead);
  }
  register_param("head/output/weight", head_.output.weight, ParamKind::kDenseWeight, ParamGroup::kHead);
  params_.back().is_output = true;
  register_param("head/output/bias", head_.output.bias, ParamKind::kBias, ParamGroup::kHead);
  params_.back().is_output = true;
  params_[bottleneck_index_].is_bottleneck = true;
}

template <typename T>
QNetwork<T> QNetwork<T>::clone() const {
  QNetwork out(spec_);
  out.copy_values_from(*this);
  return out;
}

template <typename T>
void QNetwork<T>::copy_values_from(const QNetwork& other) {
  if (!(other.spec_ == spec_)) throw std::invalid_argument("copy_values_from: network specs differ");
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i].var.mutable_value() = other.params_[i].var.value();
}

template <typename T>
typename QNetwork<T>::Output QNetwork<T>::forward(const Var<T>& obs, bool trace) const {
  Var<T> x = obs;
  if (x.shape().size() == 3) {
    const auto& s = x.shape();
    x = ops::reshape(x, Shape{1, s[0], s[1], s[2]});
  }
  if (x.shape().size() != 4 || Shape(x.shape().begin() + 1, x.shape().end()) != spec_.input_shape) {
    throw ShapeError("network input " + shape_str(obs.shape()) + " does not match spec input " +
                     shape_str(spec_.input_shape));
  }
  const std::size_t batch = x.shape()[0];
  Output out;
  out.encoder_out = layers::encoder_forward(spec_, encoder_, x, trace ? &out.phi : nullptr);
  Var<T> head_in;
  switch (spec_.bottleneck) {
    case BottleneckKind::kFlatten:
    case BottleneckKind::kSparseFlatten:
      out.features = ops::reshape(out.encoder_out, Shape{batch, out.encoder_out.value().size() / batch});
      head_in = out.features;
      break;
    case BottleneckKind::kGap:
      out.features = ops::global_avg_pool(out.encoder_out);
      head_in = out.features;
      break;
    case BottleneckKind::kGmp:
      out.features = ops::global_max_pool(out.encoder_out);
      head_in = out.features;
      break;
    case BottleneckKind::kSoftMoE1: {
      auto moe = layers::softmoe1_forward_batched(*softmoe_, out.encoder_out);
      out.features = ops::reshape(moe.slot_inputs, Shape{batch, moe.slot_inputs.value().size() / batch});
      head_in = moe.output;
      if (trace) out.psi.push_back(moe.output);
      break;
    }
  }
  out.q = layers::head_forward(head_, head_in, trace ? &out.psi : nullptr);
  return out;
}

template <typename T>
Tensor<T> QNetwork<T>::q_values(const Tensor<T>& obs) const {
  NoGradGuard guard;
  Tensor<T> q = forward(Var<T>(obs), false).q.value();
  if (obs.rank() == 3) return q.reshaped({q.size()});
  return q;
}

template <typename T>
std::optional<std::size_t> QNetwork<T>::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

template <typename T>
std::size_t QNetwork<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.var.value().size();
  return total;
}

template <typename T>
void QNetwork<T>::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

template class QNetwork<float>;
template class QNetwork<double>;

}  // namespace bnl
