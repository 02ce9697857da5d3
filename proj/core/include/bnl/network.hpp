#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bnl/layers.hpp"
#include "bnl/network_spec.hpp"

namespace bnl {

enum class ParamKind { kConvKernel, kDenseWeight, kBias, kSlotLogits };
enum class ParamGroup { kEncoder, kHead };

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
  ParamKind kind;
  ParamGroup group;
  bool is_bottleneck = false;  // input weights of ψ's first layer
  bool is_output = false;      // the Q-value layer

  bool is_weight() const { return kind == ParamKind::kConvKernel || kind == ParamKind::kDenseWeight; }
};

/// Q-network ψ(bottleneck(φ(x))). Parameters alias graph leaves, so the
/// network is move-only; use clone() for an independent copy.
template <typename T>
class QNetwork {
 public:
  struct Output {
    Var<T> q;            // N×A
    Var<T> encoder_out;  // N×H×W×C (post-relu)
    Var<T> features;     // N×d, what enters ψ (slot inputs for softmoe1)
    layers::ActivationTrace<T> phi;
    layers::ActivationTrace<T> psi;  // hidden layers of ψ, output layer excluded
  };

  /// All parameters zero.
  explicit QNetwork(NetworkSpec spec);

  /// Kernels drawn from U(−1/√fan_in, 1/√fan_in), biases zero.
  QNetwork(NetworkSpec spec, std::uint64_t seed);

  QNetwork(const QNetwork&) = delete;
  QNetwork& operator=(const QNetwork&) = delete;
  QNetwork(QNetwork&&) noexcept = default;
  QNetwork& operator=(QNetwork&&) noexcept = default;

  QNetwork clone() const;

  template <typename U>
  QNetwork<U> cast() const {
    QNetwork<U> out(spec_);
    auto& dst = out.params();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i].var.mutable_value() = params_[i].var.value().template cast<U>();
    return out;
  }

  void copy_values_from(const QNetwork& other);

  /// obs is H×W×C or N×H×W×C; outputs are always batched.
  Output forward(const Var<T>& obs, bool trace = false) const;

  /// Gradient-free Q-values: [A] for a single frame, N×A for a batch.
  Tensor<T> q_values(const Tensor<T>& obs) const;

  const NetworkSpec& spec() const { return spec_; }
  std::vector<NamedParam<T>>& params() { return params_; }
  const std::vector<NamedParam<T>>& params() const { return params_; }
  std::size_t bottleneck_index() const { return bottleneck_index_; }
  const NamedParam<T>& bottleneck_param() const { return params_[bottleneck_index_]; }
  std::optional<std::size_t> find(const std::string& name) const;

  std::size_t parameter_count() const;
  void zero_grad();

  const layers::EncoderParams<T>& encoder() const { return encoder_; }
  const layers::HeadParams<T>& head() const { return head_; }
  const std::optional<layers::SoftMoE1Params<T>>& softmoe() const { return softmoe_; }

 private:
  void build();
  void register_param(std::string name, Var<T> var, ParamKind kind, ParamGroup group);

  NetworkSpec spec_;
  layers::EncoderParams<T> encoder_;
  std::optional<layers::SoftMoE1Params<T>> softmoe_;
  layers::HeadParams<T> head_;
  std::vector<NamedParam<T>> params_;
  std::size_t bottleneck_index_ = 0;
};

using Network = QNetwork<float>;

}  // namespace bnl
