#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bnl/network.hpp"

namespace bnl {

struct AdamOptions {
  double learning_rate = 6.25e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1.5e-4;
  double weight_decay = 0.0;  // decoupled, applied as lr·wd·w
};

/// Adam with bias correction over a network's parameter catalog.
class Adam {
 public:
  Adam() = default;
  Adam(const Network& network, AdamOptions options);

  void step(Network& network);

  /// Clears both moments at the given flat positions of one parameter.
  void reset_moments(std::size_t param_index, std::span<const std::size_t> positions);

  const AdamOptions& options() const { return options_; }
  std::int64_t step_count() const { return t_; }

  std::vector<TensorF>& first_moments() { return m_; }
  std::vector<TensorF>& second_moments() { return v_; }
  const std::vector<TensorF>& first_moments() const { return m_; }
  const std::vector<TensorF>& second_moments() const { return v_; }
  void set_step_count(std::int64_t t) { t_ = t; }

 private:
  AdamOptions options_;
  std::vector<TensorF> m_;
  std::vector<TensorF> v_;
  std::int64_t t_ = 0;
};

}  // namespace bnl
