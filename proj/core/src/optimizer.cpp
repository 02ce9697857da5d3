#include "bnl/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace bnl {

Adam::Adam(const Network& network, AdamOptions options) : options_(options) {
  if (options_.learning_rate < 0.0 || options_.epsilon <= 0.0 || options_.weight_decay < 0.0) {
    throw std::invalid_argument("invalid Adam options");
  }
  for (const auto& p : network.params()) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

void Adam::step(Network& network) {
  auto& params = network.params();
  if (params.size() != m_.size()) throw std::logic_error("Adam: network does not match optimizer state");
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const auto lr = static_cast<float>(options_.learning_rate);
  const auto eps = static_cast<float>(options_.epsilon);
  const auto wd = static_cast<float>(options_.weight_decay);
  const auto fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  const auto inv_c1 = static_cast<float>(1.0 / c1), inv_c2 = static_cast<float>(1.0 / c2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].var.mutable_value().data();
    const auto g = params[i].var.grad().data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!std::isfinite(g[j])) throw NumericError("Adam: non-finite gradient in " + params[i].name);
      m[j] = fb1 * m[j] + (1.0f - fb1) * g[j];
      v[j] = fb2 * v[j] + (1.0f - fb2) * g[j] * g[j];
      const float update = (m[j] * inv_c1) / (std::sqrt(v[j] * inv_c2) + eps);
      w[j] -= lr * (update + wd * w[j]);
    }
  }
}

void Adam::reset_moments(std::size_t param_index, std::span<const std::size_t> positions) {
  for (std::size_t pos : positions) {
    m_.at(param_index)[pos] = 0.0f;
    v_.at(param_index)[pos] = 0.0f;
  }
}

}  // namespace bnl
