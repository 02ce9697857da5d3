#include "bnl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bnl/seeding.hpp"

namespace bnl {

void AgentConfig::validate() const {
  if (!(discount >= 0.0 && discount < 1.0)) throw std::invalid_argument("discount must lie in [0, 1)");
  if (update_horizon < 1) throw std::invalid_argument("update_horizon must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (update_period < 1) throw std::invalid_argument("update_period must be >= 1");
  if (replay_capacity <= update_horizon) throw std::invalid_argument("replay_capacity must exceed update_horizon");
  if (min_replay_history > replay_capacity) throw std::invalid_argument("min_replay_history exceeds capacity");
  for (double e : {epsilon_start, epsilon_train_final, epsilon_eval}) {
    if (!(e >= 0.0 && e <= 1.0)) throw std::invalid_argument("epsilon values must lie in [0, 1]");
  }
  if (!(epsilon_decay_fraction >= 0.0 && epsilon_decay_fraction <= 1.0)) {
    throw std::invalid_argument("epsilon_decay_fraction must lie in [0, 1]");
  }
  if (learning_rate < 0.0 || adam_epsilon <= 0.0 || weight_decay < 0.0) {
    throw std::invalid_argument("invalid optimizer settings");
  }
  if (target_update_period < 1) throw std::invalid_argument("target_update_period must be >= 1");
  if (replay_ratio && !(*replay_ratio > 0.0)) throw std::invalid_argument("replay_ratio must be positive");
  if (!(huber_delta > 0.0)) throw std::invalid_argument("huber_delta must be positive");
  if (!(softmax_temperature > 0.0)) throw std::invalid_argument("softmax_temperature must be positive");
}

std::size_t greedy_action(std::span<const float> q) {
  if (q.empty()) throw std::invalid_argument("greedy_action: empty Q vector");
  std::size_t best = 0;
  for (std::size_t a = 1; a < q.size(); ++a) {
    if (q[a] > q[best]) best = a;
  }
  return best;
}

std::size_t select_action(std::span<const float> q, double epsilon, std::mt19937_64& rng) {
  if (q.empty()) throw std::invalid_argument("select_action: empty Q vector");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("select_action: epsilon must lie in [0, 1]");
  if (uniform01(rng) < epsilon) return static_cast<std::size_t>(rng() % q.size());
  return greedy_action(q);
}

std::size_t select_action_softmax(std::span<const float> q, double temperature, std::mt19937_64& rng) {
  if (q.empty()) throw std::invalid_argument("select_action_softmax: empty Q vector");
  const float mx = *std::max_element(q.begin(), q.end());
  std::vector<double> p(q.size());
  double total = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    p[a] = std::exp((q[a] - mx) / temperature);
    total += p[a];
  }
  double u = uniform01(rng) * total;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (u < p[a]) return a;
    u -= p[a];
  }
  return q.size() - 1;
}

TensorF nstep_target(const ReplayBatch& batch, const Network& target_network) {
  const std::size_t n = batch.actions.size();
  TensorF y({n});
  bool any_bootstrap = false;
  for (float d : batch.bootstrap_discount) any_bootstrap = any_bootstrap || d != 0.0f;
  TensorF q_next;
  if (any_bootstrap) q_next = target_network.q_values(batch.next_observations);
  for (std::size_t i = 0; i < n; ++i) {
    float bootstrap = 0.0f;
    if (batch.bootstrap_discount[i] != 0.0f) {
      const std::size_t a = q_next.dim(1);
      const float* row = q_next.data().data() + i * a;
      bootstrap = batch.bootstrap_discount[i] * *std::max_element(row, row + a);
    }
    y[i] = batch.returns[i] + bootstrap;
  }
  return y;
}

double epsilon_at(const AgentConfig& config, std::int64_t step, std::int64_t total_steps) {
  const double window = config.epsilon_decay_fraction * static_cast<double>(total_steps);
  if (window <= 0.0) return config.epsilon_train_final;
  const double progress = std::clamp(static_cast<double>(step) / window, 0.0, 1.0);
  return config.epsilon_start + (config.epsilon_train_final - config.epsilon_start) * progress;
}

DqnAgent::DqnAgent(const NetworkSpec& spec, const AgentConfig& config,
                   const std::optional<sparsity::SparsityConfig>& sparse, std::int64_t total_steps,
                   std::uint64_t seed)
    : config_(config),
      online_(spec, derive_seed(seed, streams::kNetworkInit)),
      target_(spec),
      replay_(config.replay_capacity, spec.input_shape, config.update_horizon, config.discount),
      rng_(derive_seed(seed, streams::kAgent)) {
  config_.validate();
  adam_ = Adam(online_, AdamOptions{config.learning_rate, 0.9, 0.999, config.adam_epsilon, config.weight_decay});
  if (sparse) {
    const auto total_updates = static_cast<std::int64_t>(
        std::floor(static_cast<double>(total_steps) * config_.effective_replay_ratio()));
    sparse_.emplace(*sparse, online_, total_steps, total_updates, derive_seed(seed, streams::kMasks));
    sparse_->apply(online_);
  }
  sync_target();
}

std::size_t DqnAgent::act(const TensorF& observation, double epsilon) {
  const TensorF q = online_.q_values(observation);
  if (config_.policy == PolicyKind::kSoftmax) return select_action_softmax(q.data(), config_.softmax_temperature, rng_);
  return select_action(q.data(), epsilon, rng_);
}

float DqnAgent::train_step() {
  const ReplayBatch batch = replay_.sample(config_.batch_size, rng_);
  const TensorF targets = nstep_target(batch, target_);

  online_.zero_grad();
  auto out = online_.forward(VarF(batch.observations));
  VarF q_taken = ops::gather_rows(out.q, std::span<const std::size_t>(batch.actions));
  VarF loss = ops::huber_loss(q_taken, VarF(targets), static_cast<float>(config_.huber_delta));
  loss.backward();

  ++updates_;
  if (sparse_) {
    const auto changed = sparse_->before_optimizer_step(updates_, online_);
    for (std::size_t i = 0; i < changed.size(); ++i) {
      if (!changed[i].empty()) adam_.reset_moments(sparse_->entries()[i].param_index, changed[i]);
    }
    sparse_->mask_gradients(online_);
  }
  adam_.step(online_);
  if (sparse_) sparse_->apply(online_);
  if (updates_ % static_cast<std::int64_t>(config_.target_update_period) == 0) sync_target();
  return loss.value().item();
}

void DqnAgent::on_env_step(std::int64_t step) {
  if (sparse_ && sparse_->on_env_step(step, online_)) {
    // pruned weights restart from zero moments if they are ever regrown
    auto& entries = sparse_->entries();
    for (const auto& e : entries) {
      std::vector<std::size_t> off;
      for (std::size_t j = 0; j < e.mask.size(); ++j) {
        if (!e.mask.bits[j]) off.push_back(j);
      }
      adam_.reset_moments(e.param_index, off);
    }
  }
}

}  // namespace bnl
