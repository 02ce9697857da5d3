#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "bnl/network.hpp"
#include "bnl/optimizer.hpp"
#include "bnl/replay.hpp"
#include "bnl/sparsity.hpp"

namespace bnl {

enum class PolicyKind { kEpsilonGreedy, kSoftmax };

struct AgentConfig {
  double discount = 0.99;
  std::size_t update_horizon = 3;
  std::size_t batch_size = 32;
  std::size_t update_period = 4;
  std::size_t min_replay_history = 1000;
  std::size_t replay_capacity = 50000;
  double epsilon_start = 1.0;
  double epsilon_train_final = 0.01;
  double epsilon_eval = 0.01;
  double epsilon_decay_fraction = 0.1;  // of total steps
  double learning_rate = 6.25e-5;
  double adam_epsilon = 1.5e-4;
  double weight_decay = 0.0;
  std::size_t target_update_period = 1000;  // gradient updates
  std::optional<double> replay_ratio;        // defaults to 1 / update_period
  double huber_delta = 1.0;
  PolicyKind policy = PolicyKind::kEpsilonGreedy;
  double softmax_temperature = 1.0;

  double effective_replay_ratio() const {
    return replay_ratio ? *replay_ratio : 1.0 / static_cast<double>(update_period);
  }
  void validate() const;

  friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Lowest-index argmax.
std::size_t greedy_action(std::span<const float> q);

/// ε-greedy: one uniform draw decides exploration, a second picks the action.
std::size_t select_action(std::span<const float> q, double epsilon, std::mt19937_64& rng);

/// Samples from softmax(q / temperature).
std::size_t select_action_softmax(std::span<const float> q, double temperature, std::mt19937_64& rng);

/// y = Σ γ^k r_k + γ^m max_a Q_target(x_m, a); the bootstrap term is absent
/// for windows that end at a terminal.
TensorF nstep_target(const ReplayBatch& batch, const Network& target_network);

/// Linear anneal from epsilon_start to epsilon_train_final over the decay window.
double epsilon_at(const AgentConfig& config, std::int64_t step, std::int64_t total_steps);

/// DQN learner: online/target networks, replay, Adam, optional masks.
class DqnAgent {
 public:
  DqnAgent(const NetworkSpec& spec, const AgentConfig& config, const std::optional<sparsity::SparsityConfig>& sparse,
           std::int64_t total_steps, std::uint64_t seed);

  std::size_t act(const TensorF& observation, double epsilon);

  /// One gradient step on a sampled minibatch. Returns the Huber loss.
  /// Throws NumericError on a non-finite loss or gradient.
  float train_step();

  /// Gradual-pruning cadence hook, called once per env step.
  void on_env_step(std::int64_t step);

  const AgentConfig& config() const { return config_; }
  Network& online() { return online_; }
  const Network& online() const { return online_; }
  Network& target() { return target_; }
  const Network& target() const { return target_; }
  ReplayBuffer& replay() { return replay_; }
  const ReplayBuffer& replay() const { return replay_; }
  Adam& optimizer() { return adam_; }
  const Adam& optimizer() const { return adam_; }
  std::optional<sparsity::SparseTraining>& sparse() { return sparse_; }
  const std::optional<sparsity::SparseTraining>& sparse() const { return sparse_; }
  std::mt19937_64& rng() { return rng_; }
  const std::mt19937_64& rng() const { return rng_; }
  std::int64_t update_count() const { return updates_; }
  void set_update_count(std::int64_t n) { updates_ = n; }

  void sync_target() { target_.copy_values_from(online_); }

 private:
  AgentConfig config_;
  Network online_;
  Network target_;
  ReplayBuffer replay_;
  Adam adam_;
  std::optional<sparsity::SparseTraining> sparse_;
  std::mt19937_64 rng_;
  std::int64_t updates_ = 0;
};

}  // namespace bnl
