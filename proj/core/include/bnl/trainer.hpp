#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bnl/agent.hpp"
#include "bnl/config.hpp"
#include "bnl/envs.hpp"
#include "bnl/run_record.hpp"

namespace bnl {

/// One seed of one experiment cell: environment interaction, learning at the
/// configured replay ratio, and periodic evaluation.
class Trainer {
 public:
  Trainer(ExperimentConfig config, std::uint64_t seed);

  const ExperimentConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  std::int64_t step() const { return step_; }
  bool finished() const { return step_ >= config_.total_steps; }

  /// One environment step plus every gradient update it makes due. Returns
  /// the evaluation record when the step lands on the evaluation cadence.
  /// Throws NumericError when learning diverges.
  std::optional<RunRecord> advance();

  /// Greedy evaluation and diagnostics at the current step.
  RunRecord evaluate();

  /// Record emitted when a run halts on a numeric failure.
  RunRecord diagnostic_record() const;

  /// Probe batch used for the diagnostics at the current step.
  TensorF probe_batch() const;

  DqnAgent& agent() { return *agent_; }
  const DqnAgent& agent() const { return *agent_; }
  envs::Environment& env() { return *env_; }
  const envs::Environment& env() const { return *env_; }
  std::int64_t steps_past_warmup() const { return past_warmup_; }

 private:
  friend void save_checkpoint(const std::string& path, const Trainer& trainer);
  friend Trainer load_checkpoint(const std::string& path);

  double elapsed_seconds() const;

  ExperimentConfig config_;
  std::uint64_t seed_;
  std::unique_ptr<DqnAgent> agent_;
  std::unique_ptr<envs::Environment> env_;
  TensorF observation_;
  std::int64_t step_ = 0;
  std::int64_t past_warmup_ = 0;
  double loss_sum_ = 0.0;
  std::int64_t loss_count_ = 0;
  double wall_clock_offset_ = 0.0;
  std::chrono::steady_clock::time_point started_;
};

struct RunOptions {
  std::function<void(const RunRecord&)> on_record;
  /// Ends the run early once it returns true for an emitted record.
  std::function<bool(const RunRecord&)> stop_when;
  /// When set, checkpoints are written here every config.checkpoint_every
  /// steps and when the run ends.
  std::string checkpoint_path;
  /// Stops (without finishing) once this step is reached; for interruption tests.
  std::optional<std::int64_t> stop_at_step;
};

struct RunResult {
  std::vector<RunRecord> records;
  bool halted = false;  // numeric failure
  std::string halt_reason;
  bool stopped_early = false;
};

RunResult run_training(Trainer& trainer, const RunOptions& options = {});
RunResult run_training(const ExperimentConfig& config, std::uint64_t seed, const RunOptions& options = {});

}  // namespace bnl
