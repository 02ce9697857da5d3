#include "bnl/trainer.hpp"

#include <cmath>
#include <limits>

#include "bnl/checkpoint.hpp"
#include "bnl/metrics.hpp"
#include "bnl/seeding.hpp"
#include "bnl/stats.hpp"

namespace bnl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t step_seed(std::uint64_t seed, std::uint64_t stream, std::int64_t step) {
  return derive_seed(derive_seed(seed, stream), static_cast<std::uint64_t>(step));
}

}  // namespace

Trainer::Trainer(ExperimentConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed), started_(std::chrono::steady_clock::now()) {
  config_.validate();
  agent_ = std::make_unique<DqnAgent>(config_.network, config_.agent, config_.sparsity, config_.total_steps, seed_);
  env_ = envs::make_env(config_.env, derive_seed(seed_, streams::kEnv), config_.frame_stack);
  observation_ = env_->reset();
}

double Trainer::elapsed_seconds() const {
  return wall_clock_offset_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
}

std::optional<RunRecord> Trainer::advance() {
  if (finished()) throw std::logic_error("Trainer::advance past total_steps");
  const AgentConfig& ac = agent_->config();
  const double eps = epsilon_at(ac, step_, config_.total_steps);
  const std::size_t action = agent_->act(observation_, eps);
  envs::StepResult res = env_->step(static_cast<envs::Action>(action));
  auto& replay = agent_->replay();
  replay.add(observation_, action, envs::clip_reward(res.reward), res.terminal);
  if (res.truncated && !res.terminal) replay.add_boundary(res.observation);
  observation_ = res.done() ? env_->reset() : std::move(res.observation);
  ++step_;
  agent_->on_env_step(step_);

  if (replay.size() >= ac.min_replay_history) {
    ++past_warmup_;
    const auto due = ac.replay_ratio
                         ? static_cast<std::int64_t>(std::floor(static_cast<double>(past_warmup_) * *ac.replay_ratio))
                         : past_warmup_ / static_cast<std::int64_t>(ac.update_period);
    while (agent_->update_count() < due) {
      loss_sum_ += agent_->train_step();
      ++loss_count_;
    }
  }

  if (step_ % config_.eval_every == 0 || finished()) return evaluate();
  return std::nullopt;
}

TensorF Trainer::probe_batch() const {
  std::mt19937_64 rng(step_seed(seed_, streams::kProbe, step_));
  return agent_->replay().sample_observations(config_.probe_size, rng);
}

RunRecord Trainer::evaluate() {
  RunRecord r;
  r.run_id = run_id(config_, seed_);
  r.env = config_.env;
  r.seed = seed_;
  r.step = step_;

  const std::uint64_t eval_seed = step_seed(seed_, streams::kEval, step_);
  auto eval_env = envs::make_env(config_.env, eval_seed, config_.frame_stack);
  std::mt19937_64 rng(derive_seed(eval_seed, 0));
  const Network& net = agent_->online();
  for (std::size_t e = 0; e < config_.eval_episodes; ++e) {
    TensorF obs = eval_env->reset();
    double ret = 0.0;
    while (true) {
      const TensorF q = net.q_values(obs);
      const std::size_t a = select_action(q.data(), agent_->config().epsilon_eval, rng);
      auto res = eval_env->step(static_cast<envs::Action>(a));
      ret += res.reward;
      if (res.done()) break;
      obs = std::move(res.observation);
    }
    r.eval_returns.push_back(ret);
  }
  r.eval_return_mean = stats::mean(r.eval_returns);

  r.loss = loss_count_ ? loss_sum_ / static_cast<double>(loss_count_) : kNaN;
  loss_sum_ = 0.0;
  loss_count_ = 0;

  const TensorF probe = probe_batch();
  const auto dormancy = metrics::dormant_fraction(net, probe, config_.dormancy_threshold);
  r.dormant_frac_phi = dormancy.phi;
  r.dormant_frac_psi = dormancy.psi;
  r.feature_norm = metrics::feature_norm(net, probe);
  r.effective_density = metrics::effective_density(net, agent_->sparse()).density;
  r.current_sparsity = agent_->sparse() ? agent_->sparse()->current_sparsity() : 0.0;
  r.wall_clock_s = elapsed_seconds();
  return r;
}

RunRecord Trainer::diagnostic_record() const {
  RunRecord r;
  r.run_id = run_id(config_, seed_);
  r.env = config_.env;
  r.seed = seed_;
  r.step = step_;
  r.eval_return_mean = kNaN;
  r.loss = kNaN;
  r.dormant_frac_phi = kNaN;
  r.dormant_frac_psi = kNaN;
  r.feature_norm = kNaN;
  r.effective_density = metrics::effective_density(agent_->online(), agent_->sparse()).density;
  r.current_sparsity = agent_->sparse() ? agent_->sparse()->current_sparsity() : 0.0;
  r.wall_clock_s = elapsed_seconds();
  return r;
}

RunResult run_training(Trainer& trainer, const RunOptions& options) {
  RunResult result;
  const std::int64_t every = trainer.config().checkpoint_every;
  auto checkpoint = [&] {
    if (!options.checkpoint_path.empty()) save_checkpoint(options.checkpoint_path, trainer);
  };
  try {
    while (!trainer.finished()) {
      if (options.stop_at_step && trainer.step() >= *options.stop_at_step) {
        checkpoint();
        result.stopped_early = true;
        return result;
      }
      std::optional<RunRecord> record = trainer.advance();
      if (record) {
        if (options.on_record) options.on_record(*record);
        result.records.push_back(*record);
        if (options.stop_when && options.stop_when(*record)) {
          result.stopped_early = true;
          break;
        }
      }
      if (every > 0 && trainer.step() % every == 0 && !trainer.finished()) checkpoint();
    }
  } catch (const NumericError& e) {
    result.halted = true;
    result.halt_reason = e.what();
    RunRecord diag = trainer.diagnostic_record();
    if (options.on_record) options.on_record(diag);
    result.records.push_back(std::move(diag));
    return result;
  }
  checkpoint();
  return result;
}

RunResult run_training(const ExperimentConfig& config, std::uint64_t seed, const RunOptions& options) {
  Trainer trainer(config, seed);
  return run_training(trainer, options);
}

}  // namespace bnl
