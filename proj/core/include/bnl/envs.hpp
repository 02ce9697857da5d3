#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bnl/tensor.hpp"

namespace bnl::envs {

inline constexpr std::size_t kGridSize = 10;
inline constexpr std::size_t kNumActions = 3;

enum class Action : std::size_t { kLeft = 0, kStay = 1, kRight = 2 };

struct StepResult {
  TensorF observation;  // 10×10×2, channel 0 agent, channel 1 objects
  float reward = 0.0f;
  bool terminal = false;   // absorbing end
  bool truncated = false;  // time-limit end, not absorbing
  int episode_step = 0;

  bool done() const { return terminal || truncated; }
};

/// Seeded pixel environment on a 10×10 grid.
class Environment {
 public:
  virtual ~Environment() = default;

  /// Reseeds the episode stream, then starts an episode.
  TensorF reset(std::uint64_t seed) {
    reseed(seed);
    return reset();
  }

  virtual void reseed(std::uint64_t seed) { rng_.seed(seed); }

  /// Starts the next episode from the current stream.
  virtual TensorF reset() = 0;
  virtual StepResult step(Action action) = 0;
  virtual std::string name() const = 0;
  virtual Shape observation_shape() const { return {kGridSize, kGridSize, 2}; }
  std::size_t num_actions() const { return kNumActions; }

  /// Full state, including the RNG, as an opaque text blob.
  virtual std::string save_state() const = 0;
  virtual void load_state(const std::string& blob) = 0;

 protected:
  std::mt19937_64 rng_{0};
};

/// A ball falls from row 0; a 3-wide paddle on the bottom row must catch it.
class CatchEnv final : public Environment {
 public:
  explicit CatchEnv(std::uint64_t seed = 0) { rng_.seed(seed); }

  using Environment::reset;

  TensorF reset() override;
  /// Scripted start for tests and debugging.
  TensorF reset_to(std::size_t ball_col, std::size_t paddle_col);
  StepResult step(Action action) override;
  std::string name() const override { return "catch"; }
  std::string save_state() const override;
  void load_state(const std::string& blob) override;

  std::size_t ball_col() const { return ball_col_; }
  std::size_t paddle_col() const { return paddle_col_; }

 private:
  TensorF render() const;

  std::size_t ball_row_ = 0;
  std::size_t ball_col_ = 0;
  std::size_t paddle_col_ = 5;
  int step_ = 0;
  bool active_ = false;
};

/// Obstacles fall from row 0, a new one every 2 steps; the agent on the
/// bottom row must avoid them for up to 100 steps.
class DodgeEnv final : public Environment {
 public:
  static constexpr int kMaxSteps = 100;
  static constexpr int kSpawnPeriod = 2;
  static constexpr float kSurviveReward = 0.1f;

  explicit DodgeEnv(std::uint64_t seed = 0) { rng_.seed(seed); }

  using Environment::reset;

  TensorF reset() override;
  StepResult step(Action action) override;
  std::string name() const override { return "dodge"; }
  std::string save_state() const override;
  void load_state(const std::string& blob) override;

  /// Replaces random spawn columns with a cyclic script (tests).
  void set_spawn_script(std::vector<std::size_t> columns) { script_ = std::move(columns); }
  std::size_t agent_col() const { return agent_col_; }

 private:
  void spawn();
  TensorF render() const;

  std::size_t agent_col_ = 5;
  std::vector<std::pair<std::size_t, std::size_t>> obstacles_;  // (row, col)
  std::vector<std::size_t> script_;
  std::size_t script_pos_ = 0;
  int step_ = 0;
  bool active_ = false;
};

/// Concatenates the last k frames along the channel axis.
class FrameStack final : public Environment {
 public:
  FrameStack(std::unique_ptr<Environment> inner, std::size_t frames);

  using Environment::reset;
  void reseed(std::uint64_t seed) override { inner_->reseed(seed); }

  TensorF reset() override;
  StepResult step(Action action) override;
  std::string name() const override { return inner_->name(); }
  Shape observation_shape() const override;
  std::string save_state() const override;
  void load_state(const std::string& blob) override;

  Environment& inner() { return *inner_; }

 private:
  TensorF stacked() const;

  std::unique_ptr<Environment> inner_;
  std::size_t frames_;
  std::deque<TensorF> history_;
};

/// "catch" or "dodge"; frame_stack > 1 wraps in FrameStack.
std::unique_ptr<Environment> make_env(const std::string& name, std::uint64_t seed, std::size_t frame_stack = 1);

/// Clips to [−1, 1].
inline float clip_reward(float r) { return r < -1.0f ? -1.0f : (r > 1.0f ? 1.0f : r); }

/// Run-length encoding of a binary frame, channel-major: "c0:0x12,1x3,...;c1:..."
std::string rle_encode(const TensorF& frame);
TensorF rle_decode(const std::string& text, const Shape& shape);

/// Writes one line per step: episode, step, action, reward, RLE frame.
class TrajectoryLog {
 public:
  explicit TrajectoryLog(std::ostream& out) : out_(out) {}
  void record(int episode, int step, int action, float reward, const TensorF& frame);

 private:
  std::ostream& out_;
};

}  // namespace bnl::envs
