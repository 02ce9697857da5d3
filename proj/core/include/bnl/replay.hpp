#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "bnl/tensor.hpp"

namespace bnl {

/// One sampled minibatch of n-step windows.
struct ReplayBatch {
  TensorF observations;       // N×H×W×C, state the action was taken in
  std::vector<std::size_t> actions;
  std::vector<float> returns;             // Σ_{k<m} γ^k r_k
  std::vector<float> bootstrap_discount;  // γ^m, or 0 when the window ends at a terminal
  TensorF next_observations;  // N×H×W×C, state m steps later (zeros when not bootstrapping)
};

/// FIFO ring of (obs, action, clipped reward, terminal) records. Sampling
/// draws uniformly over start indices whose n-step window is complete.
///
/// An episode cut off by a time limit is closed with add_boundary(final_obs):
/// that record only serves as a bootstrap state and never starts a window.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, Shape observation_shape, std::size_t update_horizon, double discount);

  void add(const TensorF& observation, std::size_t action, float reward, bool terminal);
  void add_boundary(const TensorF& final_observation);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  const Shape& observation_shape() const { return obs_shape_; }
  std::size_t update_horizon() const { return horizon_; }
  double discount() const { return discount_; }

  /// Logical index 0 is the oldest record.
  bool is_valid_start(std::size_t index) const;

  ReplayBatch sample(std::size_t batch_size, std::mt19937_64& rng) const;

  /// Observations only, uniform over stored records.
  TensorF sample_observations(std::size_t count, std::mt19937_64& rng) const;

  // Raw state for checkpoints.
  struct State {
    std::vector<std::uint8_t> frames;
    std::vector<std::uint32_t> actions;
    std::vector<float> rewards;
    std::vector<std::uint8_t> flags;
    std::size_t head = 0;
    std::size_t size = 0;
  };
  State state() const;
  void restore(State state);

 private:
  static constexpr std::uint8_t kTerminal = 1;
  static constexpr std::uint8_t kBoundary = 2;

  std::size_t physical(std::size_t logical) const;
  std::size_t push();
  void check_frame(const TensorF& observation) const;
  void write_frame(std::size_t slot, const TensorF& observation);
  void read_frame(std::size_t slot, float* dst) const;

  std::size_t capacity_;
  Shape obs_shape_;
  std::size_t frame_size_;
  std::size_t horizon_;
  double discount_;

  std::vector<std::uint8_t> frames_;
  std::vector<std::uint32_t> actions_;
  std::vector<float> rewards_;
  std::vector<std::uint8_t> flags_;
  std::size_t head_ = 0;  // physical slot of the oldest record
  std::size_t size_ = 0;
};

}  // namespace bnl
