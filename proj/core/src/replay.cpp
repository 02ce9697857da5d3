#include "bnl/replay.hpp"

#include <cmath>
#include <stdexcept>

namespace bnl {

ReplayBuffer::ReplayBuffer(std::size_t capacity, Shape observation_shape, std::size_t update_horizon,
                           double discount)
    : capacity_(capacity),
      obs_shape_(std::move(observation_shape)),
      frame_size_(shape_numel(obs_shape_)),
      horizon_(update_horizon),
      discount_(discount) {
  if (capacity_ == 0) throw std::invalid_argument("replay capacity must be positive");
  if (horizon_ == 0) throw std::invalid_argument("update horizon must be >= 1");
  if (!(discount_ >= 0.0 && discount_ < 1.0)) throw std::invalid_argument("discount must lie in [0, 1)");
  frames_.assign(capacity_ * frame_size_, 0);
  actions_.assign(capacity_, 0);
  rewards_.assign(capacity_, 0.0f);
  flags_.assign(capacity_, 0);
}

std::size_t ReplayBuffer::physical(std::size_t logical) const { return (head_ + logical) % capacity_; }

std::size_t ReplayBuffer::push() {
  std::size_t slot;
  if (size_ < capacity_) {
    slot = physical(size_);
    ++size_;
  } else {
    slot = head_;
    head_ = (head_ + 1) % capacity_;
  }
  return slot;
}

void ReplayBuffer::check_frame(const TensorF& observation) const {
  if (observation.shape() != obs_shape_) {
    throw ShapeError("replay: observation " + shape_str(observation.shape()) + " does not match " +
                     shape_str(obs_shape_));
  }
  for (float v : observation.data()) {
    if (v != 0.0f && v != 1.0f) throw std::invalid_argument("replay stores binary frames only");
  }
}

void ReplayBuffer::write_frame(std::size_t slot, const TensorF& observation) {
  std::uint8_t* dst = frames_.data() + slot * frame_size_;
  const auto src = observation.data();
  for (std::size_t i = 0; i < frame_size_; ++i) dst[i] = src[i] != 0.0f ? 1 : 0;
}

void ReplayBuffer::read_frame(std::size_t slot, float* dst) const {
  const std::uint8_t* src = frames_.data() + slot * frame_size_;
  for (std::size_t i = 0; i < frame_size_; ++i) dst[i] = static_cast<float>(src[i]);
}

void ReplayBuffer::add(const TensorF& observation, std::size_t action, float reward, bool terminal) {
  if (!std::isfinite(reward)) throw NumericError("replay: non-finite reward");
  check_frame(observation);
  const std::size_t slot = push();
  write_frame(slot, observation);
  actions_[slot] = static_cast<std::uint32_t>(action);
  rewards_[slot] = reward;
  flags_[slot] = terminal ? kTerminal : 0;
}

void ReplayBuffer::add_boundary(const TensorF& final_observation) {
  check_frame(final_observation);
  const std::size_t slot = push();
  write_frame(slot, final_observation);
  actions_[slot] = 0;
  rewards_[slot] = 0.0f;
  flags_[slot] = kBoundary;
}

bool ReplayBuffer::is_valid_start(std::size_t index) const {
  if (index >= size_) return false;
  if (flags_[physical(index)] & kBoundary) return false;
  for (std::size_t k = 0; k < horizon_; ++k) {
    const std::size_t j = index + k;
    if (j >= size_) return false;
    const std::uint8_t f = flags_[physical(j)];
    if (f & kBoundary) return true;  // k ≥ 1 here, bootstrap from the boundary frame
    if (f & kTerminal) return true;
  }
  return index + horizon_ < size_;
}

ReplayBatch ReplayBuffer::sample(std::size_t batch_size, std::mt19937_64& rng) const {
  if (batch_size == 0) throw std::invalid_argument("replay: batch size must be positive");
  if (size_ <= horizon_) throw std::logic_error("replay: not enough data to sample");
  Shape batch_shape{batch_size};
  batch_shape.insert(batch_shape.end(), obs_shape_.begin(), obs_shape_.end());
  ReplayBatch batch{TensorF(batch_shape), {}, {}, {}, TensorF(batch_shape)};
  batch.actions.resize(batch_size);
  batch.returns.resize(batch_size);
  batch.bootstrap_discount.resize(batch_size);
  std::size_t attempts = 0;
  for (std::size_t b = 0; b < batch_size; ++b) {
    std::size_t index;
    do {
      if (++attempts > 1000 * batch_size + 1000) throw std::logic_error("replay: no valid n-step windows");
      index = static_cast<std::size_t>(rng() % size_);
    } while (!is_valid_start(index));

    const std::size_t start = physical(index);
    read_frame(start, batch.observations.data().data() + b * frame_size_);
    batch.actions[b] = actions_[start];
    double ret = 0.0;
    double gamma_k = 1.0;
    bool bootstrap = true;
    std::size_t bootstrap_slot = physical(index + horizon_);
    for (std::size_t k = 0; k < horizon_; ++k) {
      const std::size_t slot = physical(index + k);
      const std::uint8_t f = flags_[slot];
      if (f & kBoundary) {
        bootstrap_slot = slot;
        break;
      }
      ret += gamma_k * rewards_[slot];
      gamma_k *= discount_;
      if (f & kTerminal) {
        bootstrap = false;
        break;
      }
    }
    batch.returns[b] = static_cast<float>(ret);
    batch.bootstrap_discount[b] = bootstrap ? static_cast<float>(gamma_k) : 0.0f;
    if (bootstrap) read_frame(bootstrap_slot, batch.next_observations.data().data() + b * frame_size_);
  }
  return batch;
}

TensorF ReplayBuffer::sample_observations(std::size_t count, std::mt19937_64& rng) const {
  if (count == 0) throw std::invalid_argument("replay: probe batch must be non-empty");
  if (size_ == 0) throw std::logic_error("replay: buffer is empty");
  Shape shape{count};
  shape.insert(shape.end(), obs_shape_.begin(), obs_shape_.end());
  TensorF out(shape);
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t slot = physical(static_cast<std::size_t>(rng() % size_));
    read_frame(slot, out.data().data() + b * frame_size_);
  }
  return out;
}

ReplayBuffer::State ReplayBuffer::state() const { return {frames_, actions_, rewards_, flags_, head_, size_}; }

void ReplayBuffer::restore(State state) {
  if (state.frames.size() != frames_.size() || state.actions.size() != capacity_ ||
      state.rewards.size() != capacity_ || state.flags.size() != capacity_ || state.size > capacity_ ||
      state.head >= capacity_) {
    throw std::invalid_argument("replay: restored state does not match buffer geometry");
  }
  frames_ = std::move(state.frames);
  actions_ = std::move(state.actions);
  rewards_ = std::move(state.rewards);
  flags_ = std::move(state.flags);
  head_ = state.head;
  size_ = state.size;
}

}  // namespace bnl
