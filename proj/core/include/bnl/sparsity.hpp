#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "bnl/network.hpp"
#include "bnl/tensor.hpp"

namespace bnl::sparsity {

enum class Method { kGradual, kStatic, kRigL };
enum class Scope { kBottleneck, kAll };

std::string_view to_string(Method method);
std::string_view to_string(Scope scope);
Method parse_method(std::string_view name);
Scope parse_scope(std::string_view name);

/// round((1−s)·n) with ties going to the larger active count.
std::size_t active_count_for(std::size_t n, double sparsity);

/// Binary mask aligned with one parameter tensor.
struct ParamMask {
  Shape shape;
  std::vector<std::uint8_t> bits;  // one byte per element, 0 or 1
  double target_sparsity = 0.0;
  Method method = Method::kGradual;

  static ParamMask dense(Shape shape, Method method, double target_sparsity);

  std::size_t size() const { return bits.size(); }
  std::size_t active_count() const;
  double density() const { return static_cast<double>(active_count()) / static_cast<double>(size()); }
  double sparsity() const { return 1.0 - density(); }

  template <typename T>
  void apply(std::span<T> values) const {
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (!bits[i]) values[i] = T{0};
    }
  }

  friend bool operator==(const ParamMask&, const ParamMask&) = default;
};

/// Polynomial sparsity ramp from start_step to end_step.
struct PruneSchedule {
  std::int64_t start_step = 0;
  std::int64_t end_step = 1;
  double final_sparsity = 0.9;
  double exponent = 3.0;
};

/// s_f·(1 − (1 − (t−t_s)/(t_e−t_s))^exponent), clamped to [0, s_f].
double schedule_sparsity(const PruneSchedule& sched, std::int64_t step);

/// Deactivates the smallest-|w| active weights until round((1−s)·N) remain
/// active. Ties go to the lowest flat index. Never reactivates.
ParamMask apply_gradual_prune(const ParamMask& mask, std::span<const float> weights, double s_now);

/// Uniform random mask with exactly round((1−s)·N) active entries.
ParamMask static_init(Shape shape, double sparsity, std::uint64_t seed);

struct RigLResult {
  ParamMask mask;
  std::vector<std::size_t> dropped;
  std::vector<std::size_t> grown;
};

/// Drops the k = floor(f·active) smallest-|w| active weights and grows the k
/// largest-|grad| weights among those inactive before the update.
RigLResult rigl_update(const ParamMask& mask, std::span<const float> weights, std::span<const float> grads,
                       double drop_fraction);

/// Bit-packed, LSB first within each byte.
std::vector<std::uint8_t> pack_bits(const ParamMask& mask);
void unpack_bits(std::span<const std::uint8_t> packed, ParamMask& mask);

struct SparsityConfig {
  Method method = Method::kGradual;
  Scope scope = Scope::kBottleneck;
  double target_sparsity = 0.9;
  double prune_start_fraction = 0.04;
  double prune_end_fraction = 0.8;
  std::int64_t prune_interval = 1000;  // env steps
  double exponent = 3.0;
  double drop_fraction = 0.2;
  std::int64_t rigl_interval = 250;  // gradient updates
  bool rigl_cosine_anneal = false;

  friend bool operator==(const SparsityConfig&, const SparsityConfig&) = default;
};

/// Masks attached to a network's parameters plus the cadence logic that
/// updates them during training.
class SparseTraining {
 public:
  struct Entry {
    std::size_t param_index;
    ParamMask mask;
  };

  SparseTraining() = default;
  /// total_updates sets the horizon of the optional drop-fraction anneal.
  SparseTraining(const SparsityConfig& config, const Network& network, std::int64_t total_steps,
                 std::int64_t total_updates, std::uint64_t seed);

  const SparsityConfig& config() const { return config_; }
  const PruneSchedule& schedule() const { return schedule_; }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  const ParamMask* mask_for(std::size_t param_index) const;

  /// Gradual pruning hook, called after env step `step`. Returns true when
  /// any mask changed.
  bool on_env_step(std::int64_t step, Network& network);

  /// RigL hook, called with dense gradients before the optimizer step of
  /// update number `update`. Returns flat indices whose state changed, per entry.
  std::vector<std::vector<std::size_t>> before_optimizer_step(std::int64_t update, const Network& network);

  void mask_gradients(Network& network) const;
  void apply(Network& network) const;

  /// Sparsity averaged over masked elements.
  double current_sparsity() const;

 private:
  SparsityConfig config_;
  PruneSchedule schedule_;
  std::int64_t total_updates_ = 0;
  std::vector<Entry> entries_;
};

}  // namespace bnl::sparsity
