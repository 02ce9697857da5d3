#include "bnl/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace bnl::sparsity {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kGradual:
      return "gradual";
    case Method::kStatic:
      return "static";
    case Method::kRigL:
      return "rigl";
  }
  return "unknown";
}

std::string_view to_string(Scope scope) { return scope == Scope::kBottleneck ? "bottleneck" : "all"; }

Method parse_method(std::string_view name) {
  if (name == "gradual") return Method::kGradual;
  if (name == "static") return Method::kStatic;
  if (name == "rigl") return Method::kRigL;
  throw std::invalid_argument("unknown sparsity method '" + std::string(name) + "'");
}

Scope parse_scope(std::string_view name) {
  if (name == "bottleneck") return Scope::kBottleneck;
  if (name == "all") return Scope::kAll;
  throw std::invalid_argument("unknown sparsity scope '" + std::string(name) + "'");
}

std::size_t active_count_for(std::size_t n, double sparsity) {
  const double exact = (1.0 - sparsity) * static_cast<double>(n);
  // the epsilon absorbs representation error such as (1-0.9)*100 = 9.999…
  const auto active = static_cast<std::size_t>(std::floor(exact + 0.5 + 1e-9));
  return std::min(active, n);
}

ParamMask ParamMask::dense(Shape shape, Method method, double target_sparsity) {
  ParamMask m;
  m.bits.assign(shape_numel(shape), 1);
  m.shape = std::move(shape);
  m.method = method;
  m.target_sparsity = target_sparsity;
  return m;
}

std::size_t ParamMask::active_count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

double schedule_sparsity(const PruneSchedule& sched, std::int64_t step) {
  if (sched.start_step >= sched.end_step) throw std::invalid_argument("prune schedule needs start_step < end_step");
  if (step <= sched.start_step) return 0.0;
  if (step >= sched.end_step) return sched.final_sparsity;
  const double progress = static_cast<double>(step - sched.start_step) /
                          static_cast<double>(sched.end_step - sched.start_step);
  const double s = sched.final_sparsity * (1.0 - std::pow(1.0 - progress, sched.exponent));
  return std::clamp(s, 0.0, sched.final_sparsity);
}

namespace {

void check_fraction(double f, const char* what) {
  if (!(f >= 0.0 && f < 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0, 1)");
}

}  // namespace

ParamMask apply_gradual_prune(const ParamMask& mask, std::span<const float> weights, double s_now) {
  check_fraction(s_now, "gradual prune sparsity");
  if (weights.size() != mask.size()) throw ShapeError("gradual prune: weight count does not match mask");
  ParamMask out = mask;
  const std::size_t target = active_count_for(mask.size(), s_now);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.bits[i]) active.push_back(i);
  }
  if (active.size() <= target) return out;
  const std::size_t remove = active.size() - target;
  std::stable_sort(active.begin(), active.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(weights[a]) < std::abs(weights[b]); });
  for (std::size_t i = 0; i < remove; ++i) out.bits[active[i]] = 0;
  return out;
}

ParamMask static_init(Shape shape, double sparsity, std::uint64_t seed) {
  check_fraction(sparsity, "static sparsity");
  ParamMask m = ParamMask::dense(std::move(shape), Method::kStatic, sparsity);
  const std::size_t n = m.size();
  const std::size_t active = active_count_for(n, sparsity);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the mask does not depend on the
  // standard library's shuffle implementation
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::fill(m.bits.begin(), m.bits.end(), std::uint8_t{0});
  for (std::size_t i = 0; i < active; ++i) m.bits[order[i]] = 1;
  return m;
}

RigLResult rigl_update(const ParamMask& mask, std::span<const float> weights, std::span<const float> grads,
                       double drop_fraction) {
  check_fraction(drop_fraction, "RigL drop fraction");
  if (weights.size() != mask.size() || grads.size() != mask.size()) {
    throw ShapeError("rigl_update: weight/gradient count does not match mask");
  }
  RigLResult result{mask, {}, {}};
  std::vector<std::size_t> active, inactive;
  for (std::size_t i = 0; i < mask.size(); ++i) (mask.bits[i] ? active : inactive).push_back(i);
  const std::size_t k = std::min(
      static_cast<std::size_t>(std::floor(drop_fraction * static_cast<double>(active.size()))), inactive.size());
  if (k == 0) return result;
  std::stable_sort(active.begin(), active.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(weights[a]) < std::abs(weights[b]); });
  std::stable_sort(inactive.begin(), inactive.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(grads[a]) > std::abs(grads[b]); });
  result.dropped.assign(active.begin(), active.begin() + static_cast<std::ptrdiff_t>(k));
  result.grown.assign(inactive.begin(), inactive.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(result.dropped.begin(), result.dropped.end());
  std::sort(result.grown.begin(), result.grown.end());
  for (std::size_t i : result.dropped) result.mask.bits[i] = 0;
  for (std::size_t i : result.grown) result.mask.bits[i] = 1;
  return result;
}

std::vector<std::uint8_t> pack_bits(const ParamMask& mask) {
  std::vector<std::uint8_t> out((mask.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.bits[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return out;
}

void unpack_bits(std::span<const std::uint8_t> packed, ParamMask& mask) {
  if (packed.size() != (mask.size() + 7) / 8) throw std::invalid_argument("packed mask has wrong length");
  for (std::size_t i = 0; i < mask.size(); ++i) mask.bits[i] = (packed[i / 8] >> (i % 8)) & 1u;
}

SparseTraining::SparseTraining(const SparsityConfig& config, const Network& network, std::int64_t total_steps,
                               std::int64_t total_updates, std::uint64_t seed)
    : config_(config), total_updates_(total_updates) {
  check_fraction(config.target_sparsity, "target sparsity");
  check_fraction(config.drop_fraction, "RigL drop fraction");
  schedule_.start_step = static_cast<std::int64_t>(std::llround(config.prune_start_fraction * total_steps));
  schedule_.end_step = static_cast<std::int64_t>(std::llround(config.prune_end_fraction * total_steps));
  schedule_.final_sparsity = config.target_sparsity;
  schedule_.exponent = config.exponent;
  if (config.method == Method::kGradual && schedule_.start_step >= schedule_.end_step) {
    throw std::invalid_argument("gradual pruning needs prune_start_fraction < prune_end_fraction");
  }
  const auto& params = network.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const bool selected = config.scope == Scope::kBottleneck ? p.is_bottleneck : p.is_weight();
    if (!selected) continue;
    if (config.method == Method::kGradual) {
      entries_.push_back({i, ParamMask::dense(p.var.shape(), Method::kGradual, config.target_sparsity)});
    } else {
      ParamMask m = static_init(p.var.shape(), config.target_sparsity, seed + 7919 * (i + 1));
      m.method = config.method;
      entries_.push_back({i, std::move(m)});
    }
  }
}

const ParamMask* SparseTraining::mask_for(std::size_t param_index) const {
  for (const auto& e : entries_) {
    if (e.param_index == param_index) return &e.mask;
  }
  return nullptr;
}

bool SparseTraining::on_env_step(std::int64_t step, Network& network) {
  if (config_.method != Method::kGradual || entries_.empty()) return false;
  if (step < schedule_.start_step || step % config_.prune_interval != 0) {
    // the final target is still applied at end_step even off-cadence
    if (step != schedule_.end_step) return false;
  }
  const double s_now = schedule_sparsity(schedule_, step);
  bool changed = false;
  auto& params = network.params();
  for (auto& e : entries_) {
    const auto w = params[e.param_index].var.value().data();
    ParamMask next = apply_gradual_prune(e.mask, w, s_now);
    if (next.bits != e.mask.bits) {
      e.mask = std::move(next);
      changed = true;
    }
  }
  if (changed) apply(network);
  return changed;
}

std::vector<std::vector<std::size_t>> SparseTraining::before_optimizer_step(std::int64_t update,
                                                                            const Network& network) {
  std::vector<std::vector<std::size_t>> changed(entries_.size());
  if (config_.method != Method::kRigL || update <= 0 || update % config_.rigl_interval != 0) return changed;
  double fraction = config_.drop_fraction;
  if (config_.rigl_cosine_anneal && total_updates_ > 0) {
    const double progress = std::min(1.0, static_cast<double>(update) / static_cast<double>(total_updates_));
    fraction = 0.5 * config_.drop_fraction * (1.0 + std::cos(std::numbers::pi * progress));
  }
  const auto& params = network.params();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& e = entries_[i];
    const auto& var = params[e.param_index].var;
    RigLResult r = rigl_update(e.mask, var.value().data(), var.grad().data(), fraction);
    e.mask = std::move(r.mask);
    changed[i] = std::move(r.dropped);
    changed[i].insert(changed[i].end(), r.grown.begin(), r.grown.end());
  }
  return changed;
}

void SparseTraining::mask_gradients(Network& network) const {
  auto& params = network.params();
  for (const auto& e : entries_) e.mask.apply(params[e.param_index].var.mutable_grad().data());
}

void SparseTraining::apply(Network& network) const {
  auto& params = network.params();
  for (const auto& e : entries_) e.mask.apply(params[e.param_index].var.mutable_value().data());
}

double SparseTraining::current_sparsity() const {
  std::size_t total = 0, active = 0;
  for (const auto& e : entries_) {
    total += e.mask.size();
    active += e.mask.active_count();
  }
  return total == 0 ? 0.0 : 1.0 - static_cast<double>(active) / static_cast<double>(total);
}

}  // namespace bnl::sparsity
