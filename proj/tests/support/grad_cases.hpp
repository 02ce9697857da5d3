#pragma once

// Finite-difference cases for every differentiable op, and an end-to-end
// check through each bottleneck variant.

#include <string>
#include <vector>

#include "bnl/network.hpp"
#include "support/oracles.hpp"

namespace bnl::testing {

struct GradCase {
  ScalarFn fn;
  std::vector<TensorD> inputs;
};

struct GradCaseFamily {
  std::string name;
  std::function<GradCase(std::mt19937_64&)> make;
};

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); }

/// Inputs for relu-like kinks are kept away from zero so central differences
/// never straddle them.
inline TensorD away_from_zero(Shape shape, std::mt19937_64& rng) {
  TensorD t = random_tensor(std::move(shape), rng, 0.1, 1.0);
  for (auto& v : t.data()) {
    if (rng() & 1) v = -v;
  }
  return t;
}

/// Distinct values so max-based ops have unique maxima.
inline TensorD distinct(Shape shape, std::mt19937_64& rng) {
  TensorD t(std::move(shape));
  std::vector<double> vals(t.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = -1.0 + 2.0 * static_cast<double>(i) / vals.size();
  std::shuffle(vals.begin(), vals.end(), rng);
  for (std::size_t i = 0; i < vals.size(); ++i) t[i] = vals[i] + 0.01 * std::uniform_real_distribution<>(0, 0.5)(rng) / vals.size();
  return t;
}

inline std::vector<GradCaseFamily> op_grad_families() {
  using ops::Padding;
  std::vector<GradCaseFamily> f;
  auto proj = [](std::mt19937_64& rng, const Shape& s) { return random_tensor(s, rng); };

  f.push_back({"matmul", [=](std::mt19937_64& rng) {
                 const std::size_t m = pick(rng, 1, 5), k = pick(rng, 1, 5), n = pick(rng, 1, 5);
                 const auto w = proj(rng, {m, n});
                 return GradCase{[=](const std::vector<VarD>& v) { return project(ops::matmul(v[0], v[1]), w); },
                                 {random_tensor({m, k}, rng), random_tensor({k, n}, rng)}};
               }});
  f.push_back({"bmm", [=](std::mt19937_64& rng) {
                 const std::size_t b = pick(rng, 1, 3), m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
                 const auto w = proj(rng, {b, m, n});
                 return GradCase{[=](const std::vector<VarD>& v) { return project(ops::bmm(v[0], v[1]), w); },
                                 {random_tensor({b, m, k}, rng), random_tensor({b, k, n}, rng)}};
               }});
  f.push_back({"transpose_last2", [=](std::mt19937_64& rng) {
                 const std::size_t b = pick(rng, 1, 3), m = pick(rng, 1, 4), n = pick(rng, 1, 4);
                 const auto w = proj(rng, {b, n, m});
                 return GradCase{[=](const std::vector<VarD>& v) { return project(ops::transpose_last2(v[0]), w); },
                                 {random_tensor({b, m, n}, rng)}};
               }});
  f.push_back({"add_sub_scale", [=](std::mt19937_64& rng) {
                 const Shape s{pick(rng, 1, 4), pick(rng, 1, 4)};
                 const auto w = proj(rng, s);
                 const double c = std::uniform_real_distribution<>(-2, 2)(rng);
                 return GradCase{[=](const std::vector<VarD>& v) {
                                   return project(ops::sub(ops::add(v[0], ops::scale(v[1], c)), v[1]), w);
                                 },
                                 {random_tensor(s, rng), random_tensor(s, rng)}};
               }});
  f.push_back({"add_bias", [=](std::mt19937_64& rng) {
                 const Shape s{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 4)};
                 const auto w = proj(rng, s);
                 return GradCase{[=](const std::vector<VarD>& v) { return project(ops::add_bias(v[0], v[1]), w); },
                                 {random_tensor(s, rng), random_tensor({s[2]}, rng)}};
               }});
  f.push_back({"relu", [=](std::mt19937_64& rng) {
                 const Shape s{pick(rng, 1, 5), pick(rng, 1, 5)};
                 const auto w = proj(rng, s);
                 return GradCase{[=](const std::vector<VarD>& v) { return project(ops::relu(v[0]), w); },
                                 {away_from_zero(s, rng)}};
               }});
  f.push_back({"softmax", [=](std::mt19937_64& rng) {
                 const Shape s{pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
                 const std::size_t axis = rng() % 3;
                 const auto w = proj(rng, s);
                 return GradCase{[=](const std::vector<VarD>& v) { return project(ops::softmax(v[0], axis), w); },
                                 {random_tensor(s, rng, -3, 3)}};
               }});
  f.push_back({"mean", [=](std::mt19937_64& rng) {
                 const Shape s{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)};
                 std::vector<std::size_t> axes;
                 for (std::size_t a = 0; a < 3; ++a) {
                   if (rng() & 1) axes.push_back(a);
                 }
                 if (axes.empty() || axes.size() == 3) axes = {rng() % 3};
                 Shape out;
                 for (std::size_t a = 0; a < 3; ++a) {
                   if (std::find(axes.begin(), axes.end(), a) == axes.end()) out.push_back(s[a]);
                 }
                 const auto w = proj(rng, out);
                 return GradCase{[=](const std::vector<VarD>& v) { return project(ops::mean(v[0], axes), w); },
                                 {random_tensor(s, rng)}};
               }});
  f.push_back({"sum_all_reshape", [=](std::mt19937_64& rng) {
                 const Shape s{pick(rng, 1, 4), pick(rng, 1, 4)};
                 const auto w = proj(rng, {s[1], s[0]});
                 return GradCase{[=](const std::vector<VarD>& v) {
                                   return ops::add(project(ops::reshape(v[0], Shape{s[1], s[0]}), w),
                                                   ops::sum_all(v[0]));
                                 },
                                 {random_tensor(s, rng)}};
               }});
  f.push_back({"conv2d", [=](std::mt19937_64& rng) {
                 const std::size_t h = pick(rng, 3, 6), wd = pick(rng, 3, 6), cin = pick(rng, 1, 3),
                                   cout = pick(rng, 1, 3), k = pick(rng, 1, 3), stride = pick(rng, 1, 2);
                 const bool same = rng() & 1;
                 const bool batched = rng() & 1;
                 const Shape xs = batched ? Shape{2, h, wd, cin} : Shape{h, wd, cin};
                 const Padding pad = same ? Padding::kSame : Padding::kValid;
                 NoGradGuard guard;
                 const auto probe = ops::conv2d(VarD(TensorD(xs)), VarD(TensorD({k, k, cin, cout})), stride, pad);
                 const auto w = proj(rng, probe.shape());
                 return GradCase{[=](const std::vector<VarD>& v) {
                                   return project(ops::conv2d(v[0], v[1], stride, pad), w);
                                 },
                                 {random_tensor(xs, rng), random_tensor({k, k, cin, cout}, rng)}};
               }});
  f.push_back({"maxpool2d", [=](std::mt19937_64& rng) {
                 const std::size_t h = pick(rng, 2, 6), wd = pick(rng, 2, 6), c = pick(rng, 1, 3);
                 const std::size_t window = pick(rng, 1, 3), stride = pick(rng, 1, 3);
                 NoGradGuard guard;
                 const auto probe = ops::maxpool2d(VarD(TensorD({h, wd, c})), window, stride);
                 const auto w = proj(rng, probe.shape());
                 return GradCase{[=](const std::vector<VarD>& v) {
                                   return project(ops::maxpool2d(v[0], window, stride), w);
                                 },
                                 {distinct({h, wd, c}, rng)}};
               }});
  f.push_back({"global_avg_pool", [=](std::mt19937_64& rng) {
                 const Shape s{pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)};
                 const auto w = proj(rng, {s[0], s[3]});
                 return GradCase{[=](const std::vector<VarD>& v) { return project(ops::global_avg_pool(v[0]), w); },
                                 {random_tensor(s, rng)}};
               }});
  f.push_back({"global_max_pool", [=](std::mt19937_64& rng) {
                 const Shape s{pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)};
                 const auto w = proj(rng, {s[2]});
                 return GradCase{[=](const std::vector<VarD>& v) { return project(ops::global_max_pool(v[0]), w); },
                                 {distinct(s, rng)}};
               }});
  f.push_back({"huber_loss", [=](std::mt19937_64& rng) {
                 const std::size_t n = pick(rng, 1, 8);
                 const double delta = std::uniform_real_distribution<>(0.3, 1.5)(rng);
                 // Errors |e| kept clear of the ±δ switch point.
                 TensorD pred = random_tensor({n}, rng, -3, 3), target({n});
                 for (std::size_t i = 0; i < n; ++i) {
                   double e = std::uniform_real_distribution<>(0.05, 2.5)(rng);
                   if (std::abs(e - delta) < 0.05) e += 0.2;
                   target[i] = pred[i] - ((rng() & 1) ? e : -e);
                 }
                 return GradCase{[=](const std::vector<VarD>& v) { return ops::huber_loss(v[0], v[1], delta); },
                                 {pred, target}};
               }});
  f.push_back({"gather_rows", [=](std::mt19937_64& rng) {
                 const std::size_t n = pick(rng, 1, 6), a = pick(rng, 2, 4);
                 std::vector<std::size_t> idx(n);
                 for (auto& i : idx) i = rng() % a;
                 const auto w = proj(rng, {n});
                 return GradCase{[=](const std::vector<VarD>& v) {
                                   return project(ops::gather_rows(v[0], std::span<const std::size_t>(idx)), w);
                                 },
                                 {random_tensor({n, a}, rng)}};
               }});
  return f;
}

/// A small network spec for end-to-end checks.
inline NetworkSpec small_spec(BottleneckKind b, std::mt19937_64& rng) {
  NetworkSpec s;
  s.bottleneck = b;
  s.encoder = (rng() & 1) ? EncoderKind::kMiniImpala : EncoderKind::kMiniCnn;
  s.encoder_channels = {3, 4};
  s.head_width_base = 4;
  s.head_scale = 1;
  s.head_extra_layers = rng() % 2;
  s.softmoe_slots = 1 + rng() % 2;
  s.input_shape = {6, 6, 2};
  return s;
}

/// End-to-end check of one random network through bottleneck b: analytic
/// gradients of a projected Q output w.r.t. the input batch and a random
/// subset of every parameter's coordinates, against central differences.
/// For sparse-flatten, 90% of the bottleneck weights are zeroed as a mask would.
inline FdResult check_network_gradients(BottleneckKind b, std::mt19937_64& rng, std::size_t coords_per_tensor = 6,
                                        double h = 1e-6) {
  const NetworkSpec spec = small_spec(b, rng);
  QNetwork<double> net(spec, rng());
  // Biases start at zero; randomize them so every path is live.
  for (auto& p : net.params()) {
    for (auto& v : p.var.mutable_value().data()) v += 0.05 * std::uniform_real_distribution<>(-1, 1)(rng);
  }
  if (b == BottleneckKind::kSparseFlatten) {
    for (auto& v : net.params()[net.bottleneck_index()].var.mutable_value().data()) {
      if (rng() % 10 != 0) v = 0.0;
    }
  }
  const TensorD obs = random_tensor({2, spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]}, rng);
  const TensorD w = random_tensor({2, spec.num_actions}, rng);

  net.zero_grad();
  VarD x(obs, true);
  project(net.forward(x).q, w).backward();

  auto eval = [&](const TensorD& input) {
    NoGradGuard guard;
    return project(net.forward(VarD(input)).q, w).value().item();
  };
  FdResult res;
  for (std::size_t c = 0; c < coords_per_tensor; ++c) {
    const std::size_t j = rng() % obs.size();
    TensorD plus = obs, minus = obs;
    plus[j] += h;
    minus[j] -= h;
    const double numeric = (eval(plus) - eval(minus)) / (2 * h);
    res.max_rel_error = std::max(res.max_rel_error, fd_rel_error(x.grad()[j], numeric));
    ++res.checked;
  }
  for (auto& p : net.params()) {
    auto& value = p.var.mutable_value();
    for (std::size_t c = 0; c < coords_per_tensor; ++c) {
      const std::size_t j = rng() % value.size();
      const double orig = value[j];
      value[j] = orig + h;
      const double fp = eval(obs);
      value[j] = orig - h;
      const double fm = eval(obs);
      value[j] = orig;
      res.max_rel_error = std::max(res.max_rel_error, fd_rel_error(p.var.grad()[j], (fp - fm) / (2 * h)));
      ++res.checked;
    }
  }
  return res;
}

inline const std::vector<BottleneckKind>& all_bottlenecks() {
  static const std::vector<BottleneckKind> kinds{BottleneckKind::kFlatten, BottleneckKind::kGap, BottleneckKind::kGmp,
                                                 BottleneckKind::kSoftMoE1, BottleneckKind::kSparseFlatten};
  return kinds;
}

}  // namespace bnl::testing
