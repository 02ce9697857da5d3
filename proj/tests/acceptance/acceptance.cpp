// Acceptance suite: one PASS/FAIL line per primary criterion, nonzero exit
// if any fails. The two learning criteria (9, 10) train real agents and take
// hours on one core; their per-seed runs live under --work-dir and a finished
// run directory is reused by the next invocation (its stored config must
// match exactly, see run_cell).

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bnl/checkpoint.hpp"
#include "bnl/layers.hpp"
#include "bnl/metrics.hpp"
#include "bnl/network.hpp"
#include "bnl/run_record.hpp"
#include "bnl/sparsity.hpp"
#include "bnl/stats.hpp"
#include "bnl/sweep.hpp"
#include "bnl/trainer.hpp"
#include "support/configs.hpp"
#include "support/grad_cases.hpp"
#include "support/oracles.hpp"
#include "support/specs.hpp"

using namespace bnl;
using namespace bnl::testing;
namespace fs = std::filesystem;

namespace {

// Pinned thresholds.
constexpr double kFdTol = 1e-5;
constexpr int kFdCasesPerFamily = 100;
constexpr double kFdBudgetS = 300;
constexpr int kGapTensors = 1000;
constexpr double kGapBudgetS = 10;
constexpr int kRiglInstances = 1000;
constexpr double kRiglBudgetS = 60;
constexpr double kStochasticTol = 1e-6;
constexpr double kEquivarianceTol = 1e-5;  // float outputs, reassociated sums
constexpr int kIqmLists = 10000;
constexpr int kCoverageTrials = 500;
constexpr double kCoverageLo = 0.90, kCoverageHi = 0.99;
constexpr double kStatsBudgetS = 120;
constexpr double kCatchThreshold = 0.8;
constexpr std::int64_t kLearningHorizon = 200000;
constexpr std::size_t kSeeds = 5;
constexpr std::size_t kCatchSeedsRequired = 4;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("FAILED: " + what);
    }
  }
  void note(std::string s) { notes.push_back(std::move(s)); }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  Outcome o;
  Stopwatch sw;
  std::mt19937_64 rng(101);
  for (const auto& family : op_grad_families()) {
    double worst = 0.0;
    for (int c = 0; c < kFdCasesPerFamily; ++c) {
      GradCase gc = family.make(rng);
      const auto r = check_gradients(gc.fn, gc.inputs, rng);
      o.check(r.checked > 0, family.name + " checked no coordinates");
      worst = std::max(worst, r.max_rel_error);
    }
    o.check(worst < kFdTol, fmt("op %s max rel err %.3g", family.name.c_str(), worst));
  }
  for (auto b : all_bottlenecks()) {
    double worst = 0.0;
    for (int c = 0; c < kFdCasesPerFamily; ++c) worst = std::max(worst, check_network_gradients(b, rng).max_rel_error);
    o.check(worst < kFdTol, fmt("network %s max rel err %.3g", std::string(to_string(b)).c_str(), worst));
    o.note(fmt("%s: worst rel err %.2e over %d networks", std::string(to_string(b)).c_str(), worst,
               kFdCasesPerFamily));
  }
  o.note(fmt("%zu op families x %d cases", op_grad_families().size(), kFdCasesPerFamily));
  o.check(sw.seconds() < kFdBudgetS, fmt("took %.1f s", sw.seconds()));
  return o;
}

Outcome gap_exactness() {
  Outcome o;
  Stopwatch sw;
  std::mt19937_64 rng(102);
  std::size_t mismatches = 0;
  for (int i = 0; i < kGapTensors; ++i) {
    const std::size_t n = 1 + rng() % 3, h = 1 + rng() % 9, w = 1 + rng() % 9, c = 1 + rng() % 16;
    const TensorD f = random_tensor({n, h, w, c}, rng, -10, 10);
    const TensorD got = ops::global_avg_pool(VarD(f)).value();
    for (std::size_t b = 0; b < n; ++b) {
      TensorD one({h, w, c});
      std::copy_n(f.data().begin() + b * h * w * c, h * w * c, one.data().begin());
      const auto expect = gap_oracle(one);
      for (std::size_t k = 0; k < c; ++k) mismatches += got[b * c + k] != expect[k];
    }
  }
  o.check(mismatches == 0, fmt("%zu channel means differ from the loop oracle", mismatches));
  o.check(sw.seconds() < kGapBudgetS, fmt("took %.1f s", sw.seconds()));
  return o;
}

Outcome parameter_accounting() {
  Outcome o;
  std::mt19937_64 rng(103);
  {
    NetworkSpec s;
    s.head_scale = 4;
    Network flat(s, 1);
    s.bottleneck = BottleneckKind::kGap;
    Network gap(s, 1);
    o.check(flat.bottleneck_param().var.value().size() == 73728, "3x3x32 flatten at width 256 is not 73,728");
    o.check(gap.bottleneck_param().var.value().size() == 8192, "3x3x32 gap at width 256 is not 8,192");
  }
  std::size_t checked = 0, sparse_checked = 0;
  for (int i = 0; i < 300; ++i) {
    NetworkSpec s = random_spec(rng);
    const auto e = expected_encoder_shape(s);
    const std::size_t width = s.head_width_base * s.head_scale;
    const bool pooled = s.bottleneck == BottleneckKind::kGap || s.bottleneck == BottleneckKind::kGmp ||
                        s.bottleneck == BottleneckKind::kSoftMoE1;
    const std::size_t dense = (pooled ? e.c : e.h * e.w * e.c) * width;
    Network net(s, static_cast<std::uint64_t>(i));
    const std::size_t got = net.bottleneck_param().var.value().size();
    o.check(got == dense, fmt("spec %d: %zu bottleneck weights, expected %zu", i, got, dense));
    ++checked;
    if (s.bottleneck == BottleneckKind::kSparseFlatten) {
      for (auto method : {sparsity::Method::kStatic, sparsity::Method::kRigL, sparsity::Method::kGradual}) {
        sparsity::SparsityConfig cfg;
        cfg.method = method;
        cfg.prune_interval = 1;
        const std::int64_t total = 100;
        sparsity::SparseTraining st(cfg, net, total, 25, rng());
        if (method == sparsity::Method::kGradual) {
          for (std::int64_t t = 1; t <= total; ++t) st.on_env_step(t, net);
        }
        const std::size_t expect = round_half_up((1.0 - cfg.target_sparsity) * static_cast<double>(dense));
        const auto d = metrics::effective_density(net, &st.entries()[0].mask);
        o.check(d.active == expect, fmt("spec %d %s: %zu active, expected %zu", i,
                                        std::string(sparsity::to_string(method)).c_str(), d.active, expect));
        ++sparse_checked;
      }
    }
  }
  o.note(fmt("%zu random specs, %zu sparse masks", checked, sparse_checked));
  return o;
}

double schedule_oracle(std::int64_t ts, std::int64_t te, double sf, std::int64_t t) {
  if (t <= ts) return 0.0;
  if (t >= te) return sf;
  const double p = static_cast<double>(t - ts) / static_cast<double>(te - ts);
  return sf * (1.0 - (1.0 - p) * (1.0 - p) * (1.0 - p));
}

Outcome pruning_schedule() {
  Outcome o;
  const sparsity::PruneSchedule unit{0, 100, 0.9, 3.0};
  o.check(sparsity::schedule_sparsity(unit, 0) == 0.0, "s(t_s) != 0");
  o.check(sparsity::schedule_sparsity(unit, 100) == 0.9, "s(t_e) != 0.9");
  o.check(std::abs(sparsity::schedule_sparsity(unit, 50) - 0.7875) < 1e-12, "s(midpoint) != 0.7875");
  double prev = 0.0;
  for (std::int64_t t = 0; t <= 120; ++t) {
    const double s = sparsity::schedule_sparsity(unit, t);
    o.check(s >= prev, fmt("not monotone at t=%lld", static_cast<long long>(t)));
    prev = s;
  }

  // Every pruning update during a run keeps exactly round((1-s)N) weights.
  std::mt19937_64 rng(104);
  std::size_t updates = 0;
  for (int trial = 0; trial < 5; ++trial) {
    NetworkSpec spec;
    spec.bottleneck = BottleneckKind::kSparseFlatten;
    spec.head_width_base = 4 + rng() % 12;
    Network net(spec, rng());
    sparsity::SparsityConfig cfg;
    cfg.prune_interval = 1 + static_cast<std::int64_t>(rng() % 40);
    const std::int64_t total = 2000 + static_cast<std::int64_t>(rng() % 2000);
    sparsity::SparseTraining st(cfg, net, total, total / 4, 1);
    const std::int64_t ts = std::llround(cfg.prune_start_fraction * static_cast<double>(total));
    const std::int64_t te = std::llround(cfg.prune_end_fraction * static_cast<double>(total));
    const std::size_t n = st.entries()[0].mask.size();
    for (std::int64_t t = 1; t <= total; ++t) {
      // Weights drift between updates, as they would under training.
      for (auto& v : net.params()[net.bottleneck_index()].var.mutable_value().data())
        if (v != 0.0f) v += 1e-3f * static_cast<float>(static_cast<int>(rng() % 21) - 10);
      const bool due = (t >= ts && t % cfg.prune_interval == 0) || t == te;
      st.on_env_step(t, net);
      if (!due) continue;
      const std::size_t expect = round_half_up((1.0 - schedule_oracle(ts, te, 0.9, t)) * static_cast<double>(n));
      const std::size_t got = st.entries()[0].mask.active_count();
      if (got != expect) {
        o.check(false, fmt("trial %d t=%lld: %zu active, expected %zu", trial, static_cast<long long>(t), got, expect));
        break;
      }
      ++updates;
    }
    o.check(st.entries()[0].mask.active_count() == round_half_up(0.1 * static_cast<double>(n)),
            "final mask is not at 90% sparsity");
  }
  o.note(fmt("%zu pruning updates checked", updates));
  return o;
}

Outcome rigl_invariants() {
  Outcome o;
  Stopwatch sw;
  std::mt19937_64 rng(105);
  std::uniform_real_distribution<float> u(-1, 1);
  std::size_t bad = 0;
  for (int trial = 0; trial < kRiglInstances; ++trial) {
    const std::size_t n = 1 + rng() % 64;
    sparsity::ParamMask m = sparsity::ParamMask::dense({n}, sparsity::Method::kRigL, 0.9);
    for (auto& b : m.bits) b = rng() % 2;
    std::vector<float> w(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = m.bits[i] ? (rng() % 6 == 0 ? 0.5f : u(rng)) : 0.0f;
      g[i] = rng() % 6 == 0 ? -0.25f : u(rng);
    }
    const double f = trial % 5 == 0 ? 0.2 : static_cast<double>(rng() % 100) / 100.0;
    const auto r = sparsity::rigl_update(m, w, g, f);
    const auto oracle = rigl_oracle(m.bits, w, g, f);
    const bool ok = r.mask.active_count() == m.active_count() &&
                    std::set<std::size_t>(r.dropped.begin(), r.dropped.end()) == oracle.dropped &&
                    std::set<std::size_t>(r.grown.begin(), r.grown.end()) == oracle.grown;
    bad += !ok;
  }
  o.check(bad == 0, fmt("%zu of %d instances disagree with brute force", bad, kRiglInstances));
  o.check(sw.seconds() < kRiglBudgetS, fmt("took %.1f s", sw.seconds()));
  return o;
}

Outcome softmoe_matrices() {
  Outcome o;
  std::mt19937_64 rng(106);
  double worst_sum = 0.0, worst_equiv = 0.0;
  bool logits_exact = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t H = 1 + rng() % 4, W = 1 + rng() % 4, C = 1 + rng() % 8, p = 1 + rng() % 4, d = 1 + rng() % 6;
    const std::size_t T = H * W;
    layers::SoftMoE1Params<float> params{VarF(random_tensor_f({C, p}, rng, -2, 2)), VarF(random_tensor_f({C, d}, rng)),
                                         VarF(random_tensor_f({d}, rng))};
    TensorF x = random_tensor_f({1, H, W, C}, rng, -2, 2);
    const auto out = layers::softmoe1_forward_batched(params, VarF(x));
    const auto& D = out.dispatch.value();
    const auto& Cm = out.combine.value();
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0;
      for (std::size_t t = 0; t < T; ++t) s += D[t * p + j];
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
    for (std::size_t t = 0; t < T; ++t) {
      double s = 0;
      for (std::size_t j = 0; j < p; ++j) s += Cm[t * p + j];
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
    std::vector<std::size_t> perm(T);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    TensorF xp(x.shape());
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) xp[perm[t] * C + c] = x[t * C + c];
    const auto outp = layers::softmoe1_forward_batched(params, VarF(xp));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < p; ++j)
        logits_exact &= out.logits.value()[t * p + j] == outp.logits.value()[perm[t] * p + j];
    for (std::size_t k = 0; k < d; ++k) {
      const double a = out.output.value()[k], b = outp.output.value()[k];
      worst_equiv = std::max(worst_equiv, std::abs(a - b) / std::max(1.0, std::abs(a)));
    }
  }
  o.check(worst_sum < kStochasticTol, fmt("row/column sums off by %.3g", worst_sum));
  o.check(logits_exact, "per-token logits are not permuted exactly");
  o.check(worst_equiv < kEquivarianceTol, fmt("permuted output differs by %.3g", worst_equiv));
  o.note(fmt("max |sum-1| %.2e, max output drift under permutation %.2e", worst_sum, worst_equiv));
  return o;
}

Outcome dormancy_cases() {
  Outcome o;
  const std::vector<double> zeros(8, 0.0), symmetric{0.4, 0.4, 0.4, 0.4}, three{1, 1, 1, 0};
  o.check(metrics::layer_dormancy(zeros, 0.001).fraction == 1.0, "all-zero layer is not fully dormant");
  o.check(metrics::layer_dormancy(symmetric, 0.001).fraction == 0.0, "symmetric layer has dormant neurons");
  o.check(metrics::layer_dormancy(three, 0.001).fraction == 0.25, "[1,1,1,0] is not 0.25 dormant");
  return o;
}

Outcome iqm_and_bootstrap() {
  Outcome o;
  Stopwatch sw;
  std::mt19937_64 rng(108);
  std::normal_distribution<double> gauss(0, 1);
  std::size_t bad = 0;
  for (int i = 0; i < kIqmLists; ++i) {
    std::vector<double> v(1 + rng() % 64);
    for (auto& x : v) x = rng() % 3 == 0 ? std::round(gauss(rng) * 2) : gauss(rng) * 5;
    bad += std::abs(stats::iqm(v) - iqm_oracle(v)) > 1e-12;
  }
  o.check(bad == 0, fmt("%zu of %d lists disagree with the trimmed-mean oracle", bad, kIqmLists));

  // Two strata N(0,1) and N(3,1): the 50/50 mixture is symmetric about 1.5,
  // so its mean and IQM coincide there.
  const double truth = 1.5;
  std::size_t covered = 0;
  for (int trial = 0; trial < kCoverageTrials; ++trial) {
    stats::StratifiedScores s;
    for (std::size_t k = 0; k < 5; ++k) {
      s["catch"].push_back(gauss(rng));
      s["dodge"].push_back(3.0 + gauss(rng));
    }
    const auto ci = stats::stratified_bootstrap_ci(s, 0.95, 2000, static_cast<std::uint64_t>(trial));
    covered += ci.lo <= truth && truth <= ci.hi;
  }
  const double coverage = static_cast<double>(covered) / kCoverageTrials;
  o.check(coverage >= kCoverageLo && coverage <= kCoverageHi, fmt("coverage %.3f", coverage));
  o.note(fmt("empirical 95%% coverage %.3f over %d trials", coverage, kCoverageTrials));
  o.check(sw.seconds() < kStatsBudgetS, fmt("took %.1f s", sw.seconds()));
  return o;
}

// ---------------------------------------------------------------------------
// Learning criteria.

ExperimentConfig learning_config(const std::string& env, BottleneckKind b, std::size_t scale, const fs::path& out) {
  ExperimentConfig c;
  c.label = std::string(to_string(b)) + "-x" + std::to_string(scale);
  c.env = env;
  c.seeds.clear();
  for (std::size_t s = 0; s < kSeeds; ++s) c.seeds.push_back(s);
  c.total_steps = kLearningHorizon;
  c.network.bottleneck = b;
  c.network.head_scale = scale;
  c.output_dir = out.string();
  c.validate();
  return c;
}

Outcome catch_sanity(const fs::path&) {
  Outcome o;
  std::size_t solved = 0;
  const auto cfg = learning_config("catch", BottleneckKind::kFlatten, 1, "unused");
  for (std::uint64_t seed : cfg.seeds) {
    Stopwatch sw;
    RunOptions opt;
    opt.stop_when = [](const RunRecord& r) { return r.eval_return_mean >= kCatchThreshold; };
    const auto res = run_training(cfg, seed, opt);
    const auto& last = res.records.back();
    const bool ok = !res.halted && last.eval_return_mean >= kCatchThreshold;
    solved += ok;
    o.note(fmt("seed %llu: return %.3f at step %lld (%.0f s)%s", static_cast<unsigned long long>(seed),
               last.eval_return_mean, static_cast<long long>(last.step), sw.seconds(), ok ? "" : " not reached"));
  }
  o.check(solved >= kCatchSeedsRequired, fmt("%zu of %zu seeds reached %.1f", solved, kSeeds, kCatchThreshold));
  return o;
}

struct GroupResult {
  stats::StratifiedScores returns, psi;
  bool complete = true;
};

Outcome bottleneck_direction(const fs::path& work) {
  Outcome o;
  std::map<std::string, GroupResult> groups;
  for (auto b : {BottleneckKind::kFlatten, BottleneckKind::kGap}) {
    for (const std::string env : {"catch", "dodge"}) {
      const auto cfg = learning_config(env, b, 8, work / "bottleneck");
      auto& g = groups[cfg.label];
      for (std::uint64_t seed : cfg.seeds) {
        Stopwatch sw;
        const auto cell = run_cell(cfg, seed, [&](const std::string& id, const RunRecord& r) {
          if (r.step % 50000 == 0) std::cerr << "  " << id << " step " << r.step << " return " << r.eval_return_mean << "\n";
        });
        if (cell.status == CellStatus::kFailed || cell.status == CellStatus::kHalted) {
          o.check(false, cell.run_id + " " + std::string(to_string(cell.status)) + ": " + cell.message);
          g.complete = false;
          continue;
        }
        const auto records = read_records_file(cell.csv_path);
        const auto& last = records.back();
        if (last.step != cfg.total_steps) {
          o.check(false, cell.run_id + " ended at step " + std::to_string(last.step));
          g.complete = false;
          continue;
        }
        g.returns[env].push_back(last.eval_return_mean);
        g.psi[env].push_back(last.dormant_frac_psi);
        std::cerr << "  " << cell.run_id << " " << to_string(cell.status) << " final return " << last.eval_return_mean
                  << " psi " << last.dormant_frac_psi << " (" << sw.seconds() << " s)\n";
      }
    }
  }
  if (!o.pass) return o;

  auto mean_stat = [](std::span<const double> v) { return stats::mean(v); };
  struct Row {
    double iqm, iqm_lo, iqm_hi, psi, psi_lo, psi_hi;
  };
  std::map<std::string, Row> rows;
  for (const auto& [label, g] : groups) {
    const auto all = stats::pooled(g.returns);
    const auto ci = stats::stratified_bootstrap_ci(g.returns, 0.95, 2000, 0);
    const auto psi_all = stats::pooled(g.psi);
    const auto psi_ci = stats::stratified_bootstrap_ci(g.psi, mean_stat, 0.95, 2000, 0);
    rows[label] = {stats::iqm(all), ci.lo, ci.hi, stats::mean(psi_all), psi_ci.lo, psi_ci.hi};
    o.note(fmt("%s: final IQM %.3f [%.3f, %.3f], dormant psi %.3f [%.3f, %.3f]", label.c_str(), rows[label].iqm,
               ci.lo, ci.hi, rows[label].psi, psi_ci.lo, psi_ci.hi));
  }
  const Row& flat = rows.at("flatten-x8");
  const Row& gap = rows.at("gap-x8");
  o.check(gap.iqm >= flat.iqm, fmt("IQM(gap x8) %.3f < IQM(flatten x8) %.3f", gap.iqm, flat.iqm));
  o.check(flat.psi >= gap.psi, fmt("psi dormancy flatten x8 %.3f < gap x8 %.3f", flat.psi, gap.psi));
  o.note("desk-scale proxy of the bottleneck comparison; magnitudes are not comparable to large-scale runs");
  return o;
}

// ---------------------------------------------------------------------------

Outcome determinism_and_resume(const fs::path& work) {
  Outcome o;
  const fs::path dir = work / "resume";
  fs::create_directories(dir);
  auto same = [](const std::vector<RunRecord>& a, const std::vector<RunRecord>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!a[i].same_outcome(b[i])) return false;
    return true;
  };
  struct Case {
    std::string env;
    BottleneckKind b;
    std::optional<sparsity::Method> method;
  };
  const std::vector<Case> cases{{"catch", BottleneckKind::kFlatten, {}},
                                {"dodge", BottleneckKind::kGap, {}},
                                {"catch", BottleneckKind::kGmp, {}},
                                {"dodge", BottleneckKind::kSoftMoE1, {}},
                                {"dodge", BottleneckKind::kSparseFlatten, sparsity::Method::kGradual},
                                {"catch", BottleneckKind::kSparseFlatten, sparsity::Method::kStatic},
                                {"dodge", BottleneckKind::kSparseFlatten, sparsity::Method::kRigL}};
  for (const auto& c : cases) {
    ExperimentConfig cfg = tiny_config(c.env, c.b);
    if (c.method) {
      cfg.sparsity->method = *c.method;
      cfg.sparsity->rigl_interval = 20;
    }
    const std::string name = c.env + "/" + std::string(to_string(c.b)) +
                             (c.method ? "/" + std::string(sparsity::to_string(*c.method)) : "");
    const auto a = run_training(cfg, 3);
    const auto b = run_training(cfg, 3);
    o.check(same(a.records, b.records), name + ": repeated run differs");

    RunOptions first;
    first.checkpoint_path = (dir / "ck.bin").string();
    first.stop_at_step = 700;
    const auto part = run_training(cfg, 3, first);
    Trainer resumed = load_checkpoint(first.checkpoint_path);
    const auto rest = run_training(resumed);
    std::vector<RunRecord> joined = part.records;
    joined.insert(joined.end(), rest.records.begin(), rest.records.end());
    o.check(same(a.records, joined), name + ": resumed run differs from the uninterrupted one");
  }
  o.note(fmt("%zu cells, interrupted at step 700 of 1500", cases.size()));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bnlab acceptance suite"};
  std::string work_dir = "acceptance_runs";
  std::vector<int> only, known_red;
  app.add_option("--work-dir", work_dir, "Directory for training runs and checkpoints");
  app.add_option("--only", only, "Run only these criteria (1-11)")->check(CLI::Range(1, 11));
  app.add_option("--known-red", known_red,
                 "Criteria whose failure is documented; still printed as FAIL but not counted in the exit status")
      ->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);
  const fs::path work(work_dir);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness (finite differences)", gradient_correctness},
      {"gap equals the spatial-mean oracle exactly", gap_exactness},
      {"bottleneck parameter accounting", parameter_accounting},
      {"pruning schedule and active counts", pruning_schedule},
      {"RigL drop/grow against brute force", rigl_invariants},
      {"SoftMoE-1 stochastic matrices and equivariance", softmoe_matrices},
      {"dormancy tabulated cases", dormancy_cases},
      {"IQM oracle and bootstrap coverage", iqm_and_bootstrap},
      {"Catch learning sanity (flatten x1)", [&] { return catch_sanity(work); }},
      {"gap x8 vs flatten x8 direction", [&] { return bottleneck_direction(work); }},
      {"determinism and checkpoint resume", [&] { return determinism_and_resume(work); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Stopwatch sw;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const bool documented = std::find(known_red.begin(), known_red.end(), id) != known_red.end();
    failures += !o.pass && !documented;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first
              << fmt(" (%.1f s)", sw.seconds()) << (!o.pass && documented ? " [known red]" : "") << "\n";
    for (const auto& n : o.notes) std::cout << "    " << n << "\n";
    std::cout.flush();
  }
  return failures == 0 ? 0 : 1;
}
