#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace bnl::stats {

/// Mean after dropping floor(n/4) values from each end of the sorted list.
double iqm(std::span<const double> values);
double median(std::span<const double> values);
double mean(std::span<const double> values);

/// Linear-interpolation quantile of an already sorted sample, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

/// Final scores keyed by environment, one entry per seed.
using StratifiedScores = std::map<std::string, std::vector<double>>;

/// Pooled statistic over all strata (e.g. iqm of the concatenated scores).
using PooledStatistic = std::function<double(std::span<const double>)>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::string> warnings;  // e.g. strata with a single seed
};

enum class BootstrapMethod {
  /// Plain percentile interval of the resampled statistic.
  kPercentile,
  /// Hesterberg's expanded percentile interval: the percentile level is
  /// widened to 2·Φ(−√(n/(n−1))·t_{α/2, df}), with n the smallest stratum
  /// and df = Σ(n_e − 1). Plain percentile intervals are too narrow at a
  /// handful of seeds per stratum; this restores near-nominal coverage.
  kExpandedPercentile,
};

/// Bootstrap over seeds, resampled with replacement inside each environment;
/// the pooled statistic is recomputed per resample.
Interval stratified_bootstrap_ci(const StratifiedScores& scores, const PooledStatistic& statistic,
                                 double level = 0.95, std::size_t resamples = 2000, std::uint64_t seed = 0,
                                 BootstrapMethod method = BootstrapMethod::kExpandedPercentile);

inline Interval stratified_bootstrap_ci(const StratifiedScores& scores, double level = 0.95,
                                        std::size_t resamples = 2000, std::uint64_t seed = 0,
                                        BootstrapMethod method = BootstrapMethod::kExpandedPercentile) {
  return stratified_bootstrap_ci(scores, [](std::span<const double> v) { return iqm(v); }, level, resamples,
                                 seed, method);
}

/// Two-sided tail mass actually read off the bootstrap distribution.
double bootstrap_tail_level(const StratifiedScores& scores, double level, BootstrapMethod method);

std::vector<double> pooled(const StratifiedScores& scores);

}  // namespace bnl::stats
