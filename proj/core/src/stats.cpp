#include "bnl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace bnl::stats {

double iqm(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("iqm of an empty list");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t cut = v.size() / 4;
  double total = 0.0;
  for (std::size_t i = cut; i < v.size() - cut; ++i) total += v[i];
  return total / static_cast<double>(v.size() - 2 * cut);
}

double median(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.5);
}

double mean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty list");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty list");
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<double> pooled(const StratifiedScores& scores) {
  std::vector<double> out;
  for (const auto& [env, s] : scores) out.insert(out.end(), s.begin(), s.end());
  return out;
}

double bootstrap_tail_level(const StratifiedScores& scores, double level, BootstrapMethod method) {
  const double alpha = 1.0 - level;
  if (method == BootstrapMethod::kPercentile) return alpha;
  std::size_t smallest = std::numeric_limits<std::size_t>::max(), df = 0;
  for (const auto& [env, s] : scores) {
    smallest = std::min(smallest, s.size());
    df += s.size() - 1;
  }
  // A single-seed stratum has no spread to correct for.
  if (smallest < 2 || df == 0) return alpha;
  const double n = static_cast<double>(smallest);
  const double t = boost::math::quantile(boost::math::complement(boost::math::students_t(static_cast<double>(df)),
                                                                 alpha / 2.0));
  return 2.0 * boost::math::cdf(boost::math::normal(), -std::sqrt(n / (n - 1.0)) * t);
}

Interval stratified_bootstrap_ci(const StratifiedScores& scores, const PooledStatistic& statistic, double level,
                                 std::size_t resamples, std::uint64_t seed, BootstrapMethod method) {
  if (scores.empty()) throw std::invalid_argument("bootstrap needs at least one stratum");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  if (resamples == 0) throw std::invalid_argument("bootstrap needs at least one resample");
  Interval out;
  std::size_t total = 0;
  for (const auto& [env, s] : scores) {
    if (s.empty()) throw std::invalid_argument("stratum '" + env + "' has no scores");
    if (s.size() == 1) out.warnings.push_back("stratum '" + env + "' has a single seed; its resamples are degenerate");
    total += s.size();
  }

  std::mt19937_64 rng(seed);
  std::vector<double> stats(resamples);
  std::vector<double> sample(total);
  for (std::size_t b = 0; b < resamples; ++b) {
    std::size_t k = 0;
    for (const auto& [env, s] : scores) {
      for (std::size_t i = 0; i < s.size(); ++i) sample[k++] = s[rng() % s.size()];
    }
    stats[b] = statistic(sample);
  }
  std::sort(stats.begin(), stats.end());
  const double tail = bootstrap_tail_level(scores, level, method) / 2.0;
  out.lo = quantile_sorted(stats, tail);
  out.hi = quantile_sorted(stats, 1.0 - tail);
  return out;
}

}  // namespace bnl::stats
