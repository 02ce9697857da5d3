#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "bnl/config.hpp"
#include "bnl/run_record.hpp"
#include "bnl/stats.hpp"

namespace bnl {

/// A grid over a base config. Each axis is a list of named JSON merge
/// patches; every combination of one value per axis is a cell, labelled by
/// joining the value names with '-'. The optional "envs" list repeats the
/// grid per environment without changing labels, so environments become
/// strata of one group when aggregating.
///
///   {"schema_version": 1, "workers": 2, "envs": ["catch", "dodge"], "base": {...ExperimentConfig...},
///    "axes": [[{"name": "flatten", "patch": {"network": {"bottleneck": "flatten"}}}, ...], ...]}
struct SweepSpec {
  std::vector<ExperimentConfig> cells;
  std::size_t workers = 1;
};

/// Throws ConfigError; every expanded cell is validated before anything runs.
SweepSpec parse_sweep(std::string_view json_text);
SweepSpec load_sweep(const std::string& path);

enum class CellStatus { kCompleted, kSkipped, kHalted, kFailed };
std::string_view to_string(CellStatus status);

struct CellOutcome {
  std::string run_id;
  CellStatus status = CellStatus::kCompleted;
  std::string message;
  std::string csv_path;
};

using ProgressFn = std::function<void(const std::string& run_id, const RunRecord& record)>;

/// Runs one seed in its run directory (records.csv, checkpoint.bin, DONE).
/// A finished cell is skipped; an interrupted one resumes from its checkpoint.
CellOutcome run_cell(const ExperimentConfig& config, std::uint64_t seed, const ProgressFn& progress = {});

struct SweepReport {
  std::vector<CellOutcome> cells;
  std::vector<const CellOutcome*> failures() const;
};

/// Runs (config × seed) cells on `workers` threads; each cell stays
/// single-threaded and writes only its own files.
SweepReport run_sweep(const SweepSpec& spec, const ProgressFn& progress = {});

struct SummaryRow {
  std::string label;
  std::size_t runs = 0;
  std::size_t envs = 0;
  double median = 0, median_lo = 0, median_hi = 0;
  double iqm = 0, iqm_lo = 0, iqm_hi = 0;
  double mean = 0, mean_lo = 0, mean_hi = 0;
  double dormant_frac_phi = 0;
  double dormant_frac_psi = 0;
  double feature_norm = 0;
  double effective_density = 0;
};

struct Summary {
  std::vector<SummaryRow> rows;
  std::vector<std::string> warnings;
};

/// Label part of "<label>/<env>/<seed>".
std::string label_of(const std::string& run_id);

/// Final record of every run, grouped by label, then stratified by env.
/// Point estimates and percentile-bootstrap intervals of the pooled final returns.
Summary summarize(const std::vector<RunRecord>& records, double level = 0.95, std::size_t resamples = 2000,
                  std::uint64_t seed = 0);

inline constexpr std::string_view kSummaryHeader =
    "label,runs,envs,median,median_lo,median_hi,iqm,iqm_lo,iqm_hi,mean,mean_lo,mean_hi,"
    "dormant_frac_phi,dormant_frac_psi,feature_norm,effective_density";
void write_summary(std::ostream& out, const Summary& summary);

}  // namespace bnl
