// bnlab: train, sweep, analyze and aggregate bottleneck experiments.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error, 3 numeric halt.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bnl/checkpoint.hpp"
#include "bnl/config.hpp"
#include "bnl/metrics.hpp"
#include "bnl/run_record.hpp"
#include "bnl/sweep.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void print_progress(const std::string& id, const bnl::RunRecord& r) {
  std::cerr << std::fixed << std::setprecision(3) << id << " step " << r.step << " return "
            << r.eval_return_mean << " loss " << r.loss << " dormant(phi/psi) " << r.dormant_frac_phi << '/'
            << r.dormant_frac_psi << " t=" << std::setprecision(1) << r.wall_clock_s << "s\n";
}

int exit_code_for(const std::vector<bnl::CellOutcome>& cells) {
  int code = kExitOk;
  for (const auto& c : cells) {
    if (c.status == bnl::CellStatus::kFailed) return kExitFailure;
    if (c.status == bnl::CellStatus::kHalted) code = kExitNumeric;
  }
  return code;
}

void report_cells(const std::vector<bnl::CellOutcome>& cells) {
  for (const auto& c : cells) {
    std::cout << c.run_id << ": " << bnl::to_string(c.status);
    if (!c.message.empty()) std::cout << " (" << c.message << ")";
    std::cout << '\n';
  }
}

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::int64_t> total_steps;
  bool print_config = false;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  bnl::ExperimentConfig cfg = a.config.empty() ? bnl::ExperimentConfig{} : bnl::load_experiment_config(a.config);
  if (a.output_dir) cfg.output_dir = *a.output_dir;
  if (a.total_steps) cfg.total_steps = *a.total_steps;
  if (a.seed) cfg.seeds = {*a.seed};
  cfg.validate();
  if (a.print_config) {
    std::cout << bnl::to_json_string(cfg) << '\n';
    return kExitOk;
  }
  std::vector<bnl::CellOutcome> cells;
  for (std::uint64_t s : cfg.seeds) {
    cells.push_back(bnl::run_cell(cfg, s, a.quiet ? bnl::ProgressFn{} : bnl::ProgressFn(print_progress)));
  }
  report_cells(cells);
  return exit_code_for(cells);
}

struct SweepArgs {
  std::string config;
  std::optional<std::size_t> workers;
  bool quiet = false;
};

int cmd_sweep(const SweepArgs& a) {
  bnl::SweepSpec spec = bnl::load_sweep(a.config);
  if (a.workers) spec.workers = *a.workers;
  const auto report = bnl::run_sweep(spec, a.quiet ? bnl::ProgressFn{} : bnl::ProgressFn(print_progress));
  report_cells(report.cells);

  std::vector<bnl::RunRecord> records;
  for (const auto& c : report.cells) {
    if (c.status == bnl::CellStatus::kCompleted || c.status == bnl::CellStatus::kSkipped) {
      auto rs = bnl::read_records_file(c.csv_path);
      records.insert(records.end(), rs.begin(), rs.end());
    }
  }
  const auto failures = report.failures();
  if (!failures.empty()) {
    std::cout << "\n" << failures.size() << " of " << report.cells.size() << " cells did not complete:\n";
    for (const auto* f : failures) std::cout << "  " << f->run_id << ": " << f->message << '\n';
  }
  if (!records.empty() && !spec.cells.empty()) {
    const fs::path out = fs::path(spec.cells.front().output_dir) / "summary.csv";
    const auto summary = bnl::summarize(records);
    std::ofstream f(out);
    bnl::write_summary(f, summary);
    bnl::write_summary(std::cout << '\n', summary);
    for (const auto& w : summary.warnings) std::cerr << "warning: " << w << '\n';
  }
  return exit_code_for(report.cells);
}

struct AnalyzeArgs {
  std::string checkpoint;
  std::string out_dir = ".";
  std::size_t frames = 4;
  std::optional<std::size_t> probe_size;
};

int cmd_analyze(const AnalyzeArgs& a) {
  bnl::Trainer trainer = bnl::load_checkpoint(a.checkpoint);
  if (a.probe_size && *a.probe_size == 0) throw bnl::ConfigError("--probe-size must be positive");
  const bnl::Network& net = trainer.agent().online();
  std::mt19937_64 rng(trainer.seed());
  const std::size_t probe_n = a.probe_size.value_or(trainer.config().probe_size);
  const bnl::TensorF probe = trainer.agent().replay().sample_observations(probe_n, rng);
  const auto dormancy = bnl::metrics::dormant_fraction(net, probe, trainer.config().dormancy_threshold);

  std::cout << "run " << bnl::run_id(trainer.config(), trainer.seed()) << " at step " << trainer.step() << '\n';
  std::cout << "dormancy (tau=" << dormancy.threshold << ", probe=" << probe_n
            << ", psi excludes the Q-value layer)\n";
  for (std::size_t i = 0; i < dormancy.phi_layers.size(); ++i) {
    const auto& l = dormancy.phi_layers[i];
    std::cout << "  phi[" << i << "] " << l.dormant << "/" << l.neurons << " = " << l.fraction << '\n';
  }
  for (std::size_t i = 0; i < dormancy.psi_layers.size(); ++i) {
    const auto& l = dormancy.psi_layers[i];
    std::cout << "  psi[" << i << "] " << l.dormant << "/" << l.neurons << " = " << l.fraction << '\n';
  }
  std::cout << "  phi total " << dormancy.phi << ", psi total " << dormancy.psi << '\n';
  std::cout << "feature norm " << bnl::metrics::feature_norm(net, probe) << '\n';
  const auto density = bnl::metrics::effective_density(net, trainer.agent().sparse());
  std::cout << "effective density " << density.active << "/" << density.baseline << " = " << density.density << '\n';

  fs::create_directories(a.out_dir);
  const auto& shape = probe.shape();
  const std::size_t frame = shape[1] * shape[2] * shape[3];
  for (std::size_t k = 0; k < std::min(a.frames, shape[0]); ++k) {
    bnl::TensorF obs({shape[1], shape[2], shape[3]});
    std::copy_n(probe.data().begin() + static_cast<std::ptrdiff_t>(k * frame), frame, obs.data().begin());
    const auto map = bnl::metrics::grad_cam(net, obs);
    const fs::path base = fs::path(a.out_dir) / ("saliency_" + std::to_string(k));
    bnl::metrics::write_pgm(base.string() + ".pgm", map);
    std::ofstream csv(base.string() + ".csv");
    bnl::metrics::write_grid_csv(csv, map);
    std::cout << "wrote " << base.string() << ".pgm\n";
  }
  return kExitOk;
}

struct AggregateArgs {
  std::vector<std::string> inputs;
  std::string out;
  std::size_t resamples = 2000;
  std::uint64_t seed = 0;
};

int cmd_aggregate(const AggregateArgs& a) {
  std::vector<std::string> files;
  for (const auto& in : a.inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::recursive_directory_iterator(in)) {
        if (e.is_regular_file() && e.path().filename() == "records.csv") files.push_back(e.path().string());
      }
    } else {
      files.push_back(in);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "aggregate: no CSV inputs found\n";
    return kExitConfig;
  }
  std::vector<bnl::RunRecord> records;
  for (const auto& f : files) {
    auto rs = bnl::read_records_file(f);
    records.insert(records.end(), rs.begin(), rs.end());
  }
  const auto summary = bnl::summarize(records, 0.95, a.resamples, a.seed);
  for (const auto& w : summary.warnings) std::cerr << "warning: " << w << '\n';
  if (a.out.empty()) {
    bnl::write_summary(std::cout, summary);
  } else {
    std::ofstream f(a.out);
    if (!f) throw std::runtime_error("cannot write " + a.out);
    bnl::write_summary(f, summary);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bnlab: desk-scale experiments on the encoder-to-head bottleneck of value-based agents"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run every seed of one experiment cell");
  t->add_option("-c,--config", train.config, "Experiment config JSON (defaults when omitted)");
  t->add_option("--seed", train.seed, "Run only this seed");
  t->add_option("--output-dir", train.output_dir, "Override output_dir");
  t->add_option("--total-steps", train.total_steps, "Override total_steps");
  t->add_flag("--print-config", train.print_config, "Print the resolved config and exit");
  t->add_flag("-q,--quiet", train.quiet, "No per-evaluation progress lines");

  SweepArgs sweep;
  auto* s = app.add_subcommand("sweep", "Run a grid of cells, resuming finished or interrupted ones");
  s->add_option("-c,--config", sweep.config, "Sweep JSON")->required();
  s->add_option("-j,--workers", sweep.workers, "Parallel workers");
  s->add_flag("-q,--quiet", sweep.quiet, "No per-evaluation progress lines");

  AnalyzeArgs analyze;
  auto* an = app.add_subcommand("analyze", "Dormancy, feature norm, density and Grad-CAM from a checkpoint");
  an->add_option("checkpoint", analyze.checkpoint, "checkpoint.bin")->required();
  an->add_option("-o,--out-dir", analyze.out_dir, "Directory for saliency PGM/CSV files");
  an->add_option("--frames", analyze.frames, "Number of replay frames to explain");
  an->add_option("--probe-size", analyze.probe_size, "Probe batch size");

  AggregateArgs agg;
  auto* ag = app.add_subcommand("aggregate", "Summarize final returns: median, IQM, mean with bootstrap CIs");
  ag->add_option("inputs", agg.inputs, "records.csv files or run directories")->required();
  ag->add_option("-o,--out", agg.out, "Summary CSV (stdout when omitted)");
  ag->add_option("--resamples", agg.resamples, "Bootstrap resamples");
  ag->add_option("--seed", agg.seed, "Bootstrap RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*t) return cmd_train(train);
    if (*s) return cmd_sweep(sweep);
    if (*an) return cmd_analyze(analyze);
    if (*ag) return cmd_aggregate(agg);
  } catch (const bnl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const bnl::NumericError& e) {
    std::cerr << "numeric halt: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const bnl::CsvSchemaError& e) {
    std::cerr << "CSV schema error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
