#include "bnl/sweep.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "bnl/checkpoint.hpp"
#include "bnl/trainer.hpp"
#include "json.hpp"

namespace bnl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const json& require(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(where + "." + key + ": missing");
  return *it;
}

void expand(const json& base, const std::vector<std::vector<std::pair<std::string, json>>>& axes, std::size_t axis,
            json current, std::vector<std::string>& names, std::vector<ExperimentConfig>& out) {
  if (axis == axes.size()) {
    if (!names.empty()) {
      std::string label;
      for (const auto& n : names) label += (label.empty() ? "" : "-") + n;
      current["label"] = label;
    }
    out.push_back(parse_experiment_config(current.dump()));
    return;
  }
  for (const auto& [name, patch] : axes[axis]) {
    json next = current;
    next.merge_patch(patch);
    names.push_back(name);
    expand(base, axes, axis + 1, std::move(next), names, out);
    names.pop_back();
  }
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void rewrite_csv(const std::string& path, const std::vector<RunRecord>& records) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    write_header(f);
    for (const auto& r : records) write_record(f, r);
  }
  fs::rename(tmp, path);
}

double nan_mean(const std::vector<double>& v) {
  double total = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (!std::isnan(x)) {
      total += x;
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : std::nan("");
}

}  // namespace

SweepSpec parse_sweep(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed sweep JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("sweep: expected an object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "schema_version" && key != "workers" && key != "base" && key != "axes" && key != "envs") {
      throw ConfigError("sweep." + key + ": unknown field");
    }
  }
  const json& version = require(doc, "schema_version", "sweep");
  if (!version.is_number_integer() || version.get<int>() != kConfigSchemaVersion) {
    throw ConfigError("sweep.schema_version: unsupported version");
  }
  SweepSpec spec;
  if (doc.contains("workers")) {
    const json& w = doc["workers"];
    if (!w.is_number_unsigned() || w.get<std::size_t>() < 1) throw ConfigError("sweep.workers: must be >= 1");
    spec.workers = w.get<std::size_t>();
  }
  json base = require(doc, "base", "sweep");
  if (!base.is_object()) throw ConfigError("sweep.base: expected an object");
  if (base.contains("schema_version")) throw ConfigError("sweep.base.schema_version: set it on the sweep document");
  base["schema_version"] = kConfigSchemaVersion;

  std::vector<std::vector<std::pair<std::string, json>>> axes;
  if (doc.contains("axes")) {
    const json& a = doc["axes"];
    if (!a.is_array()) throw ConfigError("sweep.axes: expected an array of axes");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string where = "sweep.axes[" + std::to_string(i) + "]";
      if (!a[i].is_array() || a[i].empty()) throw ConfigError(where + ": expected a non-empty array");
      auto& axis = axes.emplace_back();
      for (const auto& v : a[i]) {
        if (!v.is_object() || v.size() != 2 || !v.contains("name") || !v.contains("patch") ||
            !v["name"].is_string() || !v["patch"].is_object()) {
          throw ConfigError(where + ": each value needs exactly a string \"name\" and an object \"patch\"");
        }
        axis.emplace_back(v["name"].get<std::string>(), v["patch"]);
      }
    }
  }
  std::vector<std::string> envs;
  if (doc.contains("envs")) {
    const json& e = doc["envs"];
    if (!e.is_array() || e.empty()) throw ConfigError("sweep.envs: expected a non-empty array of env names");
    for (const auto& v : e) {
      if (!v.is_string()) throw ConfigError("sweep.envs: expected strings");
      envs.push_back(v.get<std::string>());
    }
  } else {
    envs.push_back(base.value("env", ExperimentConfig{}.env));
  }
  for (const auto& env : envs) {
    json b = base;
    b["env"] = env;
    std::vector<std::string> names;
    expand(b, axes, 0, b, names, spec.cells);
  }
  std::map<std::string, int> seen;
  for (const auto& c : spec.cells) {
    if (seen[c.label + "/" + c.env]++) throw ConfigError("sweep: duplicate cell " + c.label + "/" + c.env);
  }
  return spec;
}

SweepSpec load_sweep(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read sweep file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_sweep(ss.str());
}

std::string_view to_string(CellStatus status) {
  switch (status) {
    case CellStatus::kCompleted: return "completed";
    case CellStatus::kSkipped: return "skipped";
    case CellStatus::kHalted: return "halted";
    case CellStatus::kFailed: return "failed";
  }
  return "unknown";
}

CellOutcome run_cell(const ExperimentConfig& config, std::uint64_t seed, const ProgressFn& progress) {
  CellOutcome out;
  out.run_id = run_id(config, seed);
  try {
    const fs::path dir = run_directory(config, seed);
    fs::create_directories(dir);
    const std::string csv = (dir / "records.csv").string();
    const std::string ckpt = (dir / "checkpoint.bin").string();
    const fs::path done = dir / "DONE";
    out.csv_path = csv;
    if (fs::exists(done)) {
      out.status = CellStatus::kSkipped;
      out.message = "already complete";
      return out;
    }

    std::optional<Trainer> trainer;
    std::vector<RunRecord> kept;
    if (fs::exists(ckpt)) {
      trainer.emplace(load_checkpoint(ckpt));
      if (!(trainer->config() == config) || trainer->seed() != seed) {
        throw std::runtime_error("checkpoint in " + dir.string() + " belongs to a different config");
      }
      if (fs::exists(csv)) {
        for (auto& r : read_records_file(csv)) {
          if (r.step <= trainer->step()) kept.push_back(std::move(r));
        }
      }
      out.message = "resumed at step " + std::to_string(trainer->step());
    } else {
      trainer.emplace(config, seed);
    }
    rewrite_csv(csv, kept);
    {
      std::ofstream cfg((dir / "config.json").string(), std::ios::trunc);
      cfg << to_json_string(config) << '\n';
    }

    std::ofstream f(csv, std::ios::app);
    RunOptions options;
    options.checkpoint_path = ckpt;
    options.on_record = [&](const RunRecord& r) {
      write_record(f, r);
      f.flush();
      if (progress) progress(out.run_id, r);
    };
    const RunResult result = run_training(*trainer, options);
    if (result.halted) {
      out.status = CellStatus::kHalted;
      out.message = result.halt_reason;
      return out;
    }
    std::ofstream(done.string()) << "ok\n";
    out.status = CellStatus::kCompleted;
  } catch (const std::exception& e) {
    out.status = CellStatus::kFailed;
    out.message = e.what();
  }
  return out;
}

std::vector<const CellOutcome*> SweepReport::failures() const {
  std::vector<const CellOutcome*> out;
  for (const auto& c : cells) {
    if (c.status == CellStatus::kHalted || c.status == CellStatus::kFailed) out.push_back(&c);
  }
  return out;
}

SweepReport run_sweep(const SweepSpec& spec, const ProgressFn& progress) {
  std::vector<std::pair<const ExperimentConfig*, std::uint64_t>> jobs;
  for (const auto& c : spec.cells) {
    for (std::uint64_t s : c.seeds) jobs.emplace_back(&c, s);
  }
  SweepReport report;
  report.cells.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      report.cells[i] = run_cell(*jobs[i].first, jobs[i].second, progress);
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(spec.workers, jobs.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return report;
}

std::string label_of(const std::string& id) {
  const auto last = id.rfind('/');
  if (last == std::string::npos || last == 0) return id;
  const auto env = id.rfind('/', last - 1);
  return env == std::string::npos ? id : id.substr(0, env);
}

Summary summarize(const std::vector<RunRecord>& records, double level, std::size_t resamples, std::uint64_t seed) {
  std::map<std::string, const RunRecord*> last;
  for (const auto& r : records) {
    auto& slot = last[r.run_id];
    if (!slot || r.step > slot->step) slot = &r;
  }
  struct Group {
    stats::StratifiedScores scores;
    std::vector<double> phi, psi, norm, density;
  };
  Summary out;
  std::map<std::string, Group> groups;
  for (const auto& [id, r] : last) {
    if (!std::isfinite(r->eval_return_mean)) {
      out.warnings.push_back("run " + id + " ended without a finite evaluation; excluded");
      continue;
    }
    Group& g = groups[label_of(id)];
    g.scores[r->env].push_back(r->eval_return_mean);
    g.phi.push_back(r->dormant_frac_phi);
    g.psi.push_back(r->dormant_frac_psi);
    g.norm.push_back(r->feature_norm);
    g.density.push_back(r->effective_density);
  }
  for (const auto& [label, g] : groups) {
    SummaryRow row;
    row.label = label;
    row.envs = g.scores.size();
    const auto all = stats::pooled(g.scores);
    row.runs = all.size();
    row.median = stats::median(all);
    row.iqm = stats::iqm(all);
    row.mean = stats::mean(all);
    const auto ci_med = stats::stratified_bootstrap_ci(
        g.scores, [](std::span<const double> v) { return stats::median(v); }, level, resamples, seed);
    const auto ci_iqm = stats::stratified_bootstrap_ci(g.scores, level, resamples, seed);
    const auto ci_mean = stats::stratified_bootstrap_ci(
        g.scores, [](std::span<const double> v) { return stats::mean(v); }, level, resamples, seed);
    row.median_lo = ci_med.lo;
    row.median_hi = ci_med.hi;
    row.iqm_lo = ci_iqm.lo;
    row.iqm_hi = ci_iqm.hi;
    row.mean_lo = ci_mean.lo;
    row.mean_hi = ci_mean.hi;
    for (const auto& w : ci_iqm.warnings) out.warnings.push_back(label + ": " + w);
    row.dormant_frac_phi = nan_mean(g.phi);
    row.dormant_frac_psi = nan_mean(g.psi);
    row.feature_norm = nan_mean(g.norm);
    row.effective_density = nan_mean(g.density);
    out.rows.push_back(row);
  }
  return out;
}

void write_summary(std::ostream& out, const Summary& summary) {
  out << kSummaryHeader << '\n';
  for (const auto& r : summary.rows) {
    out << r.label << ',' << r.runs << ',' << r.envs;
    for (double v : {r.median, r.median_lo, r.median_hi, r.iqm, r.iqm_lo, r.iqm_hi, r.mean, r.mean_lo, r.mean_hi,
                     r.dormant_frac_phi, r.dormant_frac_psi, r.feature_norm, r.effective_density}) {
      out << ',' << num(v);
    }
    out << '\n';
  }
}

}  // namespace bnl
