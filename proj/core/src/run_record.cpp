#include "bnl/run_record.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace bnl {

namespace {

constexpr std::size_t kColumns = 13;

void put_double(std::string& out, double v) {
  if (std::isnan(v)) {
    out += "nan";
    return;
  }
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double get_double(std::string_view s, const char* column) {
  if (s == "nan") return std::nan("");
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw CsvSchemaError(std::string("bad number in column ") + column + ": '" + std::string(s) + "'");
  }
  return v;
}

template <typename Int>
Int get_int(std::string_view s, const char* column) {
  Int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw CsvSchemaError(std::string("bad integer in column ") + column + ": '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

bool RunRecord::same_outcome(const RunRecord& o) const {
  if (run_id != o.run_id || env != o.env || seed != o.seed || step != o.step) return false;
  if (eval_returns.size() != o.eval_returns.size()) return false;
  for (std::size_t i = 0; i < eval_returns.size(); ++i) {
    if (!same(eval_returns[i], o.eval_returns[i])) return false;
  }
  return same(eval_return_mean, o.eval_return_mean) && same(loss, o.loss) &&
         same(dormant_frac_phi, o.dormant_frac_phi) && same(dormant_frac_psi, o.dormant_frac_psi) &&
         same(feature_norm, o.feature_norm) && same(effective_density, o.effective_density) &&
         same(current_sparsity, o.current_sparsity);
}

std::string format_record(const RunRecord& r) {
  std::string out = r.run_id + "," + r.env + "," + std::to_string(r.seed) + "," + std::to_string(r.step) + ",";
  put_double(out, r.eval_return_mean);
  out += ',';
  for (std::size_t i = 0; i < r.eval_returns.size(); ++i) {
    if (i) out += ';';
    put_double(out, r.eval_returns[i]);
  }
  for (double v : {r.loss, r.dormant_frac_phi, r.dormant_frac_psi, r.feature_norm, r.effective_density,
                   r.current_sparsity, r.wall_clock_s}) {
    out += ',';
    put_double(out, v);
  }
  return out;
}

RunRecord parse_record(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto f = split(line, ',');
  if (f.size() != kColumns) {
    throw CsvSchemaError("expected " + std::to_string(kColumns) + " columns, found " + std::to_string(f.size()));
  }
  RunRecord r;
  r.run_id = std::string(f[0]);
  r.env = std::string(f[1]);
  r.seed = get_int<std::uint64_t>(f[2], "seed");
  r.step = get_int<std::int64_t>(f[3], "step");
  r.eval_return_mean = get_double(f[4], "eval_return_mean");
  if (!f[5].empty()) {
    for (auto item : split(f[5], ';')) r.eval_returns.push_back(get_double(item, "eval_return_iqm_inputs"));
  }
  r.loss = get_double(f[6], "loss");
  r.dormant_frac_phi = get_double(f[7], "dormant_frac_phi");
  r.dormant_frac_psi = get_double(f[8], "dormant_frac_psi");
  r.feature_norm = get_double(f[9], "feature_norm");
  r.effective_density = get_double(f[10], "effective_density");
  r.current_sparsity = get_double(f[11], "current_sparsity");
  r.wall_clock_s = get_double(f[12], "wall_clock_s");
  return r;
}

void write_header(std::ostream& out) { out << kRunRecordHeader << '\n'; }

void write_record(std::ostream& out, const RunRecord& record) { out << format_record(record) << '\n'; }

std::vector<RunRecord> read_records(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CsvSchemaError("empty CSV: header row missing");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRunRecordHeader) throw CsvSchemaError("header mismatch: '" + line + "'");
  std::vector<RunRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const CsvSchemaError& e) {
      throw CsvSchemaError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (out.size() > 1 && out[out.size() - 2].run_id == out.back().run_id &&
        out.back().step <= out[out.size() - 2].step) {
      throw CsvSchemaError("line " + std::to_string(lineno) + ": step is not increasing within run " +
                           out.back().run_id);
    }
  }
  return out;
}

std::vector<RunRecord> read_records_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw CsvSchemaError("cannot open " + path);
  return read_records(f);
}

}  // namespace bnl
