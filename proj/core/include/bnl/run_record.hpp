#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bnl {

/// One evaluation point of a run. Missing quantities are NaN.
struct RunRecord {
  std::string run_id;
  std::string env;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  double eval_return_mean = 0.0;
  std::vector<double> eval_returns;  // per-episode, serialized ';'-separated
  double loss = 0.0;                 // mean training loss since the previous record
  double dormant_frac_phi = 0.0;
  double dormant_frac_psi = 0.0;
  double feature_norm = 0.0;
  double effective_density = 0.0;
  double current_sparsity = 0.0;
  double wall_clock_s = 0.0;

  /// Equality on everything except wall clock; NaN fields compare equal to NaN.
  bool same_outcome(const RunRecord& other) const;
};

inline constexpr std::string_view kRunRecordHeader =
    "run_id,env,seed,step,eval_return_mean,eval_return_iqm_inputs,loss,dormant_frac_phi,dormant_frac_psi,"
    "feature_norm,effective_density,current_sparsity,wall_clock_s";

/// Thrown when a CSV does not match the record schema.
class CsvSchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Doubles print in shortest round-trip form so rows parse back bit-exactly.
std::string format_record(const RunRecord& record);
RunRecord parse_record(std::string_view line);

void write_header(std::ostream& out);
void write_record(std::ostream& out, const RunRecord& record);

/// Reads a CSV whose first line must equal the fixed header.
std::vector<RunRecord> read_records(std::istream& in);
std::vector<RunRecord> read_records_file(const std::string& path);

}  // namespace bnl
