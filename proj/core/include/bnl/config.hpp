#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bnl/agent.hpp"
#include "bnl/network_spec.hpp"
#include "bnl/sparsity.hpp"

namespace bnl {

inline constexpr int kConfigSchemaVersion = 1;

/// Invalid or unreadable configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One experiment cell: architecture, learner, environment and protocol.
///
/// Serialized as a single JSON object. Every object level rejects unknown
/// keys; omitted keys take the defaults below. network.num_actions and
/// network.input_shape are derived from the environment and may not be set.
struct ExperimentConfig {
  std::string label = "default";
  std::string env = "catch";
  std::size_t frame_stack = 1;
  std::vector<std::uint64_t> seeds{0};
  std::int64_t total_steps = 200000;
  std::int64_t eval_every = 5000;
  std::size_t eval_episodes = 20;
  std::size_t probe_size = 512;
  double dormancy_threshold = 0.001;
  std::int64_t checkpoint_every = 0;  // env steps; 0 keeps only the final checkpoint
  std::string output_dir = "runs";

  NetworkSpec network;
  AgentConfig agent;
  std::optional<sparsity::SparsityConfig> sparsity;

  /// Throws ConfigError.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses and validates. Throws ConfigError with the offending key path.
ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::string& path);

/// Canonical JSON (all fields, schema_version first).
std::string to_json_string(const ExperimentConfig& config, int indent = 2);

/// "<label>/<env>/<seed>"
std::string run_id(const ExperimentConfig& config, std::uint64_t seed);

/// Directory holding one seed's CSV and checkpoint.
std::string run_directory(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace bnl
