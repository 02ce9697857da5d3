#include "bnl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace bnl {

using nlohmann::json;

namespace {

// Reads typed fields from one JSON object and refuses keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = convert<T>(*it);
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key = "") const {
    std::string p = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
    return p.empty() ? "<root>" : p;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError(where(key) + ": unknown field");
    }
  }

 private:
  template <typename T>
  static T convert(const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
          throw ConfigError("expected a non-negative integer");
        }
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("expected a string");
    }
    return v.get<T>();
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void wrap(const std::string& where, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

NetworkSpec read_network(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  NetworkSpec s;
  std::string encoder{to_string(s.encoder)}, bottleneck{to_string(s.bottleneck)};
  r.get("encoder", encoder);
  r.get("encoder_channels", s.encoder_channels);
  r.get("extra_resnet_blocks", s.extra_resnet_blocks);
  r.get("bottleneck", bottleneck);
  r.get("head_width_base", s.head_width_base);
  r.get("head_scale", s.head_scale);
  r.get("head_extra_layers", s.head_extra_layers);
  r.get("softmoe_slots", s.softmoe_slots);
  r.finish();
  wrap(r.where("encoder"), [&] { s.encoder = parse_encoder_kind(encoder); });
  wrap(r.where("bottleneck"), [&] { s.bottleneck = parse_bottleneck_kind(bottleneck); });
  return s;
}

AgentConfig read_agent(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  AgentConfig a;
  r.get("discount", a.discount);
  r.get("update_horizon", a.update_horizon);
  r.get("batch_size", a.batch_size);
  r.get("update_period", a.update_period);
  r.get("min_replay_history", a.min_replay_history);
  r.get("replay_capacity", a.replay_capacity);
  r.get("epsilon_start", a.epsilon_start);
  r.get("epsilon_train_final", a.epsilon_train_final);
  r.get("epsilon_eval", a.epsilon_eval);
  r.get("epsilon_decay_fraction", a.epsilon_decay_fraction);
  r.get("learning_rate", a.learning_rate);
  r.get("adam_epsilon", a.adam_epsilon);
  r.get("weight_decay", a.weight_decay);
  r.get("target_update_period", a.target_update_period);
  if (const json* rr = r.child("replay_ratio"); rr && !rr->is_null()) {
    if (!rr->is_number()) throw ConfigError(r.where("replay_ratio") + ": expected a number or null");
    a.replay_ratio = rr->get<double>();
  }
  r.get("huber_delta", a.huber_delta);
  std::string policy = a.policy == PolicyKind::kSoftmax ? "softmax" : "epsilon-greedy";
  r.get("policy", policy);
  r.get("softmax_temperature", a.softmax_temperature);
  r.finish();
  if (policy == "epsilon-greedy") {
    a.policy = PolicyKind::kEpsilonGreedy;
  } else if (policy == "softmax") {
    a.policy = PolicyKind::kSoftmax;
  } else {
    throw ConfigError(r.where("policy") + ": expected \"epsilon-greedy\" or \"softmax\"");
  }
  return a;
}

sparsity::SparsityConfig read_sparsity(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  sparsity::SparsityConfig s;
  std::string method{to_string(s.method)}, scope{to_string(s.scope)};
  r.get("method", method);
  r.get("scope", scope);
  r.get("target_sparsity", s.target_sparsity);
  r.get("prune_start_fraction", s.prune_start_fraction);
  r.get("prune_end_fraction", s.prune_end_fraction);
  r.get("prune_interval", s.prune_interval);
  r.get("exponent", s.exponent);
  r.get("drop_fraction", s.drop_fraction);
  r.get("rigl_interval", s.rigl_interval);
  r.get("rigl_cosine_anneal", s.rigl_cosine_anneal);
  r.finish();
  wrap(r.where("method"), [&] { s.method = sparsity::parse_method(method); });
  wrap(r.where("scope"), [&] { s.scope = sparsity::parse_scope(scope); });
  return s;
}

nlohmann::ordered_json network_json(const NetworkSpec& s) {
  return {{"encoder", std::string(to_string(s.encoder))},
          {"encoder_channels", s.encoder_channels},
          {"extra_resnet_blocks", s.extra_resnet_blocks},
          {"bottleneck", std::string(to_string(s.bottleneck))},
          {"head_width_base", s.head_width_base},
          {"head_scale", s.head_scale},
          {"head_extra_layers", s.head_extra_layers},
          {"softmoe_slots", s.softmoe_slots}};
}

nlohmann::ordered_json agent_json(const AgentConfig& a) {
  return {{"discount", a.discount},
          {"update_horizon", a.update_horizon},
          {"batch_size", a.batch_size},
          {"update_period", a.update_period},
          {"min_replay_history", a.min_replay_history},
          {"replay_capacity", a.replay_capacity},
          {"epsilon_start", a.epsilon_start},
          {"epsilon_train_final", a.epsilon_train_final},
          {"epsilon_eval", a.epsilon_eval},
          {"epsilon_decay_fraction", a.epsilon_decay_fraction},
          {"learning_rate", a.learning_rate},
          {"adam_epsilon", a.adam_epsilon},
          {"weight_decay", a.weight_decay},
          {"target_update_period", a.target_update_period},
          {"replay_ratio", a.replay_ratio ? nlohmann::ordered_json(*a.replay_ratio) : nlohmann::ordered_json(nullptr)},
          {"huber_delta", a.huber_delta},
          {"policy", a.policy == PolicyKind::kSoftmax ? "softmax" : "epsilon-greedy"},
          {"softmax_temperature", a.softmax_temperature}};
}

nlohmann::ordered_json sparsity_json(const sparsity::SparsityConfig& s) {
  return {{"method", std::string(to_string(s.method))},
          {"scope", std::string(to_string(s.scope))},
          {"target_sparsity", s.target_sparsity},
          {"prune_start_fraction", s.prune_start_fraction},
          {"prune_end_fraction", s.prune_end_fraction},
          {"prune_interval", s.prune_interval},
          {"exponent", s.exponent},
          {"drop_fraction", s.drop_fraction},
          {"rigl_interval", s.rigl_interval},
          {"rigl_cosine_anneal", s.rigl_cosine_anneal}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (label.empty() || label.find_first_of("/,\n") != std::string::npos) {
    throw ConfigError("label: must be non-empty and free of '/', ',' and newlines");
  }
  if (env != "catch" && env != "dodge") throw ConfigError("env: expected \"catch\" or \"dodge\"");
  if (frame_stack < 1) throw ConfigError("frame_stack: must be >= 1");
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds: duplicates are not allowed");
  }
  if (total_steps < 1) throw ConfigError("total_steps: must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every: must be >= 1");
  if (eval_episodes < 1) throw ConfigError("eval_episodes: must be >= 1");
  if (probe_size < 1) throw ConfigError("probe_size: must be >= 1");
  if (!(dormancy_threshold >= 0.0)) throw ConfigError("dormancy_threshold: must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every: must be >= 0");
  if (output_dir.empty()) throw ConfigError("output_dir: must be non-empty");
  wrap("network", [&] { network.validate(); });
  if (network.input_shape != Shape{10, 10, 2 * frame_stack} || network.num_actions != 3) {
    throw ConfigError("network: input shape and action count must match the environment");
  }
  wrap("agent", [&] { agent.validate(); });
  const bool sparse_bottleneck = network.bottleneck == BottleneckKind::kSparseFlatten;
  if (sparse_bottleneck && !sparsity) throw ConfigError("sparsity: required for the sparse-flatten bottleneck");
  if (sparsity) {
    const auto& s = *sparsity;
    if (!(s.target_sparsity >= 0.0 && s.target_sparsity < 1.0)) {
      throw ConfigError("sparsity.target_sparsity: must lie in [0, 1)");
    }
    if (!(s.prune_start_fraction >= 0.0 && s.prune_start_fraction < s.prune_end_fraction &&
          s.prune_end_fraction <= 1.0)) {
      throw ConfigError("sparsity: need 0 <= prune_start_fraction < prune_end_fraction <= 1");
    }
    if (s.prune_interval < 1 || s.rigl_interval < 1) throw ConfigError("sparsity: intervals must be >= 1");
    if (!(s.exponent > 0.0)) throw ConfigError("sparsity.exponent: must be positive");
    if (!(s.drop_fraction >= 0.0 && s.drop_fraction <= 1.0)) {
      throw ConfigError("sparsity.drop_fraction: must lie in [0, 1]");
    }
  }
}

ExperimentConfig parse_experiment_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  ObjectReader r(j, "");
  int version = -1;
  if (!j.is_object() || !j.contains("schema_version")) throw ConfigError("schema_version: missing");
  r.get("schema_version", version);
  if (version != kConfigSchemaVersion) {
    throw ConfigError("schema_version: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kConfigSchemaVersion) + ")");
  }
  ExperimentConfig c;
  r.get("label", c.label);
  r.get("env", c.env);
  r.get("frame_stack", c.frame_stack);
  r.get("seeds", c.seeds);
  r.get("total_steps", c.total_steps);
  r.get("eval_every", c.eval_every);
  r.get("eval_episodes", c.eval_episodes);
  r.get("probe_size", c.probe_size);
  r.get("dormancy_threshold", c.dormancy_threshold);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("output_dir", c.output_dir);
  if (const json* n = r.child("network")) c.network = read_network(*n, "network");
  if (const json* a = r.child("agent")) c.agent = read_agent(*a, "agent");
  if (const json* s = r.child("sparsity"); s && !s->is_null()) c.sparsity = read_sparsity(*s, "sparsity");
  r.finish();
  c.network.input_shape = {10, 10, 2 * c.frame_stack};
  c.network.num_actions = 3;
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string to_json_string(const ExperimentConfig& c, int indent) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["schema_version"] = kConfigSchemaVersion;
  j["label"] = c.label;
  j["env"] = c.env;
  j["frame_stack"] = c.frame_stack;
  j["seeds"] = c.seeds;
  j["total_steps"] = c.total_steps;
  j["eval_every"] = c.eval_every;
  j["eval_episodes"] = c.eval_episodes;
  j["probe_size"] = c.probe_size;
  j["dormancy_threshold"] = c.dormancy_threshold;
  j["checkpoint_every"] = c.checkpoint_every;
  j["output_dir"] = c.output_dir;
  j["network"] = network_json(c.network);
  j["agent"] = agent_json(c.agent);
  j["sparsity"] = c.sparsity ? sparsity_json(*c.sparsity) : nlohmann::ordered_json(nullptr);
  return j.dump(indent);
}

std::string run_id(const ExperimentConfig& config, std::uint64_t seed) {
  return config.label + "/" + config.env + "/" + std::to_string(seed);
}

std::string run_directory(const ExperimentConfig& config, std::uint64_t seed) {
  return config.output_dir + "/" + config.label + "/" + config.env + "/seed" + std::to_string(seed);
}

}  // namespace bnl
