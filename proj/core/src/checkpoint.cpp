#include "bnl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace bnl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using nlohmann::json;

namespace {

class PayloadWriter {
 public:
  std::size_t offset() const { return bytes_.size(); }

  template <typename T>
  std::size_t append(std::span<const T> values) {
    const std::size_t at = bytes_.size();
    bytes_.resize(at + values.size_bytes());
    if (!values.empty()) std::memcpy(bytes_.data() + at, values.data(), values.size_bytes());
    return at;
  }

  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

template <typename T>
void copy_out(const std::vector<char>& payload, std::size_t offset, std::span<T> dst) {
  if (offset + dst.size_bytes() > payload.size()) throw CheckpointError("checkpoint payload is truncated");
  if (!dst.empty()) std::memcpy(dst.data(), payload.data() + offset, dst.size_bytes());
}

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

void add_array(json& catalog, PayloadWriter& w, const std::string& name, const TensorF& t) {
  const std::size_t off = w.append(t.data());
  catalog.push_back({{"name", name}, {"shape", t.shape()}, {"offset", off}, {"count", t.size()}});
}

struct Loaded {
  json manifest;
  std::vector<char> payload;
};

Loaded read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path);
  char magic[8];
  if (!f.read(magic, 8)) throw CheckpointError("checkpoint is truncated (no magic)");
  if (std::string_view(magic, 8) != kCheckpointMagic) throw CheckpointError("not a checkpoint: bad magic");
  std::uint64_t len = 0;
  if (!f.read(reinterpret_cast<char*>(&len), sizeof(len))) throw CheckpointError("checkpoint is truncated (header)");
  std::string text(len, '\0');
  if (!f.read(text.data(), static_cast<std::streamsize>(len))) {
    throw CheckpointError("checkpoint is truncated (manifest)");
  }
  Loaded out;
  try {
    out.manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  if (out.manifest.value("format_version", -1) != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version");
  }
  const auto payload_bytes = out.manifest.at("payload_bytes").get<std::size_t>();
  out.payload.resize(payload_bytes);
  if (!f.read(out.payload.data(), static_cast<std::streamsize>(payload_bytes))) {
    throw CheckpointError("checkpoint is truncated (payload)");
  }
  return out;
}

void read_array(const json& entry, const std::vector<char>& payload, const std::string& expect_name, TensorF& dst) {
  if (entry.at("name").get<std::string>() != expect_name || entry.at("shape").get<Shape>() != dst.shape()) {
    throw CheckpointError("checkpoint catalog mismatch at " + expect_name);
  }
  copy_out(payload, entry.at("offset").get<std::size_t>(), dst.data());
}

}  // namespace

void save_checkpoint(const std::string& path, const Trainer& trainer) {
  const DqnAgent& agent = trainer.agent();
  PayloadWriter w;
  json catalog = json::array();
  for (const auto& p : agent.online().params()) add_array(catalog, w, "online/" + p.name, p.var.value());
  for (const auto& p : agent.target().params()) add_array(catalog, w, "target/" + p.name, p.var.value());
  const auto& names = agent.online().params();
  for (std::size_t i = 0; i < names.size(); ++i) {
    add_array(catalog, w, "adam/m/" + names[i].name, agent.optimizer().first_moments()[i]);
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    add_array(catalog, w, "adam/v/" + names[i].name, agent.optimizer().second_moments()[i]);
  }
  add_array(catalog, w, "loop/observation", trainer.observation_);

  json masks = json::array();
  if (agent.sparse()) {
    for (const auto& e : agent.sparse()->entries()) {
      const auto packed = sparsity::pack_bits(e.mask);
      const std::size_t off = w.append(std::span<const std::uint8_t>(packed));
      masks.push_back({{"param", names[e.param_index].name},
                       {"param_index", e.param_index},
                       {"shape", e.mask.shape},
                       {"offset", off},
                       {"bytes", packed.size()},
                       {"active", e.mask.active_count()},
                       {"target_sparsity", e.mask.target_sparsity},
                       {"method", std::string(sparsity::to_string(e.mask.method))}});
    }
  }

  const auto rs = agent.replay().state();
  json replay = {{"head", rs.head}, {"size", rs.size}};
  replay["frames"] = {{"offset", w.append(std::span<const std::uint8_t>(rs.frames))}, {"count", rs.frames.size()}};
  replay["actions"] = {{"offset", w.append(std::span<const std::uint32_t>(rs.actions))},
                       {"count", rs.actions.size()}};
  replay["rewards"] = {{"offset", w.append(std::span<const float>(rs.rewards))}, {"count", rs.rewards.size()}};
  replay["flags"] = {{"offset", w.append(std::span<const std::uint8_t>(rs.flags))}, {"count", rs.flags.size()}};

  json manifest = {
      {"format_version", kCheckpointFormatVersion},
      {"config", json::parse(to_json_string(trainer.config_))},
      {"seed", trainer.seed_},
      {"step", trainer.step_},
      {"steps_past_warmup", trainer.past_warmup_},
      {"update_count", agent.update_count()},
      {"adam_steps", agent.optimizer().step_count()},
      {"loss_sum", trainer.loss_sum_},
      {"loss_count", trainer.loss_count_},
      {"wall_clock_s", trainer.elapsed_seconds()},
      {"rng", {{"agent", rng_text(agent.rng())}}},
      {"env_state", trainer.env_->save_state()},
      {"catalog", catalog},
      {"masks", masks},
      {"replay", replay},
      {"payload_bytes", w.offset()},
  };
  const std::string text = manifest.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write checkpoint " + tmp);
    const std::uint64_t len = text.size();
    f.write(kCheckpointMagic.data(), 8);
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    f.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!f) throw CheckpointError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_checkpoint_manifest(const std::string& path) { return read_file(path).manifest.dump(2); }

Trainer load_checkpoint(const std::string& path) {
  Loaded in = read_file(path);
  const json& m = in.manifest;
  try {
    ExperimentConfig config = parse_experiment_config(m.at("config").dump());
    Trainer t(std::move(config), m.at("seed").get<std::uint64_t>());
    DqnAgent& agent = *t.agent_;

    const json& catalog = m.at("catalog");
    auto& online = agent.online().params();
    auto& target = agent.target().params();
    const std::size_t n = online.size();
    if (catalog.size() != 4 * n + 1) throw CheckpointError("checkpoint catalog has the wrong length");
    for (std::size_t i = 0; i < n; ++i) {
      read_array(catalog[i], in.payload, "online/" + online[i].name, online[i].var.mutable_value());
      read_array(catalog[n + i], in.payload, "target/" + target[i].name, target[i].var.mutable_value());
      read_array(catalog[2 * n + i], in.payload, "adam/m/" + online[i].name, agent.optimizer().first_moments()[i]);
      read_array(catalog[3 * n + i], in.payload, "adam/v/" + online[i].name, agent.optimizer().second_moments()[i]);
    }
    read_array(catalog[4 * n], in.payload, "loop/observation", t.observation_);

    const json& masks = m.at("masks");
    if (agent.sparse()) {
      auto& entries = agent.sparse()->entries();
      if (masks.size() != entries.size()) throw CheckpointError("checkpoint mask count mismatch");
      for (std::size_t i = 0; i < entries.size(); ++i) {
        const json& mj = masks[i];
        if (mj.at("param_index").get<std::size_t>() != entries[i].param_index) {
          throw CheckpointError("checkpoint mask targets a different parameter");
        }
        std::vector<std::uint8_t> packed(mj.at("bytes").get<std::size_t>());
        copy_out(in.payload, mj.at("offset").get<std::size_t>(), std::span<std::uint8_t>(packed));
        sparsity::unpack_bits(packed, entries[i].mask);
      }
    } else if (!masks.empty()) {
      throw CheckpointError("checkpoint carries masks but the config is dense");
    }

    const json& rj = m.at("replay");
    ReplayBuffer::State rs;
    rs.head = rj.at("head").get<std::size_t>();
    rs.size = rj.at("size").get<std::size_t>();
    rs.frames.resize(rj.at("frames").at("count").get<std::size_t>());
    rs.actions.resize(rj.at("actions").at("count").get<std::size_t>());
    rs.rewards.resize(rj.at("rewards").at("count").get<std::size_t>());
    rs.flags.resize(rj.at("flags").at("count").get<std::size_t>());
    copy_out(in.payload, rj.at("frames").at("offset").get<std::size_t>(), std::span<std::uint8_t>(rs.frames));
    copy_out(in.payload, rj.at("actions").at("offset").get<std::size_t>(), std::span<std::uint32_t>(rs.actions));
    copy_out(in.payload, rj.at("rewards").at("offset").get<std::size_t>(), std::span<float>(rs.rewards));
    copy_out(in.payload, rj.at("flags").at("offset").get<std::size_t>(), std::span<std::uint8_t>(rs.flags));
    agent.replay().restore(std::move(rs));

    std::istringstream rng_in(m.at("rng").at("agent").get<std::string>());
    rng_in >> agent.rng();
    if (!rng_in) throw CheckpointError("corrupt RNG state in checkpoint");
    agent.set_update_count(m.at("update_count").get<std::int64_t>());
    agent.optimizer().set_step_count(m.at("adam_steps").get<std::int64_t>());
    t.env_->load_state(m.at("env_state").get<std::string>());
    t.step_ = m.at("step").get<std::int64_t>();
    t.past_warmup_ = m.at("steps_past_warmup").get<std::int64_t>();
    t.loss_sum_ = m.at("loss_sum").get<double>();
    t.loss_count_ = m.at("loss_count").get<std::int64_t>();
    t.wall_clock_offset_ = m.at("wall_clock_s").get<double>();
    t.started_ = std::chrono::steady_clock::now();
    return t;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
  }
}

}  // namespace bnl
