#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "bnl/trainer.hpp"

namespace bnl {

inline constexpr std::string_view kCheckpointMagic = "BNLKCKP1";
inline constexpr int kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Layout: magic, u64 manifest length, JSON manifest, then the payload:
/// float32 arrays in catalog order, bit-packed masks, and the replay buffer.
/// All integers and floats little-endian. Written atomically via rename.
void save_checkpoint(const std::string& path, const Trainer& trainer);

/// Restores a trainer whose subsequent records match the uninterrupted run.
/// Throws CheckpointError on a bad magic, unknown version, or truncation.
Trainer load_checkpoint(const std::string& path);

/// The manifest JSON text alone.
std::string read_checkpoint_manifest(const std::string& path);

}  // namespace bnl
