#pragma once

#include "mcmt/model.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace mcmt {

// Checkpoint layout, all integers little-endian u32:
//   "MCCK", version, header length, header JSON (config, fingerprint, vocab,
//   epoch), section count, then per section: name length, name, and one
//   feature-file record ("MCFT", rows, cols, f32 row-major data).

inline constexpr char kCheckpointMagic[4] = {'M', 'C', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model& model, int epoch);

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  int epoch = 0;
  std::string fingerprint;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Throws std::invalid_argument when `config` describes a different
/// architecture than the one stored in `checkpoint_fingerprint`.
void check_fingerprint(const TrainConfig& config, const std::string& checkpoint_fingerprint);

}  // namespace mcmt
