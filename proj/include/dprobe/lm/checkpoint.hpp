#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dprobe/lm/model.hpp"
#include "dprobe/lm/vocab.hpp"

namespace dprobe::lm {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct TrainingProvenance {
  std::string corpus;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::string notes;

  friend bool operator==(const TrainingProvenance&, const TrainingProvenance&) = default;
};

struct ModelCheckpoint {
  Transformer model;
  Vocab vocab;
  TrainingProvenance provenance;
  std::uint32_t format_version = kCheckpointFormatVersion;
};

// Layout (little-endian):
//   "DPRB" | u32 version | u64 header bytes | header text (key=value lines)
//   | f64 payload of every parameter in layout order | u64 FNV-1a of all prior bytes
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);

// Throws CheckpointHeaderError, CheckpointTruncatedError, CheckpointVersionError
// or CheckpointIntegrityError; never returns a partial checkpoint.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const ModelCheckpoint& checkpoint);
ModelCheckpoint deserialize_checkpoint(std::string_view bytes);

}  // namespace dprobe::lm
