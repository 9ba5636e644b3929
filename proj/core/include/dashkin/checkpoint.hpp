#pragma once

// Single-file parameter snapshots with an embedded JSON description of the run.

#include "dashkin/models.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace dashkin {

struct Checkpoint {
  std::string metadata_json;
  std::vector<std::pair<std::string, nn::Matrix>> tensors;
};

/// Layout: magic "DKCK", u32 version, u64 metadata length, metadata bytes,
/// u32 tensor count, then per tensor: u32 name length, name, u32 rows, u32 cols, doubles.
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot(const models::ParamList& params, std::string metadata_json);
/// Copies tensors into same-named parameters. Throws FormatError on a missing
/// name and DimensionError on a shape mismatch.
void restore(const Checkpoint& ckpt, models::ParamList& params);

}  // namespace dashkin
