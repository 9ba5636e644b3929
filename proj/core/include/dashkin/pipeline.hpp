#pragma once

// Manifest-driven ingestion: CAN decoding with coverage discovery, and chunk
// dataset assembly from videos plus decoded signals.

#include "dashkin/cansig.hpp"
#include "dashkin/datastore.hpp"
#include "dashkin/sync.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dashkin::pipeline {

struct IngestOptions {
  double chunk_seconds = sync::kChunkSeconds;
  double fps = sync::kLabelFps;
  /// CAN samples further apart than this split the signal coverage.
  double max_gap_s = 1.0;
  int frame_size = data::kFrameSize;
  double val_fraction = 2.5 / 18.0;
  std::uint64_t seed = 0;
};

struct EntryDecode {
  std::size_t entry = 0;
  std::map<std::string, std::vector<cansig::SignalSample>> series;
  sync::TimeInterval video;
  std::vector<sync::TimeInterval> can_coverage;  ///< common to every configured signal
  std::vector<sync::TimeInterval> blocks;        ///< usable blocks at least one chunk long
  std::size_t malformed_rows = 0;
};

/// Throws FormatError for a malformed capture header.
EntryDecode decode_entry(const sync::ManifestEntry& entry, std::size_t index,
                         std::span<const cansig::SignalSpec> specs, const IngestOptions& options);

struct DecodeReport {
  std::vector<EntryDecode> entries;
  std::size_t usable_blocks = 0;
  std::vector<std::string> warnings;
};

/// Writes `series/entry_NNN/<signal>.csv` and `blocks.json` under `out`.
/// With no usable blocks nothing is written and a "no usable blocks" warning is returned.
DecodeReport run_decode(const std::filesystem::path& manifest,
                        const std::filesystem::path& specs, const std::filesystem::path& out,
                        const IngestOptions& options = {});

struct Rejection {
  std::string chunk_id;
  std::string reason;
};

struct BuildReport {
  std::vector<data::ChunkInfo> chunks;
  std::vector<Rejection> rejections;
  std::optional<data::DatasetSplit> split;
  std::vector<std::string> warnings;
};

/// Materializes chunks, labels, index.json, split.json and rejections.json under `out`.
/// A single-drive corpus gets no split.json and a warning instead.
BuildReport run_build(const std::filesystem::path& manifest, const std::filesystem::path& specs,
                      const std::filesystem::path& out, const IngestOptions& options = {});

/// Stand-in latents (original and ".flip") for every indexed chunk; returns the count.
std::size_t write_standin_latents(const std::filesystem::path& dataset_root, int latent_dim,
                                  std::uint64_t seed);

}  // namespace dashkin::pipeline
