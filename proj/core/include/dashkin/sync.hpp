#pragma once

// Video/CAN time alignment: coverage intersection, chunking, and resampling
// onto the fixed-rate label grid.

#include "dashkin/cansig.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <span>
#include <vector>

namespace dashkin::sync {

struct TimeInterval {
  double start = 0.0;
  double end = 0.0;

  [[nodiscard]] double duration() const { return end - start; }
  friend bool operator==(const TimeInterval&, const TimeInterval&) = default;
};

/// Sample instants t0 + k/fps for k in [0, n).
struct LabelGrid {
  double t0 = 0.0;
  double fps = 5.0;
  std::size_t n = 200;

  [[nodiscard]] double time_at(std::size_t k) const { return t0 + static_cast<double>(k) / fps; }
  [[nodiscard]] double last_time() const { return time_at(n - 1); }
  [[nodiscard]] double duration() const { return static_cast<double>(n) / fps; }
};

inline constexpr double kLabelFps = 5.0;
inline constexpr double kChunkSeconds = 40.0;

/// Intersection of two sorted, internally non-overlapping coverages; pieces
/// shorter than `min_duration` are dropped.
std::vector<TimeInterval> usable_blocks(std::span<const TimeInterval> video_intervals,
                                        std::span<const TimeInterval> can_intervals,
                                        double min_duration);

/// Back-to-back chunks from block.start; a trailing remainder is discarded.
std::vector<LabelGrid> chunk_block(const TimeInterval& block, double chunk_seconds = kChunkSeconds,
                                   double fps = kLabelFps);

/// Linear interpolation at every grid instant. Throws CoverageError when the
/// grid reaches outside the sample span (no extrapolation).
std::vector<double> resample_linear(std::span<const cansig::SignalSample> samples,
                                    const LabelGrid& grid);
std::vector<double> resample_linear(std::span<const double> times, std::span<const double> values,
                                    const LabelGrid& grid);

/// Splits a time-ordered series into intervals wherever consecutive samples are more than
/// `max_gap` seconds apart. Single isolated samples produce no interval.
std::vector<TimeInterval> coverage_intervals(std::span<const cansig::SignalSample> samples,
                                             double max_gap);

/// Intersection of two sorted coverages without a minimum length.
std::vector<TimeInterval> intersect(std::span<const TimeInterval> a,
                                    std::span<const TimeInterval> b);

/// One recording: a video with its sidecar timing plus the CAN capture taken alongside.
struct ManifestEntry {
  std::filesystem::path video_path;
  double video_start_time_s = 0.0;
  double video_fps = 30.0;
  std::filesystem::path can_csv_path;
  /// Optional drive grouping for splitting; defaults to the entry index.
  std::optional<std::string> drive_id;
};

/// Reads the JSON manifest. Relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

}  // namespace dashkin::sync
