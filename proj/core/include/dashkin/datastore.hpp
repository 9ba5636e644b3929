#pragma once

// Chunk dataset: label tracks, packed frame tensors, augmentation, splitting,
// sentinel policies and distribution statistics.

#include "dashkin/cansig.hpp"
#include "dashkin/sync.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dashkin::data {

enum class Attribute { speed, yaw, lead_present, lead_distance, lead_rel_speed };

inline constexpr std::array<Attribute, 5> kAllAttributes = {
    Attribute::speed, Attribute::yaw, Attribute::lead_present, Attribute::lead_distance,
    Attribute::lead_rel_speed};

std::string_view to_string(Attribute a);
/// Throws ConfigError on an unknown name.
Attribute attribute_from_string(std::string_view name);

/// Lead distance reported by the radar when nothing is tracked (m).
inline constexpr double kLeadDistanceSentinel = 252.0;
/// Lead relative speed reported when nothing is tracked (km/h).
inline constexpr double kLeadRelSpeedDefault = 0.0;
inline constexpr std::size_t kChunkFrames = 200;
inline constexpr int kFrameSize = 256;

/// Per-frame labels of one chunk. Units: speed km/h, yaw deg/s (negative = left),
/// lead_present in [0, 1], lead_distance m, lead_rel_speed km/h.
struct LabelTrack {
  std::string chunk_id;
  double fps = 5.0;
  std::vector<double> speed;
  std::vector<double> yaw;
  std::vector<double> lead_present;
  std::vector<double> lead_distance;
  std::vector<double> lead_rel_speed;

  [[nodiscard]] std::size_t size() const { return speed.size(); }
  [[nodiscard]] std::vector<double>& values(Attribute a);
  [[nodiscard]] const std::vector<double>& values(Attribute a) const;

  /// Equal lengths, finite values, lead_present in [0, 1] and the sentinel rule
  /// for frames with lead_present == 0. Throws FormatError.
  void validate() const;

  friend bool operator==(const LabelTrack&, const LabelTrack&) = default;
};

/// Forces lead_distance = 252 and lead_rel_speed = 0 wherever lead_present is exactly 0.
/// Returns the number of frames that needed correcting.
std::size_t apply_sentinels(LabelTrack& track);

/// Frames of one chunk, frame-major then channel-major then row-major bytes.
struct VideoChunk {
  std::string chunk_id;
  double t0 = 0.0;
  std::uint32_t frames = 0;
  std::uint32_t channels = 3;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::uint8_t> data;

  static VideoChunk zeros(std::string id, std::uint32_t frames, std::uint32_t height,
                          std::uint32_t width);

  [[nodiscard]] std::size_t frame_bytes() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  [[nodiscard]] std::size_t index(std::size_t f, std::size_t c, std::size_t y,
                                  std::size_t x) const {
    return ((f * channels + c) * height + y) * width + x;
  }
  [[nodiscard]] std::uint8_t at(std::size_t f, std::size_t c, std::size_t y, std::size_t x) const {
    return data[index(f, c, y, x)];
  }
  std::uint8_t& at(std::size_t f, std::size_t c, std::size_t y, std::size_t x) {
    return data[index(f, c, y, x)];
  }
  [[nodiscard]] std::span<const std::uint8_t> frame(std::size_t f) const {
    return {data.data() + f * frame_bytes(), frame_bytes()};
  }

  /// Square frames, three channels and a consistent byte count. Throws FormatError.
  void validate() const;

  friend bool operator==(const VideoChunk&, const VideoChunk&) = default;
};

/// Labels whose attributes may have been invalidated by an augmentation.
struct TrainingLabels {
  LabelTrack track;
  std::array<bool, 5> valid{true, true, true, true, true};

  [[nodiscard]] bool is_valid(Attribute a) const { return valid[static_cast<std::size_t>(a)]; }
  /// Throws InvalidTargetError when `a` is not usable as a target.
  [[nodiscard]] const std::vector<double>& target(Attribute a) const;
};

/// Attributes that survive time reversal.
inline constexpr std::array<Attribute, 2> kReversalPreserved = {Attribute::lead_present,
                                                                Attribute::lead_distance};

VideoChunk flip_frames(const VideoChunk& chunk);
LabelTrack flip_labels(const LabelTrack& labels);
/// Mirrors frames along the width axis and negates yaw.
std::pair<VideoChunk, LabelTrack> flip_horizontal(const VideoChunk& chunk,
                                                  const LabelTrack& labels);

VideoChunk reverse_frames(const VideoChunk& chunk);
TrainingLabels reverse_labels(const LabelTrack& labels);
/// Reverses frames and the preserved labels; speed, yaw and lead_rel_speed become invalid.
std::pair<VideoChunk, TrainingLabels> reverse_time(const VideoChunk& chunk,
                                                   const LabelTrack& labels);

/// True where lead_present >= threshold.
std::vector<bool> mask_lead_absent(const LabelTrack& labels, double threshold = 0.5);

enum class RelSpeedClass : int { receding = 0, steady = 1, approaching = 2 };
std::string_view to_string(RelSpeedClass c);

/// receding when v > dead_band, approaching when v < -dead_band, steady otherwise.
std::vector<RelSpeedClass> rel_speed_to_classes(std::span<const double> lead_rel_speed,
                                                double dead_band = 2.0);

// ---------------------------------------------------------------------------
// Statistics

struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;

  [[nodiscard]] std::size_t total() const;
};

/// Counts finite values per bin. Bins are [e_i, e_{i+1}) except the last,
/// which is closed; values outside the edges fall into the nearest end bin.
Histogram histogram(std::span<const double> values, std::span<const double> bin_edges);
std::vector<double> uniform_edges(double lo, double hi, std::size_t bins);
/// Jensen-Shannon divergence of two normalized histograms over the same edges, in bits.
double js_divergence(const Histogram& a, const Histogram& b);
/// Writes `<name>.csv` plus linear and log-scale SVG renderings into `dir`.
void write_histogram(const Histogram& h, const std::filesystem::path& dir, const std::string& name,
                     const std::string& x_label);

// ---------------------------------------------------------------------------
// Splitting

struct ChunkInfo {
  std::string chunk_id;
  std::string drive_id;
  double t0 = 0.0;
  double duration_s = 0.0;
};

struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

/// Assigns whole drives to one side so that the validation share of total
/// duration approaches `val_fraction`. Deterministic for a seed.
DatasetSplit split_dataset(std::span<const ChunkInfo> chunks, double val_fraction,
                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Chunk assembly

/// Interleaved 8-bit RGB image.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;
};

/// Timed frame provider for one recording.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  [[nodiscard]] virtual double start_time() const = 0;
  [[nodiscard]] virtual double fps() const = 0;
  [[nodiscard]] virtual std::size_t frame_count() const = 0;
  virtual RgbImage frame(std::size_t index) = 0;

  [[nodiscard]] double frame_time(std::size_t index) const {
    return start_time() + static_cast<double>(index) / fps();
  }
  [[nodiscard]] sync::TimeInterval coverage() const {
    return {start_time(), start_time() + static_cast<double>(frame_count()) / fps()};
  }
};

/// In-memory source, mostly for tests and synthetic inputs.
class MemoryFrameSource : public FrameSource {
 public:
  MemoryFrameSource(double start_time, double fps, std::vector<RgbImage> frames)
      : start_(start_time), fps_(fps), frames_(std::move(frames)) {}
  [[nodiscard]] double start_time() const override { return start_; }
  [[nodiscard]] double fps() const override { return fps_; }
  [[nodiscard]] std::size_t frame_count() const override { return frames_.size(); }
  RgbImage frame(std::size_t index) override { return frames_.at(index); }

 private:
  double start_;
  double fps_;
  std::vector<RgbImage> frames_;
};

/// Index of the frame closest in time to `t` (earlier frame on ties).
std::size_t nearest_frame_index(double start_time, double fps, std::size_t count, double t);

/// Anisotropic bilinear stretch of an RGB image into planar CHW bytes of size x size.
std::vector<std::uint8_t> stretch_to_square(const RgbImage& image, int size);

using AttributeSeries = std::map<Attribute, std::vector<cansig::SignalSample>>;

struct ChunkBuild {
  std::optional<VideoChunk> chunk;
  std::optional<LabelTrack> labels;
  std::string rejection;  ///< empty on success

  [[nodiscard]] bool ok() const { return chunk.has_value(); }
};

/// Samples frames nearest to every grid instant, stretches them to
/// `frame_size` squares and resamples every attribute onto the grid. A series
/// with consecutive samples more than `max_gap_s` apart inside the grid span is
/// rejected rather than interpolated across.
ChunkBuild build_chunk(const sync::LabelGrid& grid, FrameSource& frames,
                       const AttributeSeries& series, const std::string& chunk_id,
                       int frame_size = kFrameSize, double max_gap_s = 1.0);

// ---------------------------------------------------------------------------
// Files

/// Packed frames: magic "DKCH", u32 version, u32 n, c, h, w, then raw bytes.
void write_chunk_file(const VideoChunk& chunk, const std::filesystem::path& path);
VideoChunk read_chunk_file(const std::filesystem::path& path, std::string chunk_id = {});

std::string label_track_to_json(const LabelTrack& track);
LabelTrack label_track_from_json(const std::string& text);
void write_label_file(const LabelTrack& track, const std::filesystem::path& path);
LabelTrack read_label_file(const std::filesystem::path& path);

/// On-disk layout of a materialized dataset.
class DatasetLayout {
 public:
  explicit DatasetLayout(std::filesystem::path root) : root_(std::move(root)) {}

  [[nodiscard]] const std::filesystem::path& root() const { return root_; }
  [[nodiscard]] std::filesystem::path chunk_path(const std::string& id) const;
  [[nodiscard]] std::filesystem::path label_path(const std::string& id) const;
  /// `variant` empty for the original frames, e.g. "flip" for augmented copies.
  [[nodiscard]] std::filesystem::path latent_path(const std::string& id,
                                                  const std::string& variant = {}) const;
  [[nodiscard]] std::filesystem::path index_path() const { return root_ / "index.json"; }
  [[nodiscard]] std::filesystem::path split_path() const { return root_ / "split.json"; }

  void create_directories() const;

  void write_index(std::span<const ChunkInfo> chunks) const;
  [[nodiscard]] std::vector<ChunkInfo> read_index() const;
  void write_split(const DatasetSplit& split) const;
  [[nodiscard]] DatasetSplit read_split() const;

  /// Loads every indexed chunk and label file and checks their invariants.
  /// Returns one message per rejected chunk; empty when the dataset is clean.
  [[nodiscard]] std::vector<std::string> validate() const;

 private:
  std::filesystem::path root_;
};

}  // namespace dashkin::data
