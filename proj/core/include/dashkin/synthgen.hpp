#pragma once

// Synthetic driving chunks with exactly known labels. Speed is visible only
// as the scroll rate of a ground grating, yaw as a shear of vertical stripes
// and the lead as a dark box whose width is inversely proportional to distance.

#include "dashkin/datastore.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace dashkin::synth {

struct SceneParams {
  std::string chunk_id = "synthetic";
  /// Per-frame profiles on the label grid.
  std::vector<double> speed;           ///< km/h
  std::vector<double> yaw;             ///< deg/s
  std::vector<double> lead_present;    ///< 0 or 1
  std::vector<double> lead_distance;   ///< m; ignored where lead_present is 0
  std::vector<double> lead_rel_speed;  ///< km/h; ignored where lead_present is 0
  int frame_size = 64;
  double fps = 5.0;
  double noise = 0.02;  ///< pixel noise standard deviation on a [0, 1] scale
  double phase = 0.0;   ///< initial grating offset in pixels
  double stripe_amplitude = 0.1;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t frames() const { return speed.size(); }
  /// Throws GenerationError on ragged or non-finite profiles, or a present lead without a
  /// positive finite distance.
  void validate() const;
};

struct Rendered {
  data::VideoChunk chunk;
  data::LabelTrack labels;
};

Rendered render(const SceneParams& params);

/// Grating scroll per frame in pixels for a speed in km/h.
double scroll_pixels(double speed_kmh, int frame_size);

struct CorpusOptions {
  std::size_t n_chunks = 200;
  /// 0 gives clean frames; 1 raises noise fivefold and plants more events.
  double difficulty = 0.0;
  std::uint64_t seed = 0;
  int frames = 20;
  int frame_size = 64;
  double fps = 5.0;
  /// Only speed varies; yaw is zero, stripes are off and no lead appears.
  bool speed_only = false;
  std::size_t chunks_per_drive = 8;
  double val_fraction = 2.5 / 18.0;
  /// Stand-in latents (original and ".flip") are written when positive.
  int latent_dim = 32;
  std::uint64_t latent_seed = 7;

  static CorpusOptions desk();
  static CorpusOptions full();
};

/// Random scene for chunk `index`; deterministic in (options.seed, index).
SceneParams random_scene(const CorpusOptions& options, std::size_t index);

struct CorpusSummary {
  std::vector<data::ChunkInfo> chunks;
  data::DatasetSplit split;
};

/// Writes chunks, labels, index, split and optional latents under `root`.
CorpusSummary make_corpus(const CorpusOptions& options, const std::filesystem::path& root);

}  // namespace dashkin::synth
