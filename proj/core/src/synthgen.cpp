#include "dashkin/synthgen.hpp"

#include "dashkin/error.hpp"
#include "dashkin/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace dashkin::synth {

namespace {

constexpr double kSky = 0.7;
constexpr double kLeadShade = 0.1;

// Reference geometry at 64 pixels; everything scales with frame size.
constexpr double kReferenceSize = 64.0;
constexpr double kGratingPeriod = 32.0;
constexpr double kScrollPerKmh = 0.1;

std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void SceneParams::validate() const {
  const std::size_t n = speed.size();
  if (n < 2) {
    throw GenerationError("scene '" + chunk_id + "' needs at least two frames");
  }
  if (yaw.size() != n || lead_present.size() != n || lead_distance.size() != n ||
      lead_rel_speed.size() != n) {
    throw GenerationError("scene '" + chunk_id + "' has profiles of different lengths");
  }
  if (frame_size < 8 || !(fps > 0.0) || noise < 0.0) {
    throw GenerationError("scene '" + chunk_id + "' has invalid frame size, fps or noise");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(speed[i]) || !std::isfinite(yaw[i]) ||
        !(lead_present[i] == 0.0 || lead_present[i] == 1.0)) {
      throw GenerationError("scene '" + chunk_id + "' frame " + std::to_string(i) +
                            " has a non-finite profile or non-binary lead flag");
    }
    if (lead_present[i] == 1.0 &&
        (!std::isfinite(lead_distance[i]) || lead_distance[i] <= 0.0 ||
         !std::isfinite(lead_rel_speed[i]))) {
      throw GenerationError("scene '" + chunk_id + "' frame " + std::to_string(i) +
                            " has a lead without a positive distance and finite relative speed");
    }
  }
}

double scroll_pixels(double speed_kmh, int frame_size) {
  return speed_kmh * kScrollPerKmh * frame_size / kReferenceSize;
}

Rendered render(const SceneParams& p) {
  p.validate();
  const int size = p.frame_size;
  const auto n = static_cast<std::uint32_t>(p.frames());
  const double scale = size / kReferenceSize;
  const double period = kGratingPeriod * scale;
  const int horizon = size / 2;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  Rendered out;
  out.chunk = data::VideoChunk::zeros(p.chunk_id, n, static_cast<std::uint32_t>(size),
                                      static_cast<std::uint32_t>(size));
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> noise(0.0, p.noise > 0.0 ? p.noise : 1.0);

  std::vector<double> img(static_cast<std::size_t>(size) * size);
  double offset = p.phase;
  for (std::uint32_t f = 0; f < n; ++f) {
    const double shear = p.yaw[f] * 0.02;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double v = kSky;
        if (y >= horizon) {
          v = 0.5 + 0.25 * std::sin(kTwoPi * (y + offset) / period);
          if (p.stripe_amplitude != 0.0) {
            v += p.stripe_amplitude * std::sin(kTwoPi * (x + shear * (y - horizon)) / period);
          }
        }
        img[static_cast<std::size_t>(y) * size + x] = v;
      }
    }
    if (p.lead_present[f] == 1.0) {
      const double width = std::min(size * 4.0 / p.lead_distance[f], size * 0.75);
      const int w = std::max(1, static_cast<int>(std::lround(width)));
      const int h = std::max(1, static_cast<int>(std::lround(width * 0.6)));
      const int x0 = (size - w) / 2;
      for (int y = std::max(0, horizon - h); y < horizon; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
          img[static_cast<std::size_t>(y) * size + x] = kLeadShade;
        }
      }
    }
    for (std::size_t i = 0; i < img.size(); ++i) {
      double v = img[i];
      if (p.noise > 0.0) {
        v += noise(rng);
      }
      const auto byte = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      for (std::size_t c = 0; c < 3; ++c) {
        out.chunk.data[(f * 3 + c) * img.size() + i] = byte;
      }
    }
    offset += scroll_pixels(p.speed[f], size);
  }

  auto& labels = out.labels;
  labels.chunk_id = p.chunk_id;
  labels.fps = p.fps;
  labels.speed = p.speed;
  labels.yaw = p.yaw;
  labels.lead_present = p.lead_present;
  labels.lead_distance.resize(n);
  labels.lead_rel_speed.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool present = p.lead_present[i] == 1.0;
    labels.lead_distance[i] = present ? p.lead_distance[i] : data::kLeadDistanceSentinel;
    labels.lead_rel_speed[i] = present ? p.lead_rel_speed[i] : data::kLeadRelSpeedDefault;
  }
  return out;
}

CorpusOptions CorpusOptions::desk() { return {}; }

CorpusOptions CorpusOptions::full() {
  CorpusOptions o;
  o.frames = 200;
  o.frame_size = 256;
  o.latent_dim = 512;
  return o;
}

SceneParams random_scene(const CorpusOptions& options, std::size_t index) {
  std::mt19937_64 rng(mix(options.seed, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const auto n = static_cast<std::size_t>(options.frames);
  const double fps = options.fps;
  const double duration = static_cast<double>(n) / fps;
  SceneParams p;
  p.frame_size = options.frame_size;
  p.fps = fps;
  p.noise = 0.02 * (1.0 + 4.0 * options.difficulty);
  p.speed.resize(n);
  p.yaw.assign(n, 0.0);
  p.lead_present.assign(n, 0.0);
  p.lead_distance.assign(n, data::kLeadDistanceSentinel);
  p.lead_rel_speed.assign(n, data::kLeadRelSpeedDefault);

  const double base = uniform(0.0, 120.0);
  const double slope = uniform(-3.0, 3.0);
  for (std::size_t i = 0; i < n; ++i) {
    p.speed[i] = std::clamp(base + slope * static_cast<double>(i) / fps, 0.0, 130.0);
  }
  p.phase = uniform(0.0, kGratingPeriod * options.frame_size / kReferenceSize);

  if (options.speed_only) {
    p.stripe_amplitude = 0.0;
  } else {
    const double turn_probability = 0.3 + 0.4 * options.difficulty;
    if (unit(rng) < turn_probability) {
      const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
      const double magnitude = uniform(8.0, 20.0);
      const double length = std::min(uniform(1.0, 3.0), duration * 0.5);
      const double start = uniform(0.0, duration - length);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fps;
        if (t >= start && t < start + length) {
          p.yaw[i] = sign * magnitude;
        }
      }
    }
    if (unit(rng) < 0.5) {
      const double start = unit(rng) < 0.5 ? 0.0 : uniform(0.0, duration * 0.5);
      const double end = unit(rng) < 0.5 ? duration : uniform(start + 1.0, duration + 1.0);
      const double d0 = uniform(15.0, 80.0);
      const double rel = uniform(-15.0, 15.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fps;
        if (t >= start && t < end) {
          p.lead_present[i] = 1.0;
          p.lead_rel_speed[i] = rel;
          p.lead_distance[i] = std::max(3.0, d0 + rel / 3.6 * (t - start));
        }
      }
    }
  }
  return p;
}

CorpusSummary make_corpus(const CorpusOptions& options, const std::filesystem::path& root) {
  if (options.n_chunks < 2) {
    throw GenerationError("a corpus needs at least two chunks");
  }
  if (options.chunks_per_drive == 0) {
    throw GenerationError("chunks_per_drive must be positive");
  }
  const data::DatasetLayout layout(root);
  layout.create_directories();
  std::unique_ptr<models::StandinEncoder> encoder;
  if (options.latent_dim > 0) {
    encoder = std::make_unique<models::StandinEncoder>(options.frame_size, options.latent_dim,
                                                       options.latent_seed);
  }
  // At least two drives so the split can keep whole drives apart.
  const std::size_t per_drive =
      std::min(options.chunks_per_drive, std::max<std::size_t>(1, options.n_chunks / 2));

  CorpusSummary summary;
  for (std::size_t i = 0; i < options.n_chunks; ++i) {
    const std::size_t drive = i / per_drive;
    const std::size_t within = i % per_drive;
    char id[32];
    std::snprintf(id, sizeof(id), "d%03zu_b00_c%03zu", drive, within);
    SceneParams p = random_scene(options, i);
    p.chunk_id = id;
    p.seed = mix(options.seed ^ 0x5bd1e995ULL, i);
    const auto r = render(p);
    data::write_chunk_file(r.chunk, layout.chunk_path(id));
    data::write_label_file(r.labels, layout.label_path(id));
    if (encoder) {
      models::write_latents(encoder->encode(r.chunk), layout.latent_path(id));
      models::write_latents(encoder->encode(data::flip_frames(r.chunk)), layout.latent_path(id, "flip"));
    }
    char drive_id[16];
    std::snprintf(drive_id, sizeof(drive_id), "d%03zu", drive);
    const double duration = static_cast<double>(options.frames) / options.fps;
    summary.chunks.push_back({id, drive_id, static_cast<double>(within) * duration, duration});
  }
  layout.write_index(summary.chunks);
  summary.split = data::split_dataset(summary.chunks, options.val_fraction, options.seed);
  layout.write_split(summary.split);
  return summary;
}

}  // namespace dashkin::synth
