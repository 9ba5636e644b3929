#include "dashkin/datastore.hpp"

#include "dashkin/error.hpp"
#include "dashkin/plot.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace dashkin::data {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::array<std::string_view, 5> kAttributeNames = {
    "speed", "yaw", "lead_present", "lead_distance", "lead_rel_speed"};

constexpr std::array<char, 4> kChunkMagic = {'D', 'K', 'C', 'H'};
constexpr std::uint32_t kChunkVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                                 static_cast<char>((v >> 16) & 0xFF),
                                 static_cast<char>((v >> 24) & 0xFF)};
  out.write(b.data(), 4);
}

std::uint32_t read_u32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw FormatError("truncated header in " + path.string());
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << text;
}

}  // namespace

std::string_view to_string(Attribute a) { return kAttributeNames[static_cast<std::size_t>(a)]; }

Attribute attribute_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kAttributeNames.size(); ++i) {
    if (kAttributeNames[i] == name) {
      return static_cast<Attribute>(i);
    }
  }
  throw ConfigError("unknown attribute '" + std::string(name) + "'");
}

std::vector<double>& LabelTrack::values(Attribute a) {
  switch (a) {
    case Attribute::speed: return speed;
    case Attribute::yaw: return yaw;
    case Attribute::lead_present: return lead_present;
    case Attribute::lead_distance: return lead_distance;
    case Attribute::lead_rel_speed: return lead_rel_speed;
  }
  throw ConfigError("invalid attribute");
}

const std::vector<double>& LabelTrack::values(Attribute a) const {
  return const_cast<LabelTrack*>(this)->values(a);
}

void LabelTrack::validate() const {
  const std::size_t n = speed.size();
  if (n < 2) {
    throw FormatError("label track '" + chunk_id + "' has fewer than two frames");
  }
  for (auto a : kAllAttributes) {
    const auto& v = values(a);
    if (v.size() != n) {
      throw FormatError("label track '" + chunk_id + "': " + std::string(to_string(a)) +
                        " has " + std::to_string(v.size()) + " values, expected " +
                        std::to_string(n));
    }
    for (double x : v) {
      if (!std::isfinite(x)) {
        throw FormatError("label track '" + chunk_id + "': non-finite " +
                          std::string(to_string(a)));
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (lead_present[i] < 0.0 || lead_present[i] > 1.0) {
      throw FormatError("label track '" + chunk_id + "': lead_present outside [0, 1]");
    }
    if (lead_present[i] == 0.0 &&
        (lead_distance[i] != kLeadDistanceSentinel || lead_rel_speed[i] != kLeadRelSpeedDefault)) {
      throw FormatError("label track '" + chunk_id + "': frame " + std::to_string(i) +
                        " has no lead but non-sentinel distance/relative speed");
    }
  }
}

std::size_t apply_sentinels(LabelTrack& track) {
  std::size_t fixed = 0;
  for (std::size_t i = 0; i < track.lead_present.size(); ++i) {
    if (track.lead_present[i] != 0.0) {
      continue;
    }
    if (track.lead_distance[i] != kLeadDistanceSentinel ||
        track.lead_rel_speed[i] != kLeadRelSpeedDefault) {
      ++fixed;
    }
    track.lead_distance[i] = kLeadDistanceSentinel;
    track.lead_rel_speed[i] = kLeadRelSpeedDefault;
  }
  return fixed;
}

VideoChunk VideoChunk::zeros(std::string id, std::uint32_t frames, std::uint32_t height,
                             std::uint32_t width) {
  VideoChunk c;
  c.chunk_id = std::move(id);
  c.frames = frames;
  c.height = height;
  c.width = width;
  c.data.assign(c.frame_bytes() * frames, 0);
  return c;
}

void VideoChunk::validate() const {
  if (channels != 3) {
    throw FormatError("chunk '" + chunk_id + "': expected 3 channels, got " +
                      std::to_string(channels));
  }
  if (height != width || height == 0) {
    throw FormatError("chunk '" + chunk_id + "': frames must be non-empty squares");
  }
  if (data.size() != frame_bytes() * frames) {
    throw FormatError("chunk '" + chunk_id + "': byte count does not match dimensions");
  }
}

const std::vector<double>& TrainingLabels::target(Attribute a) const {
  if (!is_valid(a)) {
    throw InvalidTargetError("attribute '" + std::string(to_string(a)) + "' of chunk '" +
                             track.chunk_id + "' was invalidated by augmentation");
  }
  return track.values(a);
}

VideoChunk flip_frames(const VideoChunk& chunk) {
  VideoChunk out = chunk;
  const std::size_t w = chunk.width;
  for (std::size_t f = 0; f < chunk.frames; ++f) {
    for (std::size_t c = 0; c < chunk.channels; ++c) {
      for (std::size_t y = 0; y < chunk.height; ++y) {
        const auto row = chunk.index(f, c, y, 0);
        std::reverse_copy(chunk.data.begin() + static_cast<std::ptrdiff_t>(row),
                          chunk.data.begin() + static_cast<std::ptrdiff_t>(row + w),
                          out.data.begin() + static_cast<std::ptrdiff_t>(row));
      }
    }
  }
  return out;
}

LabelTrack flip_labels(const LabelTrack& labels) {
  LabelTrack out = labels;
  for (double& v : out.yaw) {
    v = -v;
  }
  return out;
}

std::pair<VideoChunk, LabelTrack> flip_horizontal(const VideoChunk& chunk,
                                                  const LabelTrack& labels) {
  return {flip_frames(chunk), flip_labels(labels)};
}

VideoChunk reverse_frames(const VideoChunk& chunk) {
  VideoChunk out = chunk;
  const std::size_t fb = chunk.frame_bytes();
  for (std::size_t f = 0; f < chunk.frames; ++f) {
    const std::size_t src = chunk.frames - 1 - f;
    std::copy_n(chunk.data.begin() + static_cast<std::ptrdiff_t>(src * fb), fb,
                out.data.begin() + static_cast<std::ptrdiff_t>(f * fb));
  }
  return out;
}

TrainingLabels reverse_labels(const LabelTrack& labels) {
  TrainingLabels out;
  out.track = labels;
  out.valid = {false, false, false, false, false};
  for (auto a : kReversalPreserved) {
    auto& v = out.track.values(a);
    std::reverse(v.begin(), v.end());
    out.valid[static_cast<std::size_t>(a)] = true;
  }
  return out;
}

std::pair<VideoChunk, TrainingLabels> reverse_time(const VideoChunk& chunk,
                                                   const LabelTrack& labels) {
  return {reverse_frames(chunk), reverse_labels(labels)};
}

std::vector<bool> mask_lead_absent(const LabelTrack& labels, double threshold) {
  std::vector<bool> mask(labels.lead_present.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = labels.lead_present[i] >= threshold;
  }
  return mask;
}

std::string_view to_string(RelSpeedClass c) {
  switch (c) {
    case RelSpeedClass::receding: return "receding";
    case RelSpeedClass::steady: return "steady";
    case RelSpeedClass::approaching: return "approaching";
  }
  return "unknown";
}

std::vector<RelSpeedClass> rel_speed_to_classes(std::span<const double> lead_rel_speed,
                                                double dead_band) {
  if (dead_band < 0.0) {
    throw DomainError("rel_speed_to_classes: dead_band must be non-negative");
  }
  std::vector<RelSpeedClass> out;
  out.reserve(lead_rel_speed.size());
  for (double v : lead_rel_speed) {
    if (v > dead_band) {
      out.push_back(RelSpeedClass::receding);
    } else if (v < -dead_band) {
      out.push_back(RelSpeedClass::approaching);
    } else {
      out.push_back(RelSpeedClass::steady);
    }
  }
  return out;
}

std::size_t Histogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

Histogram histogram(std::span<const double> values, std::span<const double> bin_edges) {
  if (bin_edges.size() < 2) {
    throw ConfigError("histogram needs at least two bin edges");
  }
  for (std::size_t i = 1; i < bin_edges.size(); ++i) {
    if (!(bin_edges[i] > bin_edges[i - 1])) {
      throw ConfigError("histogram bin edges must be strictly increasing");
    }
  }
  Histogram h;
  h.edges.assign(bin_edges.begin(), bin_edges.end());
  h.counts.assign(bin_edges.size() - 1, 0);
  for (double v : values) {
    if (!std::isfinite(v)) {
      continue;
    }
    auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), v);
    std::ptrdiff_t bin = (it - bin_edges.begin()) - 1;
    bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(h.counts.size()) - 1);
    ++h.counts[static_cast<std::size_t>(bin)];
  }
  return h;
}

std::vector<double> uniform_edges(double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) {
    throw ConfigError("uniform_edges: need hi > lo and at least one bin");
  }
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }
  return edges;
}

double js_divergence(const Histogram& a, const Histogram& b) {
  if (a.counts.size() != b.counts.size()) {
    throw DimensionError("js_divergence: histograms have different bin counts");
  }
  const double ta = static_cast<double>(a.total());
  const double tb = static_cast<double>(b.total());
  if (ta == 0 || tb == 0) {
    throw DomainError("js_divergence: empty histogram");
  }
  double js = 0.0;
  for (std::size_t i = 0; i < a.counts.size(); ++i) {
    const double p = static_cast<double>(a.counts[i]) / ta;
    const double q = static_cast<double>(b.counts[i]) / tb;
    const double m = 0.5 * (p + q);
    if (p > 0) {
      js += 0.5 * p * std::log2(p / m);
    }
    if (q > 0) {
      js += 0.5 * q * std::log2(q / m);
    }
  }
  return js;
}

void write_histogram(const Histogram& h, const std::filesystem::path& dir, const std::string& name,
                     const std::string& x_label) {
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  csv << "bin_lo,bin_hi,count,log10_count\n";
  csv.precision(10);
  std::vector<double> counts;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const auto c = static_cast<double>(h.counts[i]);
    counts.push_back(c);
    csv << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i] << ','
        << (c > 0 ? std::log10(c) : 0.0) << '\n';
  }
  write_text(dir / (name + ".csv"), csv.str());
  plot::write_bar_chart(dir / (name + "_linear.svg"), {name, x_label, "frequency", false}, h.edges,
                        counts);
  plot::write_bar_chart(dir / (name + "_log.svg"), {name, x_label, "frequency", true}, h.edges,
                        counts);
}

DatasetSplit split_dataset(std::span<const ChunkInfo> chunks, double val_fraction,
                           std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("split_dataset: val_fraction must be in (0, 1)");
  }
  std::vector<std::string> drives;
  std::map<std::string, double> duration;
  for (const auto& c : chunks) {
    if (!duration.contains(c.drive_id)) {
      drives.push_back(c.drive_id);
    }
    duration[c.drive_id] += c.duration_s;
  }
  if (drives.size() < 2) {
    throw ConfigError("split_dataset: corpus has a single drive; supply a manual split");
  }
  const double total = std::accumulate(duration.begin(), duration.end(), 0.0,
                                       [](double acc, const auto& kv) { return acc + kv.second; });
  const double target = val_fraction * total;

  std::mt19937_64 rng(seed);
  std::set<std::string> best;
  double best_err = std::numeric_limits<double>::infinity();
  constexpr int kAttempts = 64;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    std::vector<std::string> order = drives;
    std::shuffle(order.begin(), order.end(), rng);
    std::set<std::string> val;
    double val_total = 0.0;
    for (const auto& d : order) {
      if (val_total + duration[d] <= target + 1e-9) {
        val.insert(d);
        val_total += duration[d];
      }
    }
    if (val.empty()) {
      // Every drive exceeds the target: take the one closest to it.
      const auto closest = std::min_element(order.begin(), order.end(), [&](const auto& a,
                                                                            const auto& b) {
        return std::abs(duration[a] - target) < std::abs(duration[b] - target);
      });
      val.insert(*closest);
      val_total = duration[*closest];
    }
    if (val.size() == drives.size()) {
      continue;
    }
    const double err = std::abs(val_total - target);
    if (err < best_err) {
      best_err = err;
      best = std::move(val);
    }
  }
  DatasetSplit split;
  for (const auto& c : chunks) {
    (best.contains(c.drive_id) ? split.val_ids : split.train_ids).push_back(c.chunk_id);
  }
  return split;
}

std::size_t nearest_frame_index(double start_time, double fps, std::size_t count, double t) {
  if (count == 0) {
    throw CoverageError("frame source is empty");
  }
  const double x = (t - start_time) * fps;
  if (x <= 0) {
    return 0;
  }
  const double lo = std::floor(x);
  const double hi = lo + 1.0;
  const double pick = (x - lo) <= (hi - x) ? lo : hi;
  return std::min(static_cast<std::size_t>(pick), count - 1);
}

std::vector<std::uint8_t> stretch_to_square(const RgbImage& image, int size) {
  if (image.height <= 0 || image.width <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.height) * image.width * 3) {
    throw DimensionError("stretch_to_square: malformed RGB image");
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(3) * size * size);
  const double sy = static_cast<double>(image.height) / size;
  const double sx = static_cast<double>(image.width) / size;
  for (int y = 0; y < size; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < size; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        auto px = [&](int yy, int xx) {
          return static_cast<double>(
              image.pixels[(static_cast<std::size_t>(yy) * image.width + xx) * 3 + c]);
        };
        const double top = px(y0, x0) * (1 - wx) + px(y0, x1) * wx;
        const double bottom = px(y1, x0) * (1 - wx) + px(y1, x1) * wx;
        const double v = top * (1 - wy) + bottom * wy;
        out[(static_cast<std::size_t>(c) * size + y) * size + x] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

ChunkBuild build_chunk(const sync::LabelGrid& grid, FrameSource& frames,
                       const AttributeSeries& series, const std::string& chunk_id,
                       int frame_size, double max_gap_s) {
  ChunkBuild result;
  if (frames.fps() < grid.fps) {
    result.rejection = "video frame rate " + std::to_string(frames.fps()) +
                       " is below the label rate " + std::to_string(grid.fps);
    return result;
  }
  const auto cover = frames.coverage();
  if (grid.time_at(0) < cover.start - 1e-9 || grid.last_time() > cover.end + 1e-9) {
    result.rejection = "video does not cover the chunk grid";
    return result;
  }
  LabelTrack labels;
  labels.chunk_id = chunk_id;
  labels.fps = grid.fps;
  for (auto a : kAllAttributes) {
    auto it = series.find(a);
    if (it == series.end() || it->second.empty()) {
      result.rejection = "attribute '" + std::string(to_string(a)) + "' has no samples";
      return result;
    }
    const auto& samples = it->second;
    for (std::size_t i = 1; i < samples.size(); ++i) {
      const double gap = samples[i].time - samples[i - 1].time;
      if (gap > max_gap_s && samples[i].time > grid.time_at(0) &&
          samples[i - 1].time < grid.last_time()) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "' has a %.3f s gap at t = %.3f", gap, samples[i - 1].time);
        result.rejection = "attribute '" + std::string(to_string(a)) + buf;
        return result;
      }
    }
    try {
      labels.values(a) = sync::resample_linear(it->second, grid);
    } catch (const CoverageError& e) {
      result.rejection = "attribute '" + std::string(to_string(a)) + "': " + e.what();
      return result;
    }
  }
  apply_sentinels(labels);

  VideoChunk chunk = VideoChunk::zeros(chunk_id, static_cast<std::uint32_t>(grid.n),
                                       static_cast<std::uint32_t>(frame_size),
                                       static_cast<std::uint32_t>(frame_size));
  chunk.t0 = grid.t0;
  for (std::size_t k = 0; k < grid.n; ++k) {
    const auto idx =
        nearest_frame_index(frames.start_time(), frames.fps(), frames.frame_count(), grid.time_at(k));
    const auto planar = stretch_to_square(frames.frame(idx), frame_size);
    std::copy(planar.begin(), planar.end(),
              chunk.data.begin() + static_cast<std::ptrdiff_t>(k * chunk.frame_bytes()));
  }
  result.chunk = std::move(chunk);
  result.labels = std::move(labels);
  return result;
}

void write_chunk_file(const VideoChunk& chunk, const std::filesystem::path& path) {
  chunk.validate();
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write chunk file " + path.string());
  }
  out.write(kChunkMagic.data(), kChunkMagic.size());
  write_u32(out, kChunkVersion);
  write_u32(out, chunk.frames);
  write_u32(out, chunk.channels);
  write_u32(out, chunk.height);
  write_u32(out, chunk.width);
  out.write(reinterpret_cast<const char*>(chunk.data.data()),
            static_cast<std::streamsize>(chunk.data.size()));
  if (!out) {
    throw IoError("short write to " + path.string());
  }
}

VideoChunk read_chunk_file(const std::filesystem::path& path, std::string chunk_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open chunk file " + path.string());
  }
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kChunkMagic) {
    throw FormatError(path.string() + " is not a packed chunk file (bad magic)");
  }
  const auto version = read_u32(in, path);
  if (version != kChunkVersion) {
    throw FormatError(path.string() + ": unsupported chunk version " + std::to_string(version));
  }
  VideoChunk chunk;
  chunk.chunk_id = chunk_id.empty() ? path.stem().string() : std::move(chunk_id);
  chunk.frames = read_u32(in, path);
  chunk.channels = read_u32(in, path);
  chunk.height = read_u32(in, path);
  chunk.width = read_u32(in, path);
  chunk.data.resize(chunk.frame_bytes() * chunk.frames);
  if (!in.read(reinterpret_cast<char*>(chunk.data.data()),
               static_cast<std::streamsize>(chunk.data.size()))) {
    throw FormatError(path.string() + ": truncated frame data");
  }
  chunk.validate();
  return chunk;
}

std::string label_track_to_json(const LabelTrack& track) {
  ordered_json doc;
  doc["chunk_id"] = track.chunk_id;
  if (track.fps == std::floor(track.fps)) {
    doc["fps"] = static_cast<std::int64_t>(track.fps);
  } else {
    doc["fps"] = track.fps;
  }
  doc["n"] = track.size();
  for (auto a : kAllAttributes) {
    doc[std::string(to_string(a))] = track.values(a);
  }
  return doc.dump();
}

LabelTrack label_track_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    LabelTrack t;
    t.chunk_id = doc.at("chunk_id").get<std::string>();
    t.fps = doc.at("fps").get<double>();
    const auto n = doc.at("n").get<std::size_t>();
    for (auto a : kAllAttributes) {
      t.values(a) = doc.at(std::string(to_string(a))).get<std::vector<double>>();
      if (t.values(a).size() != n) {
        throw FormatError("label JSON '" + t.chunk_id + "': " + std::string(to_string(a)) +
                          " length differs from n");
      }
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed label JSON: ") + e.what());
  }
}

void write_label_file(const LabelTrack& track, const std::filesystem::path& path) {
  write_text(path, label_track_to_json(track) + "\n");
}

LabelTrack read_label_file(const std::filesystem::path& path) {
  return label_track_from_json(read_text(path));
}

std::filesystem::path DatasetLayout::chunk_path(const std::string& id) const {
  return root_ / "chunks" / (id + ".dkch");
}

std::filesystem::path DatasetLayout::label_path(const std::string& id) const {
  return root_ / "labels" / (id + ".json");
}

std::filesystem::path DatasetLayout::latent_path(const std::string& id,
                                                 const std::string& variant) const {
  return root_ / "latents" / (variant.empty() ? id + ".dklt" : id + "." + variant + ".dklt");
}

void DatasetLayout::create_directories() const {
  std::filesystem::create_directories(root_ / "chunks");
  std::filesystem::create_directories(root_ / "labels");
  std::filesystem::create_directories(root_ / "latents");
}

void DatasetLayout::write_index(std::span<const ChunkInfo> chunks) const {
  ordered_json doc;
  doc["chunks"] = ordered_json::array();
  for (const auto& c : chunks) {
    doc["chunks"].push_back(
        {{"chunk_id", c.chunk_id}, {"drive_id", c.drive_id}, {"t0", c.t0}, {"duration_s", c.duration_s}});
  }
  write_text(index_path(), doc.dump(2) + "\n");
}

std::vector<ChunkInfo> DatasetLayout::read_index() const {
  try {
    const auto doc = nlohmann::json::parse(read_text(index_path()));
    std::vector<ChunkInfo> out;
    for (const auto& item : doc.at("chunks")) {
      out.push_back({item.at("chunk_id").get<std::string>(), item.at("drive_id").get<std::string>(),
                     item.at("t0").get<double>(), item.at("duration_s").get<double>()});
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed dataset index " + index_path().string() + ": " + e.what());
  }
}

void DatasetLayout::write_split(const DatasetSplit& split) const {
  ordered_json doc;
  doc["train"] = split.train_ids;
  doc["val"] = split.val_ids;
  write_text(split_path(), doc.dump(2) + "\n");
}

DatasetSplit DatasetLayout::read_split() const {
  try {
    const auto doc = nlohmann::json::parse(read_text(split_path()));
    return {doc.at("train").get<std::vector<std::string>>(),
            doc.at("val").get<std::vector<std::string>>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed split file " + split_path().string() + ": " + e.what());
  }
}

std::vector<std::string> DatasetLayout::validate() const {
  std::vector<std::string> problems;
  for (const auto& info : read_index()) {
    try {
      const auto chunk = read_chunk_file(chunk_path(info.chunk_id), info.chunk_id);
      const auto labels = read_label_file(label_path(info.chunk_id));
      labels.validate();
      if (labels.chunk_id != info.chunk_id) {
        throw FormatError("label chunk_id '" + labels.chunk_id + "' differs from index");
      }
      if (labels.size() != chunk.frames) {
        throw FormatError("frame count " + std::to_string(chunk.frames) +
                          " differs from label count " + std::to_string(labels.size()));
      }
    } catch (const Error& e) {
      problems.push_back(info.chunk_id + ": " + e.what());
    }
  }
  return problems;
}

}  // namespace dashkin::data
