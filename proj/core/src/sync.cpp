#include "dashkin/sync.hpp"

#include "dashkin/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dashkin::sync {

namespace {

constexpr double kTimeEps = 1e-9;

std::string fmt_time(double t) {
  std::ostringstream os;
  os.precision(3);
  os << std::fixed << t;
  return os.str();
}

}  // namespace

std::vector<TimeInterval> intersect(std::span<const TimeInterval> a,
                                    std::span<const TimeInterval> b) {
  std::vector<TimeInterval> out;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    const double lo = std::max(a[i].start, b[j].start);
    const double hi = std::min(a[i].end, b[j].end);
    if (hi > lo) {
      out.push_back({lo, hi});
    }
    if (a[i].end < b[j].end) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

std::vector<TimeInterval> usable_blocks(std::span<const TimeInterval> video_intervals,
                                        std::span<const TimeInterval> can_intervals,
                                        double min_duration) {
  auto pieces = intersect(video_intervals, can_intervals);
  std::erase_if(pieces, [&](const TimeInterval& iv) {
    return iv.duration() + kTimeEps < min_duration;
  });
  return pieces;
}

std::vector<LabelGrid> chunk_block(const TimeInterval& block, double chunk_seconds, double fps) {
  if (!(chunk_seconds > 0.0) || !(fps > 0.0)) {
    throw ConfigError("chunk_block: chunk_seconds and fps must be positive");
  }
  const auto n = static_cast<std::size_t>(std::llround(chunk_seconds * fps));
  if (n < 2) {
    throw ConfigError("chunk_block: a chunk needs at least two grid samples");
  }
  std::vector<LabelGrid> grids;
  if (block.end <= block.start) {
    return grids;
  }
  const auto count =
      static_cast<std::size_t>(std::floor((block.end - block.start) / chunk_seconds + kTimeEps));
  grids.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    grids.push_back({block.start + static_cast<double>(k) * chunk_seconds, fps, n});
  }
  return grids;
}

std::vector<double> resample_linear(std::span<const double> times, std::span<const double> values,
                                    const LabelGrid& grid) {
  if (times.size() != values.size()) {
    throw DimensionError("resample_linear: times and values differ in length");
  }
  if (times.size() < 2) {
    throw CoverageError("resample_linear: at least two samples are required");
  }
  const double first = grid.time_at(0);
  const double last = grid.last_time();
  if (first < times.front() - kTimeEps) {
    throw CoverageError("resample_linear: no samples in [" + fmt_time(first) + ", " +
                        fmt_time(times.front()) + ")");
  }
  if (last > times.back() + kTimeEps) {
    throw CoverageError("resample_linear: no samples in (" + fmt_time(times.back()) + ", " +
                        fmt_time(last) + "]");
  }
  std::vector<double> out(grid.n);
  for (std::size_t k = 0; k < grid.n; ++k) {
    const double t = std::clamp(grid.time_at(k), times.front(), times.back());
    auto hi = std::upper_bound(times.begin(), times.end(), t);
    if (hi == times.begin()) {
      out[k] = values.front();
      continue;
    }
    auto lo = std::prev(hi);
    const auto li = static_cast<std::size_t>(lo - times.begin());
    if (*lo == t || hi == times.end()) {
      out[k] = values[li];
      continue;
    }
    const auto hi_i = li + 1;
    const double span = times[hi_i] - times[li];
    const double w = (t - times[li]) / span;
    out[k] = values[li] + w * (values[hi_i] - values[li]);
  }
  return out;
}

std::vector<double> resample_linear(std::span<const cansig::SignalSample> samples,
                                    const LabelGrid& grid) {
  std::vector<double> times;
  std::vector<double> values;
  times.reserve(samples.size());
  values.reserve(samples.size());
  for (const auto& s : samples) {
    times.push_back(s.time);
    values.push_back(s.value);
  }
  return resample_linear(times, values, grid);
}

std::vector<TimeInterval> coverage_intervals(std::span<const cansig::SignalSample> samples,
                                             double max_gap) {
  std::vector<TimeInterval> out;
  if (samples.empty()) {
    return out;
  }
  double start = samples.front().time;
  double prev = start;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double t = samples[i].time;
    if (t - prev > max_gap) {
      if (prev > start) {
        out.push_back({start, prev});
      }
      start = t;
    }
    prev = t;
  }
  if (prev > start) {
    out.push_back({start, prev});
  }
  return out;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open manifest " + path.string());
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) {
    throw FormatError("manifest must be a JSON array");
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_relative() ? base / fp : fp;
  };
  std::vector<ManifestEntry> entries;
  for (const auto& item : doc) {
    try {
      ManifestEntry e;
      e.video_path = resolve(item.at("video_path").get<std::string>());
      e.video_start_time_s = item.at("video_start_time_s").get<double>();
      e.video_fps = item.at("video_fps").get<double>();
      e.can_csv_path = resolve(item.at("can_csv_path").get<std::string>());
      if (item.contains("drive_id")) {
        e.drive_id = item.at("drive_id").get<std::string>();
      }
      if (!(e.video_fps > 0.0)) {
        throw FormatError("manifest entry has non-positive video_fps");
      }
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(std::string("malformed manifest entry: ") + ex.what());
    }
  }
  return entries;
}

}  // namespace dashkin::sync
