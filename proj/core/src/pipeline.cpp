#include "dashkin/pipeline.hpp"

#include "dashkin/error.hpp"
#include "dashkin/frame_source.hpp"
#include "dashkin/models.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>

namespace dashkin::pipeline {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << text;
}

std::string entry_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "entry_%03zu", index);
  return buf;
}

}  // namespace

EntryDecode decode_entry(const sync::ManifestEntry& entry, std::size_t index,
                         std::span<const cansig::SignalSpec> specs, const IngestOptions& options) {
  EntryDecode out;
  out.entry = index;
  const auto parsed = cansig::parse_can_csv(entry.can_csv_path);
  out.malformed_rows = parsed.malformed_rows;

  bool first = true;
  for (const auto& spec : specs) {
    auto series = cansig::extract_attribute_series(parsed.frames, spec);
    const auto cov = sync::coverage_intervals(series, options.max_gap_s);
    out.can_coverage = first ? cov : sync::intersect(out.can_coverage, cov);
    first = false;
    out.series[spec.name] = std::move(series);
  }

  const auto frames = data::open_frame_source(entry.video_path, entry.video_start_time_s,
                                              entry.video_fps);
  out.video = frames->coverage();
  const std::vector<sync::TimeInterval> video{out.video};
  if (out.video.duration() > 0.0) {
    out.blocks = sync::usable_blocks(video, out.can_coverage, options.chunk_seconds);
  }
  return out;
}

DecodeReport run_decode(const std::filesystem::path& manifest,
                        const std::filesystem::path& specs_path, const std::filesystem::path& out,
                        const IngestOptions& options) {
  const auto entries = sync::load_manifest(manifest);
  const auto specs = cansig::load_signal_specs(specs_path);
  DecodeReport report;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    report.entries.push_back(decode_entry(entries[i], i, specs, options));
    report.usable_blocks += report.entries.back().blocks.size();
  }
  if (report.usable_blocks == 0) {
    report.warnings.emplace_back("no usable blocks: video and CAN coverage never overlap for " +
                                 format_double(options.chunk_seconds) + " s");
    return report;
  }

  std::filesystem::create_directories(out / "series");
  nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
  for (const auto& e : report.entries) {
    nlohmann::ordered_json je;
    je["entry"] = e.entry;
    je["video"] = {e.video.start, e.video.end};
    je["blocks"] = nlohmann::ordered_json::array();
    for (const auto& b : e.blocks) {
      je["blocks"].push_back({b.start, b.end});
    }
    blocks.push_back(je);
    if (e.blocks.empty()) {
      continue;
    }
    const auto dir = out / "series" / entry_dir_name(e.entry);
    std::filesystem::create_directories(dir);
    for (const auto& [name, samples] : e.series) {
      std::string text = "time,value\n";
      for (const auto& s : samples) {
        text += format_double(s.time) + "," + format_double(s.value) + "\n";
      }
      write_text(dir / (name + ".csv"), text);
    }
  }
  write_text(out / "blocks.json", blocks.dump(2) + "\n");
  return report;
}

BuildReport run_build(const std::filesystem::path& manifest,
                      const std::filesystem::path& specs_path, const std::filesystem::path& out,
                      const IngestOptions& options) {
  const auto entries = sync::load_manifest(manifest);
  const auto specs = cansig::load_signal_specs(specs_path);
  const data::DatasetLayout layout(out);
  layout.create_directories();

  BuildReport report;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto decoded = decode_entry(entries[i], i, specs, options);
    data::AttributeSeries series;
    for (const auto& [name, samples] : decoded.series) {
      for (const auto a : data::kAllAttributes) {
        if (data::to_string(a) == name) {
          series[a] = samples;
        }
      }
    }
    if (decoded.blocks.empty()) {
      report.warnings.push_back("manifest entry " + std::to_string(i) + ": no usable blocks");
      continue;
    }
    const std::string drive = entries[i].drive_id.value_or(entry_dir_name(i));
    auto frames = data::open_frame_source(entries[i].video_path, entries[i].video_start_time_s,
                                          entries[i].video_fps);
    for (std::size_t b = 0; b < decoded.blocks.size(); ++b) {
      const auto grids = sync::chunk_block(decoded.blocks[b], options.chunk_seconds, options.fps);
      for (std::size_t k = 0; k < grids.size(); ++k) {
        char id[48];
        std::snprintf(id, sizeof(id), "e%03zu_b%02zu_c%03zu", i, b, k);
        auto built = data::build_chunk(grids[k], *frames, series, id, options.frame_size,
                                         options.max_gap_s);
        if (!built.ok()) {
          report.rejections.push_back({id, built.rejection});
          continue;
        }
        data::write_chunk_file(*built.chunk, layout.chunk_path(id));
        data::write_label_file(*built.labels, layout.label_path(id));
        report.chunks.push_back({id, drive, grids[k].t0, grids[k].duration()});
      }
    }
  }

  layout.write_index(report.chunks);
  nlohmann::ordered_json rej = nlohmann::ordered_json::array();
  for (const auto& r : report.rejections) {
    rej.push_back({{"chunk_id", r.chunk_id}, {"reason", r.reason}});
  }
  write_text(out / "rejections.json", rej.dump(2) + "\n");

  try {
    report.split = data::split_dataset(report.chunks, options.val_fraction, options.seed);
    layout.write_split(*report.split);
  } catch (const ConfigError& e) {
    report.warnings.emplace_back(std::string("no split written: ") + e.what());
  }
  return report;
}

std::size_t write_standin_latents(const std::filesystem::path& dataset_root, int latent_dim,
                                  std::uint64_t seed) {
  const data::DatasetLayout layout(dataset_root);
  std::optional<models::StandinEncoder> encoder;
  std::size_t n = 0;
  for (const auto& info : layout.read_index()) {
    const auto chunk = data::read_chunk_file(layout.chunk_path(info.chunk_id), info.chunk_id);
    if (!encoder) {
      encoder.emplace(static_cast<int>(chunk.height), latent_dim, seed);
    }
    models::write_latents(encoder->encode(chunk), layout.latent_path(info.chunk_id));
    models::write_latents(encoder->encode(data::flip_frames(chunk)),
                          layout.latent_path(info.chunk_id, "flip"));
    ++n;
  }
  return n;
}

}  // namespace dashkin::pipeline
