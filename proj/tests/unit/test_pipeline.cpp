#include "dashkin/error.hpp"
#include "dashkin/pipeline.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace dashkin::pipeline {
namespace {

namespace fs = std::filesystem;
using dashkin::testing::TempDir;

constexpr double kStart = 1000.0;

struct Corpus {
  fs::path manifest;
  fs::path specs;
};

/// Two drives of 50 s each: 500 frames at 10 fps and a 20 Hz capture over the same span.
Corpus write_two_drive_corpus(const fs::path& dir) {
  std::vector<dashkin::testing::RawRecording> recs;
  recs.push_back(dashkin::testing::write_raw_recording(dir / "a", kStart, 500, kStart, kStart + 50));
  recs.push_back(
      dashkin::testing::write_raw_recording(dir / "b", kStart, 500, kStart, kStart + 50));
  Corpus c{dir / "manifest.json", dir / "specs.json"};
  dashkin::testing::write_raw_manifest(c.manifest, recs, {"drive_a", "drive_b"});
  const auto specs = dashkin::testing::raw_signal_specs();
  dashkin::testing::write_file(c.specs, cansig::signal_specs_to_json(specs));
  return c;
}

IngestOptions small_options() {
  IngestOptions o;
  o.chunk_seconds = 10.0;
  o.frame_size = 8;
  o.val_fraction = 0.5;
  return o;
}

std::string cli() { return DASHKIN_CLI_PATH; }

TEST(Build, ChunksCarryTheRecordedFramesAndSignals) {
  TempDir dir;
  const auto corpus = write_two_drive_corpus(dir.path());
  const auto report = run_build(corpus.manifest, corpus.specs, dir / "out", small_options());
  EXPECT_TRUE(report.rejections.empty());
  ASSERT_GE(report.chunks.size(), 8u);
  ASSERT_TRUE(report.split.has_value());
  EXPECT_EQ(report.split->train_ids.size() + report.split->val_ids.size(), report.chunks.size());

  const data::DatasetLayout layout(dir / "out");
  EXPECT_TRUE(layout.validate().empty());
  for (std::size_t c = 0; c < 2; ++c) {
    char id[32];
    std::snprintf(id, sizeof(id), "e000_b00_c%03zu", c);
    const auto chunk = data::read_chunk_file(layout.chunk_path(id));
    const auto labels = data::read_label_file(layout.label_path(id));
    ASSERT_EQ(chunk.frames, 50u);
    EXPECT_EQ(chunk.width, 8u);
    for (std::size_t k = 0; k < chunk.frames; ++k) {
      // Grid instant 10c + 0.2k lands exactly on source frame 100c + 2k.
      const std::size_t source = 100 * c + 2 * k;
      EXPECT_EQ(chunk.at(k, 0, 3, 5), source % 256) << id << " frame " << k;
      EXPECT_EQ(chunk.at(k, 1, 3, 5), source / 256);
      EXPECT_EQ(chunk.at(k, 2, 7, 0), 77);
      const double t = 10.0 * static_cast<double>(c) + 0.2 * static_cast<double>(k);
      EXPECT_NEAR(labels.speed[k], dashkin::testing::raw_speed(t), 0.02) << t;
      EXPECT_NEAR(labels.yaw[k], dashkin::testing::raw_yaw(t), 0.02) << t;
      if (t < 9.5) {
        EXPECT_EQ(labels.lead_present[k], 0.0);
        EXPECT_EQ(labels.lead_distance[k], data::kLeadDistanceSentinel);
        EXPECT_EQ(labels.lead_rel_speed[k], data::kLeadRelSpeedDefault);
      } else if (t >= 10.5) {
        EXPECT_EQ(labels.lead_present[k], 1.0);
        EXPECT_NEAR(labels.lead_distance[k], dashkin::testing::raw_distance(t), 0.02);
        EXPECT_NEAR(labels.lead_rel_speed[k], -4.0, 0.02);
      }
    }
  }
}

TEST(Build, SameInputsGiveByteIdenticalDatasets) {
  TempDir dir;
  const auto corpus = write_two_drive_corpus(dir.path());
  const std::string args = "build --manifest '" + corpus.manifest.string() + "' --specs '" +
                           corpus.specs.string() +
                           "' --chunk-seconds 10 --frame-size 8 --val-fraction 0.5 --seed 3 --out ";
  const auto a = dashkin::testing::run_cli(cli(), args + "'" + (dir / "a_out").string() + "'");
  const auto b = dashkin::testing::run_cli(cli(), args + "'" + (dir / "b_out").string() + "'");
  ASSERT_EQ(a.exit_code, 0) << a.output;
  ASSERT_EQ(b.exit_code, 0) << b.output;
  EXPECT_EQ(dashkin::testing::directory_hash(dir / "a_out"),
            dashkin::testing::directory_hash(dir / "b_out"));
  EXPECT_TRUE(fs::exists(dir / "a_out/split.json"));
}

TEST(Build, SingleDriveWritesNoSplit) {
  TempDir dir;
  const auto rec = dashkin::testing::write_raw_recording(dir / "a", kStart, 300, kStart, kStart + 30);
  dashkin::testing::write_raw_manifest(dir / "manifest.json", {rec});
  dashkin::testing::write_file(dir / "specs.json",
                               cansig::signal_specs_to_json(dashkin::testing::raw_signal_specs()));
  const auto report = run_build(dir / "manifest.json", dir / "specs.json", dir / "out", small_options());
  EXPECT_EQ(report.chunks.size(), 3u);
  EXPECT_FALSE(report.split.has_value());
  EXPECT_FALSE(fs::exists(dir / "out/split.json"));
  ASSERT_FALSE(report.warnings.empty());
  EXPECT_NE(report.warnings.back().find("no split"), std::string::npos);
}

TEST(Build, CaptureGapRejectsTheChunksItTouches) {
  TempDir dir;
  const auto rec = dashkin::testing::write_raw_recording(dir / "a", kStart, 300, kStart, kStart + 30);
  // Drop the capture between 14 s and 14.8 s, a gap longer than max_gap_s.
  auto text = dashkin::testing::read_file(rec.can_csv);
  std::istringstream in(text);
  std::string line;
  std::string kept;
  while (std::getline(in, line)) {
    const double t = line.rfind("Time", 0) == 0 ? 0.0 : std::stod(line.substr(0, line.find(',')));
    if (!(t > kStart + 14.0 && t < kStart + 14.8)) {
      kept += line + "\n";
    }
  }
  dashkin::testing::write_file(rec.can_csv, kept);
  dashkin::testing::write_raw_manifest(dir / "manifest.json", {rec});
  dashkin::testing::write_file(dir / "specs.json",
                               cansig::signal_specs_to_json(dashkin::testing::raw_signal_specs()));
  auto options = small_options();
  options.max_gap_s = 0.5;
  const auto report = run_build(dir / "manifest.json", dir / "specs.json", dir / "out", options);
  // The gap splits coverage: [0, 14] holds one chunk and [14.8, 30] holds one more.
  EXPECT_EQ(report.chunks.size(), 2u);
  for (const auto& c : report.chunks) {
    EXPECT_TRUE(c.t0 + c.duration_s <= kStart + 14.0 + 1e-9 || c.t0 >= kStart + 14.8 - 1e-9)
        << c.chunk_id;
  }
}

TEST(Decode, WritesSeriesAndBlocks) {
  TempDir dir;
  const auto corpus = write_two_drive_corpus(dir.path());
  const auto report = run_decode(corpus.manifest, corpus.specs, dir / "out", small_options());
  EXPECT_TRUE(report.warnings.empty());
  ASSERT_EQ(report.entries.size(), 2u);
  EXPECT_EQ(report.entries[0].video, (sync::TimeInterval{kStart, kStart + 50.0}));
  EXPECT_EQ(report.entries[0].series.at("speed").size(), 1001u);
  EXPECT_TRUE(fs::exists(dir / "out/blocks.json"));
  EXPECT_TRUE(fs::exists(dir / "out/series/entry_001/lead_distance.csv"));
}

TEST(Decode, DisjointCoverageWarnsAndWritesNothing) {
  TempDir dir;
  const auto rec = dashkin::testing::write_raw_recording(dir / "a", 5000.0, 100, kStart, kStart + 60);
  dashkin::testing::write_raw_manifest(dir / "manifest.json", {rec});
  dashkin::testing::write_file(dir / "specs.json",
                               cansig::signal_specs_to_json(dashkin::testing::raw_signal_specs()));
  const auto r = dashkin::testing::run_cli(
      cli(), "decode --manifest '" + (dir / "manifest.json").string() + "' --specs '" +
                 (dir / "specs.json").string() + "' --out '" + (dir / "out").string() + "'");
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("warning: no usable blocks"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Decode, RenamedHeaderColumnExitsWithFormatStatus) {
  TempDir dir;
  const auto rec = dashkin::testing::write_raw_recording(dir / "a", kStart, 100, kStart, kStart + 10);
  dashkin::testing::write_file(rec.can_csv, "Time,Bus,ID,Message,MessageLength\n1000,0,256,00,1\n");
  dashkin::testing::write_raw_manifest(dir / "manifest.json", {rec});
  dashkin::testing::write_file(dir / "specs.json",
                               cansig::signal_specs_to_json(dashkin::testing::raw_signal_specs()));
  const auto r = dashkin::testing::run_cli(
      cli(), "decode --manifest '" + (dir / "manifest.json").string() + "' --specs '" +
                 (dir / "specs.json").string() + "' --out '" + (dir / "out").string() + "'");
  EXPECT_EQ(r.exit_code, 2) << r.output;
  EXPECT_NE(r.output.find("MessageID"), std::string::npos) << r.output;
}

TEST(Manifest, MalformedEntriesAreFormatErrors) {
  TempDir dir;
  dashkin::testing::write_file(dir / "m.json", "{\"video_path\": \"x\"}");
  EXPECT_THROW((void)sync::load_manifest(dir / "m.json"), FormatError);
  dashkin::testing::write_file(dir / "m.json", "[{\"video_path\": \"x\", \"video_fps\": 10}]");
  EXPECT_THROW((void)sync::load_manifest(dir / "m.json"), FormatError);
  dashkin::testing::write_file(
      dir / "m.json",
      "[{\"video_path\": \"v\", \"video_start_time_s\": 3, \"video_fps\": 10, \"can_csv_path\": \"c.csv\"}]");
  const auto entries = sync::load_manifest(dir / "m.json");
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].video_path, dir / "v");
  EXPECT_FALSE(entries[0].drive_id.has_value());
}

TEST(StandinLatents, OneOriginalAndOneFlipPerChunk) {
  TempDir dir;
  const auto corpus = write_two_drive_corpus(dir.path());
  const auto report = run_build(corpus.manifest, corpus.specs, dir / "out", small_options());
  EXPECT_EQ(write_standin_latents(dir / "out", 12, 1), report.chunks.size());
  const data::DatasetLayout layout(dir / "out");
  const models::LatentStore store(layout, 50, 12);
  for (const auto& c : report.chunks) {
    EXPECT_EQ(store.load(c.chunk_id).values.cols(), 12);
    EXPECT_TRUE(store.contains(c.chunk_id, "flip"));
  }
}

TEST(Cli, SyntheticCorpusThroughTrainPredictEventsStatsAndReport) {
  TempDir dir;
  const std::string data = "'" + (dir / "data").string() + "'";
  auto run = [&](const std::string& args) {
    const auto r = dashkin::testing::run_cli(cli(), args);
    EXPECT_EQ(r.exit_code, 0) << args << "\n" << r.output;
    return r;
  };
  run("synth --chunks 8 --seed 2 --difficulty 0.5 --out " + data);
  const data::DatasetLayout layout(dir / "data");
  const auto index = layout.read_index();
  ASSERT_EQ(index.size(), 8u);

  const std::string run_dir = "'" + (dir / "run").string() + "'";
  run("train --data " + data + " --out " + run_dir +
      " --attribute yaw --encoder residual_cnn --head transformer --desk-scale --epochs 2 --augment none");
  EXPECT_TRUE(fs::exists(dir / "run/result.json"));
  ASSERT_TRUE(fs::exists(dir / "run/model.dkck"));

  run("predict --model '" + (dir / "run/model.dkck").string() + "' --chunk '" +
      layout.chunk_path(index[0].chunk_id).string() + "' --out '" + (dir / "pred.csv").string() + "'");
  const auto pred = dashkin::testing::read_file(dir / "pred.csv");
  EXPECT_EQ(std::count(pred.begin(), pred.end(), '\n'), 21);
  EXPECT_EQ(pred.rfind("frame,value\n", 0), 0u);

  run("events --data " + data + " --out '" + (dir / "events.jsonl").string() + "'");
  EXPECT_TRUE(fs::exists(dir / "events.jsonl"));

  run("stats --data " + data + " --out '" + (dir / "stats").string() + "'");
  EXPECT_FALSE(fs::is_empty(dir / "stats"));

  const std::string grid_dir = "'" + (dir / "grid").string() + "'";
  const auto grid = run("grid --data " + data + " --out " + grid_dir +
                        " --attribute lead_present --desk-scale --epochs 1 --augment none");
  EXPECT_NE(grid.output.find("24 run(s)"), std::string::npos) << grid.output;
  run("report --runs " + grid_dir + " --out '" + (dir / "report").string() + "'");
  EXPECT_TRUE(fs::exists(dir / "report/tables/lead_present.csv"));
  EXPECT_TRUE(fs::exists(dir / "report/summary.txt"));
}

TEST(Cli, ExternalLatentModelCannotPredictFromPixels) {
  TempDir dir;
  const std::string data = "'" + (dir / "data").string() + "'";
  ASSERT_EQ(dashkin::testing::run_cli(cli(), "synth --chunks 4 --out " + data).exit_code, 0);
  const auto trained = dashkin::testing::run_cli(
      cli(), "train --data " + data + " --out '" + (dir / "run").string() +
                 "' --encoder external_latents --head baseline --desk-scale --epochs 1");
  ASSERT_EQ(trained.exit_code, 0) << trained.output;
  const data::DatasetLayout layout(dir / "data");
  const auto r = dashkin::testing::run_cli(
      cli(), "predict --model '" + (dir / "run/model.dkck").string() + "' --chunk '" +
                 layout.chunk_path(layout.read_index()[0].chunk_id).string() + "'");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("latents"), std::string::npos) << r.output;
}

TEST(Cli, UnknownAttributeIsRejected) {
  TempDir dir;
  ASSERT_EQ(dashkin::testing::run_cli(cli(), "synth --chunks 2 --out '" + (dir / "d").string() + "'")
                .exit_code,
            0);
  const auto r = dashkin::testing::run_cli(
      cli(), "train --data '" + (dir / "d").string() + "' --out '" + (dir / "r").string() +
                 "' --attribute altitude --desk-scale --epochs 1");
  EXPECT_NE(r.exit_code, 0);
}

}  // namespace
}  // namespace dashkin::pipeline
