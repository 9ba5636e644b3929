// dashkin: one subcommand per pipeline stage, each reading and writing plain files.

#include "dashkin/cansig.hpp"
#include "dashkin/datastore.hpp"
#include "dashkin/error.hpp"
#include "dashkin/evalreport.hpp"
#include "dashkin/events.hpp"
#include "dashkin/pipeline.hpp"
#include "dashkin/synthgen.hpp"
#include "dashkin/train.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace dashkin;

namespace {

struct ModelFlags {
  std::string attribute = "speed";
  std::vector<std::string> attributes;
  std::string encoder = "residual_cnn";
  std::string head = "gru";
  int batch_size = 1;
  double lr = 1e-3;
  int epochs = 250;
  std::string augment = "flip";
  bool lead_mask = false;
  bool rel_speed_classes = false;
  bool desk_scale = false;
  int workers = 2;
  std::uint64_t seed = 0;

  [[nodiscard]] train::ModelConfig config() const {
    train::ModelConfig c;
    c.attribute = data::attribute_from_string(attribute);
    c.encoder = models::encoder_kind_from_string(encoder);
    c.head = models::head_kind_from_string(head);
    c.batch_size = batch_size;
    c.learning_rate = lr;
    c.epochs = epochs;
    c.augmentation = train::augmentation_from_string(augment);
    c.lead_mask = lead_mask;
    c.rel_speed_mode =
        rel_speed_classes ? train::RelSpeedMode::three_class : train::RelSpeedMode::regression;
    c.scale = desk_scale ? models::ModelScale::desk() : models::ModelScale::full();
    c.workers_per_node = workers;
    c.seed = seed;
    return c;
  }
};

void add_training_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--epochs", f.epochs, "Training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--augment", f.augment, "Training augmentation")
      ->check(CLI::IsMember({"none", "flip", "reverse", "both"}));
  cmd->add_flag("--lead-mask", f.lead_mask, "Exclude lead-absent frames from loss and metric");
  cmd->add_flag("--rel-speed-classes", f.rel_speed_classes,
                "Train lead_rel_speed as approaching/steady/receding");
  cmd->add_flag("--desk-scale", f.desk_scale, "Small model dimensions for CPU runs");
  cmd->add_option("--workers", f.workers, "Gradient-averaging workers")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "Random seed");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << text;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) {
    std::cerr << "warning: " << w << "\n";
  }
}

int cmd_decode(const fs::path& manifest, const fs::path& specs, const fs::path& out) {
  const auto report = pipeline::run_decode(manifest, specs, out);
  print_warnings(report.warnings);
  for (const auto& e : report.entries) {
    std::cout << "entry " << e.entry << ": " << e.blocks.size() << " usable block(s), "
              << e.malformed_rows << " malformed row(s)\n";
  }
  return 0;
}

int cmd_build(const fs::path& manifest, const fs::path& specs, const fs::path& out,
              const pipeline::IngestOptions& options) {
  const auto report = pipeline::run_build(manifest, specs, out, options);
  print_warnings(report.warnings);
  for (const auto& r : report.rejections) {
    std::cerr << "rejected " << r.chunk_id << ": " << r.reason << "\n";
  }
  std::cout << report.chunks.size() << " chunk(s) written, " << report.rejections.size()
            << " rejected\n";
  return 0;
}

int cmd_synth(const fs::path& out, synth::CorpusOptions options) {
  const auto summary = synth::make_corpus(options, out);
  std::cout << summary.chunks.size() << " synthetic chunk(s): " << summary.split.train_ids.size()
            << " train, " << summary.split.val_ids.size() << " val\n";
  return 0;
}

int cmd_train(const fs::path& data_root, const fs::path& out, const ModelFlags& flags) {
  const auto config = flags.config();
  config.validate();
  const auto data = train::TrainingData::load(data_root, config);
  train::TrainOptions options;
  options.run_dir = out;
  options.on_epoch = [](int epoch, double metric) {
    std::cout << "epoch " << epoch << " val " << fmt(metric) << "\n" << std::flush;
  };
  std::unique_ptr<train::Model> model;
  const auto result = train::train_one(config, data, options, model);
  write_text(out / "result.json", result.to_json() + "\n");
  if (model) {
    model->save(out / "model.dkck");
  }
  std::cout << "final " << fmt(result.final_metric) << (result.diverged ? " (diverged)" : "")
            << "\n";
  return 0;
}

std::vector<data::Attribute> parse_attributes(const std::vector<std::string>& names) {
  if (names.empty() || (names.size() == 1 && names[0] == "all")) {
    return {data::kAllAttributes.begin(), data::kAllAttributes.end()};
  }
  std::vector<data::Attribute> out;
  for (const auto& n : names) {
    out.push_back(data::attribute_from_string(n));
  }
  return out;
}

int cmd_grid(const fs::path& data_root, const fs::path& out, const ModelFlags& flags, bool resume,
             int parallel, const std::vector<double>& learning_rates) {
  const auto attributes = parse_attributes(flags.attributes);
  auto base = flags.config();
  base.attribute = attributes.front();
  train::GridOptions options;
  options.out_dir = out;
  options.resume = resume;
  options.parallel = parallel;
  if (!learning_rates.empty()) {
    options.learning_rates = learning_rates;
  }
  options.on_result = [](const train::RunResult& r) {
    std::cout << r.config.id() << " " << data::to_string(r.config.attribute) << " "
              << models::to_string(r.config.encoder) << " " << models::to_string(r.config.head)
              << " bs " << r.config.batch_size << " lr " << fmt(r.config.learning_rate) << ": "
              << (r.error.empty() ? fmt(r.final_metric) : "error: " + r.error) << "\n"
              << std::flush;
  };
  const auto results = train::run_grid(attributes, base, data_root, options);
  std::cout << results.size() << " run(s)\n";
  return 0;
}

int cmd_report(const fs::path& runs, const fs::path& out) {
  const auto results = train::load_results(runs);
  const auto summary = report::write_report(results, out);
  print_warnings(summary.skipped);
  std::cout << summary.tabulated.size() << " table(s) written to " << out.string() << "\n";
  return 0;
}

int cmd_events(const fs::path& data_root, const fs::path& labels, const fs::path& rules,
               const fs::path& out) {
  const auto config = rules.empty() ? events::default_config() : events::load_event_config(rules);
  std::vector<fs::path> files;
  if (!labels.empty()) {
    files.push_back(labels);
  } else {
    const data::DatasetLayout layout(data_root);
    for (const auto& info : layout.read_index()) {
      files.push_back(layout.label_path(info.chunk_id));
    }
  }
  std::string jsonl;
  std::size_t count = 0;
  for (const auto& f : files) {
    const auto track = data::read_label_file(f);
    const auto found = events::detect(track, config);
    count += found.size();
    jsonl += events::to_jsonl(track.chunk_id, found);
  }
  if (out.empty()) {
    std::cout << jsonl;
  } else {
    write_text(out, jsonl);
    std::cout << count << " event(s) in " << files.size() << " track(s)\n";
  }
  return 0;
}

struct BinPlan {
  double lo;
  double hi;
  std::size_t bins;
  const char* label;
};

int cmd_stats(const fs::path& data_root, const fs::path& out) {
  const std::map<data::Attribute, BinPlan> plans = {
      {data::Attribute::speed, {0.0, 140.0, 28, "speed (km/h)"}},
      {data::Attribute::yaw, {-30.0, 30.0, 30, "yaw rate (deg/s)"}},
      {data::Attribute::lead_present, {0.0, 1.0, 10, "lead present"}},
      {data::Attribute::lead_distance, {0.0, 260.0, 26, "lead distance (m)"}},
      {data::Attribute::lead_rel_speed, {-40.0, 40.0, 32, "lead relative speed (km/h)"}},
  };
  const data::DatasetLayout layout(data_root);
  const auto split = layout.read_split();
  auto gather = [&](const std::vector<std::string>& ids, data::Attribute a) {
    std::vector<double> v;
    for (const auto& id : ids) {
      const auto track = data::read_label_file(layout.label_path(id));
      const auto& values = track.values(a);
      v.insert(v.end(), values.begin(), values.end());
    }
    return v;
  };
  for (const auto& [attribute, plan] : plans) {
    const auto edges = data::uniform_edges(plan.lo, plan.hi, plan.bins);
    const auto tr = data::histogram(gather(split.train_ids, attribute), edges);
    const auto va = data::histogram(gather(split.val_ids, attribute), edges);
    const std::string name(data::to_string(attribute));
    data::write_histogram(tr, out, name + "_train", plan.label);
    data::write_histogram(va, out, name + "_val", plan.label);
    std::cout << name << ": train " << tr.total() << " frames, val " << va.total()
              << " frames, JS divergence " << fmt(data::js_divergence(tr, va)) << " bits\n";
  }
  return 0;
}

int cmd_predict(const fs::path& model_path, const fs::path& chunk_path, const fs::path& out) {
  const auto model = train::Model::load(model_path);
  const auto chunk = data::read_chunk_file(chunk_path);
  const auto pred = model.predict_chunk(chunk);
  std::string csv = "frame";
  for (Eigen::Index c = 0; c < pred.cols(); ++c) {
    csv += pred.cols() == 1 ? ",value" : ",value" + std::to_string(c);
  }
  csv += "\n";
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    csv += std::to_string(r);
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      csv += "," + fmt(pred(r, c));
    }
    csv += "\n";
  }
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text(out, csv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dashcam kinematics: CAN decoding, chunk datasets, training grids and reports"};
  app.require_subcommand(1);

  fs::path manifest;
  fs::path specs;
  fs::path out;
  fs::path data_root;
  pipeline::IngestOptions ingest;

  auto* decode = app.add_subcommand("decode", "Decode CAN captures and find usable blocks");
  decode->add_option("--manifest", manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  decode->add_option("--specs", specs, "Signal spec JSON")->required()->check(CLI::ExistingFile);
  decode->add_option("--out", out, "Output directory")->required();

  auto* build = app.add_subcommand("build", "Assemble the chunk dataset");
  build->add_option("--manifest", manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  build->add_option("--specs", specs, "Signal spec JSON")->required()->check(CLI::ExistingFile);
  build->add_option("--out", out, "Dataset root")->required();
  build->add_option("--seed", ingest.seed, "Split seed");
  build->add_option("--chunk-seconds", ingest.chunk_seconds, "Chunk length")->check(CLI::PositiveNumber);
  build->add_option("--fps", ingest.fps, "Label and frame rate")->check(CLI::PositiveNumber);
  build->add_option("--frame-size", ingest.frame_size, "Square frame size")->check(CLI::PositiveNumber);
  build->add_option("--val-fraction", ingest.val_fraction, "Validation share of duration")
      ->check(CLI::Range(0.0, 1.0));

  synth::CorpusOptions corpus = synth::CorpusOptions::desk();
  bool full_scale = false;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus with exact labels");
  synth_cmd->add_option("--out", out, "Dataset root")->required();
  synth_cmd->add_option("--seed", corpus.seed, "Generator seed");
  synth_cmd->add_option("--chunks", corpus.n_chunks, "Number of chunks")->check(CLI::Range(2, 1000000));
  synth_cmd->add_option("--difficulty", corpus.difficulty, "Noise and event density in [0, 1]")
      ->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_flag("--speed-only", corpus.speed_only, "Vary speed only");
  synth_cmd->add_flag("--desk-scale", "20 frames of 64x64 (default)");
  synth_cmd->add_flag("--full-scale", full_scale, "200 frames of 256x256 with 512-d latents");
  synth_cmd->add_option("--latent-dim", corpus.latent_dim, "Stand-in latent size (0 disables)");

  int latent_dim = 32;
  std::uint64_t latent_seed = 7;
  auto* latents = app.add_subcommand("latents", "Write stand-in latents for a dataset");
  latents->add_option("--data", data_root, "Dataset root")->required()->check(CLI::ExistingDirectory);
  latents->add_option("--latent-dim", latent_dim, "Latent size")->check(CLI::PositiveNumber);
  latents->add_option("--seed", latent_seed, "Projection seed");

  ModelFlags flags;
  auto* train_cmd = app.add_subcommand("train", "Train one configuration");
  train_cmd->add_option("--data", data_root, "Dataset root")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", out, "Run directory")->required();
  train_cmd->add_option("--attribute", flags.attribute, "Target attribute");
  train_cmd->add_option("--encoder", flags.encoder, "residual_cnn or external_latents");
  train_cmd->add_option("--head", flags.head, "baseline, gru or transformer");
  train_cmd->add_option("--batch-size", flags.batch_size, "Per-worker batch size")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", flags.lr, "Learning rate")->check(CLI::PositiveNumber);
  add_training_flags(train_cmd, flags);

  bool resume = false;
  int parallel = 1;
  auto* grid = app.add_subcommand("grid", "Run the 24-cell grid per attribute");
  grid->add_option("--data", data_root, "Dataset root")->required()->check(CLI::ExistingDirectory);
  grid->add_option("--out", out, "Grid output directory")->required();
  grid->add_option("--attribute", flags.attributes, "Attributes (repeatable, default all)");
  grid->add_flag("--resume", resume, "Skip runs with a stored result");
  grid->add_option("--parallel", parallel, "Concurrent runs")->check(CLI::PositiveNumber);
  std::vector<double> grid_lrs;
  grid->add_option("--lr", grid_lrs, "Learning rates to sweep (repeatable, default 1e-3 1e-5)")
      ->check(CLI::PositiveNumber);
  add_training_flags(grid, flags);

  fs::path runs;
  auto* report_cmd = app.add_subcommand("report", "Tables, curves and summary from grid results");
  report_cmd->add_option("--runs", runs, "Grid output directory")->required()->check(CLI::ExistingDirectory);
  report_cmd->add_option("--out", out, "Report directory")->required();

  fs::path labels;
  fs::path rules;
  auto* events_cmd = app.add_subcommand("events", "Detect driving events in label tracks");
  auto* data_opt = events_cmd->add_option("--data", data_root, "Dataset root")->check(CLI::ExistingDirectory);
  auto* labels_opt = events_cmd->add_option("--labels", labels, "Single label file")->check(CLI::ExistingFile);
  data_opt->excludes(labels_opt);
  events_cmd->add_option("--rules", rules, "Event rule JSON")->check(CLI::ExistingFile);
  events_cmd->add_option("--out", out, "JSONL output (stdout when absent)");

  auto* stats = app.add_subcommand("stats", "Label histograms for the train and val splits");
  stats->add_option("--data", data_root, "Dataset root")->required()->check(CLI::ExistingDirectory);
  stats->add_option("--out", out, "Histogram directory")->required();

  fs::path model_path;
  fs::path chunk_path;
  auto* predict = app.add_subcommand("predict", "Per-frame outputs of a trained model");
  predict->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  predict->add_option("--chunk", chunk_path, "Chunk file")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", out, "CSV output (stdout when absent)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*decode) {
      return cmd_decode(manifest, specs, out);
    }
    if (*build) {
      return cmd_build(manifest, specs, out, ingest);
    }
    if (*synth_cmd) {
      if (full_scale) {
        const auto desk_latent = corpus.latent_dim;
        auto full = synth::CorpusOptions::full();
        full.seed = corpus.seed;
        full.n_chunks = corpus.n_chunks;
        full.difficulty = corpus.difficulty;
        full.speed_only = corpus.speed_only;
        if (synth_cmd->count("--latent-dim") > 0) {
          full.latent_dim = desk_latent;
        }
        corpus = full;
      }
      return cmd_synth(out, corpus);
    }
    if (*latents) {
      const auto n = pipeline::write_standin_latents(data_root, latent_dim, latent_seed);
      std::cout << n << " chunk(s) encoded\n";
      return 0;
    }
    if (*train_cmd) {
      return cmd_train(data_root, out, flags);
    }
    if (*grid) {
      return cmd_grid(data_root, out, flags, resume, parallel, grid_lrs);
    }
    if (*report_cmd) {
      return cmd_report(runs, out);
    }
    if (*events_cmd) {
      if (data_root.empty() && labels.empty()) {
        throw ConfigError("events needs --data or --labels");
      }
      return cmd_events(data_root, labels, rules, out);
    }
    if (*stats) {
      return cmd_stats(data_root, out);
    }
    if (*predict) {
      return cmd_predict(model_path, chunk_path, out);
    }
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
