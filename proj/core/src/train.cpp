#include "dashkin/train.hpp"

#include "dashkin/checkpoint.hpp"
#include "dashkin/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace dashkin::train {

namespace {

using nlohmann::json;
using nn::Matrix;
using nn::Var;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::array<std::string_view, 4> kAugmentationNames = {"none", "flip", "reverse", "both"};
constexpr std::array<std::string_view, 2> kRelSpeedNames = {"regression", "3_class"};

double nan_if_null(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json doubles_to_json(const std::vector<double>& v) {
  json arr = json::array();
  for (double x : v) {
    arr.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  }
  return arr;
}

std::vector<double> doubles_from_json(const json& arr) {
  std::vector<double> out;
  for (const auto& x : arr) {
    out.push_back(nan_if_null(x));
  }
  return out;
}

json scale_to_json(const models::ModelScale& s) {
  return {{"latent_dim", s.latent_dim},         {"hidden", s.hidden},
          {"channel_plan", s.channel_plan},     {"block_plan", s.block_plan},
          {"attention_heads", s.attention_heads}, {"feed_forward", s.feed_forward}};
}

models::ModelScale scale_from_json(const json& j) {
  models::ModelScale s;
  s.latent_dim = j.at("latent_dim").get<int>();
  s.hidden = j.at("hidden").get<int>();
  s.channel_plan = j.at("channel_plan").get<std::vector<int>>();
  s.block_plan = j.at("block_plan").get<std::vector<int>>();
  s.attention_heads = j.at("attention_heads").get<int>();
  s.feed_forward = j.at("feed_forward").get<int>();
  return s;
}

json config_to_json(const ModelConfig& c) {
  return {{"attribute", std::string(data::to_string(c.attribute))},
          {"encoder", std::string(models::to_string(c.encoder))},
          {"head", std::string(models::to_string(c.head))},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"augmentation", std::string(to_string(c.augmentation))},
          {"epochs", c.epochs},
          {"workers_per_node", c.workers_per_node},
          {"lead_mask", c.lead_mask},
          {"rel_speed_mode", std::string(kRelSpeedNames[static_cast<std::size_t>(c.rel_speed_mode)])},
          {"head_layers", c.head_layers},
          {"scale", scale_to_json(c.scale)},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.attribute = data::attribute_from_string(j.at("attribute").get<std::string>());
  c.encoder = models::encoder_kind_from_string(j.at("encoder").get<std::string>());
  c.head = models::head_kind_from_string(j.at("head").get<std::string>());
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.augmentation = augmentation_from_string(j.at("augmentation").get<std::string>());
  c.epochs = j.at("epochs").get<int>();
  c.workers_per_node = j.at("workers_per_node").get<int>();
  c.lead_mask = j.at("lead_mask").get<bool>();
  const auto mode = j.at("rel_speed_mode").get<std::string>();
  if (mode == kRelSpeedNames[0]) {
    c.rel_speed_mode = RelSpeedMode::regression;
  } else if (mode == kRelSpeedNames[1]) {
    c.rel_speed_mode = RelSpeedMode::three_class;
  } else {
    throw ConfigError("unknown rel_speed_mode '" + mode + "'");
  }
  c.head_layers = j.at("head_layers").get<int>();
  c.scale = scale_from_json(j.at("scale"));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  return c;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<double> lead_weights(const Example& e) {
  std::vector<double> w(e.labels.track.lead_present.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = e.labels.track.lead_present[i] >= 0.5 ? 1.0 : 0.0;
  }
  return w;
}

std::vector<int> class_indices(std::span<const double> rel_speed) {
  const auto classes = data::rel_speed_to_classes(rel_speed);
  std::vector<int> out(classes.size());
  std::transform(classes.begin(), classes.end(), out.begin(),
                 [](data::RelSpeedClass c) { return static_cast<int>(c); });
  return out;
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) {
      throw IoError("cannot write " + tmp.string());
    }
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view to_string(Augmentation a) { return kAugmentationNames[static_cast<std::size_t>(a)]; }

Augmentation augmentation_from_string(std::string_view s) {
  if (s == "horizontal_flip") {
    return Augmentation::horizontal_flip;
  }
  for (std::size_t i = 0; i < kAugmentationNames.size(); ++i) {
    if (kAugmentationNames[i] == s) {
      return static_cast<Augmentation>(i);
    }
  }
  throw ConfigError("unknown augmentation '" + std::string(s) + "'");
}

models::OutputKind ModelConfig::output_kind() const {
  if (attribute == data::Attribute::lead_present) {
    return models::OutputKind::binary;
  }
  if (attribute == data::Attribute::lead_rel_speed && rel_speed_mode == RelSpeedMode::three_class) {
    return models::OutputKind::three_class;
  }
  return models::OutputKind::scalar_regression;
}

bool ModelConfig::masked() const {
  return lead_mask && (attribute == data::Attribute::lead_distance ||
                       attribute == data::Attribute::lead_rel_speed);
}

void ModelConfig::validate() const {
  if (batch_size < 1 || workers_per_node < 1 || epochs < 0 || head_layers < 1) {
    throw ConfigError("batch size, workers and head layers must be positive; epochs non-negative");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive and finite");
  }
  if (encoder == models::EncoderKind::standin) {
    throw ConfigError("stand-in latents are trained through the external_latents encoder");
  }
  if (augmentation == Augmentation::reverse || augmentation == Augmentation::both) {
    const bool preserved = std::find(data::kReversalPreserved.begin(), data::kReversalPreserved.end(),
                                     attribute) != data::kReversalPreserved.end();
    if (!preserved) {
      throw InvalidTargetError("time reversal invalidates '" +
                               std::string(data::to_string(attribute)) + "' as a training target");
    }
  }
  if (rel_speed_mode == RelSpeedMode::three_class && attribute != data::Attribute::lead_rel_speed) {
    throw ConfigError("three-class mode applies only to lead_rel_speed");
  }
}

std::string ModelConfig::to_json() const { return config_to_json(*this).dump(); }

ModelConfig ModelConfig::from_json(const std::string& text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model config: ") + e.what());
  }
}

std::string ModelConfig::id() const { return fnv1a_hex(to_json()); }

int effective_batch(const ModelConfig& config) { return config.batch_size * config.workers_per_node; }

std::string RunResult::to_json() const {
  json j;
  j["config"] = config_to_json(config);
  j["metrics_per_epoch"] = doubles_to_json(val_metric_per_epoch);
  j["val_loss_per_epoch"] = doubles_to_json(val_loss_per_epoch);
  j["train_loss_per_epoch"] = doubles_to_json(train_loss_per_epoch);
  j["final"] = std::isfinite(final_metric) ? json(final_metric) : json(nullptr);
  j["diverged"] = diverged;
  j["wall_time"] = wall_time;
  j["best_epoch"] = best_epoch;
  j["error"] = error;
  return j.dump(2);
}

RunResult RunResult::from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    RunResult r;
    r.config = config_from_json(j.at("config"));
    r.val_metric_per_epoch = doubles_from_json(j.at("metrics_per_epoch"));
    r.val_loss_per_epoch = doubles_from_json(j.value("val_loss_per_epoch", json::array()));
    r.train_loss_per_epoch = doubles_from_json(j.value("train_loss_per_epoch", json::array()));
    r.final_metric = nan_if_null(j.at("final"));
    r.diverged = j.at("diverged").get<bool>();
    r.wall_time = j.at("wall_time").get<double>();
    r.best_epoch = j.value("best_epoch", -1);
    r.error = j.value("error", std::string());
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed run result: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

double mse(std::span<const double> predictions, std::span<const double> labels,
           const std::vector<bool>& mask) {
  if (predictions.size() != labels.size() || (!mask.empty() && mask.size() != labels.size())) {
    throw DimensionError("mse: length mismatch");
  }
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!mask.empty() && !mask[i]) {
      continue;
    }
    const double d = predictions[i] - labels[i];
    total += d * d;
    ++n;
  }
  return n == 0 ? kNaN : total / static_cast<double>(n);
}

double accuracy(std::span<const double> probabilities, std::span<const double> labels,
                double threshold) {
  if (probabilities.size() != labels.size()) {
    throw DimensionError("accuracy: length mismatch");
  }
  if (labels.empty()) {
    return kNaN;
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    hits += (probabilities[i] >= threshold) == (labels[i] >= threshold) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double class_accuracy(std::span<const int> predicted, std::span<const int> labels,
                      const std::vector<bool>& mask) {
  if (predicted.size() != labels.size() || (!mask.empty() && mask.size() != labels.size())) {
    throw DimensionError("class_accuracy: length mismatch");
  }
  std::size_t hits = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!mask.empty() && !mask[i]) {
      continue;
    }
    hits += predicted[i] == labels[i] ? 1 : 0;
    ++n;
  }
  return n == 0 ? kNaN : static_cast<double>(hits) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------

TrainingData TrainingData::load(const std::filesystem::path& root, const ModelConfig& config) {
  TrainingData data{data::DatasetLayout(root), {}, {}, 0, 0, 0};
  const auto index = data.layout.read_index();
  if (index.empty()) {
    throw ConfigError("dataset at " + root.string() + " has no chunks");
  }
  const auto split = data.layout.read_split();
  auto original = [&](const std::string& id) {
    Example e;
    e.chunk_id = id;
    e.labels.track = data::read_label_file(data.layout.label_path(id));
    return e;
  };
  for (const auto& id : split.train_ids) {
    Example e = original(id);
    data.train.push_back(e);
    if (config.augmentation == Augmentation::horizontal_flip ||
        config.augmentation == Augmentation::both) {
      Example f = e;
      f.flipped = true;
      f.labels.track = data::flip_labels(e.labels.track);
      data.train.push_back(std::move(f));
    }
    if (config.augmentation == Augmentation::reverse || config.augmentation == Augmentation::both) {
      Example r = e;
      r.reversed = true;
      r.labels = data::reverse_labels(e.labels.track);
      data.train.push_back(std::move(r));
    }
  }
  for (const auto& id : split.val_ids) {
    data.val.push_back(original(id));
  }
  if (data.train.empty()) {
    throw ConfigError("training split is empty");
  }
  const auto& probe_id = data.train.front().chunk_id;
  data.frames = static_cast<int>(data.train.front().labels.track.size());
  if (std::filesystem::exists(data.layout.chunk_path(probe_id))) {
    data.frame_size = static_cast<int>(data::read_chunk_file(data.layout.chunk_path(probe_id)).height);
  }
  if (std::filesystem::exists(data.layout.latent_path(probe_id))) {
    data.latent_dim = static_cast<int>(models::read_latents(data.layout.latent_path(probe_id)).values.cols());
  }
  return data;
}

// ---------------------------------------------------------------------------

Model::Model(const ModelConfig& config, int frame_size, int latent_dim)
    : config_(config), frame_size_(frame_size), latent_dim_(latent_dim) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const auto& s = config.scale;
  if (config.encoder == models::EncoderKind::residual_cnn) {
    if (frame_size <= 0) {
      throw ConfigError("the CNN encoder needs packed frames in the dataset");
    }
    models::EncoderSpec spec{models::EncoderKind::residual_cnn, s.channel_plan, s.block_plan,
                             s.latent_dim};
    encoder_ = std::make_unique<models::ResidualCnn>(spec, frame_size, rng);
  } else if (latent_dim != s.latent_dim) {
    throw DimensionError("latent store holds " + std::to_string(latent_dim) +
                         "-dim latents but the model expects " + std::to_string(s.latent_dim));
  }
  models::HeadSpec head;
  head.kind = config.head;
  head.latent_dim = s.latent_dim;
  head.hidden = s.hidden;
  head.layers = config.head_layers;
  head.output = config.output_kind();
  head.attention_heads = s.attention_heads;
  head.feed_forward = s.feed_forward;
  head_ = models::make_head(head, rng);
}

models::ParamList Model::parameters() const {
  models::ParamList out;
  if (encoder_) {
    encoder_->collect(out, "encoder.");
  }
  head_->collect(out, "head.");
  return out;
}

Var Model::logits(const TrainingData& data, const Example& example) const {
  if (encoder_) {
    auto chunk = data::read_chunk_file(data.layout.chunk_path(example.chunk_id), example.chunk_id);
    if (example.flipped) {
      chunk = data::flip_frames(chunk);
    }
    if (example.reversed) {
      chunk = data::reverse_frames(chunk);
    }
    return head_->forward(encoder_->encode(chunk));
  }
  const models::LatentStore store(data.layout, data.frames, latent_dim_);
  Matrix latents = store.load(example.chunk_id, example.flipped ? "flip" : "").to_matrix();
  if (example.reversed) {
    latents = latents.colwise().reverse().eval();
  }
  return head_->forward(Var::constant(std::move(latents)));
}

Matrix Model::outputs(const Matrix& raw) const {
  switch (config_.output_kind()) {
    case models::OutputKind::scalar_regression:
      return (raw.array() * normalization.std + normalization.mean).matrix();
    case models::OutputKind::binary: return models::activate(raw, models::OutputKind::binary);
    case models::OutputKind::three_class: {
      Matrix out(raw.rows(), 1);
      for (Eigen::Index r = 0; r < raw.rows(); ++r) {
        Eigen::Index arg = 0;
        raw.row(r).maxCoeff(&arg);
        out(r, 0) = static_cast<double>(arg);
      }
      return out;
    }
  }
  return raw;
}

Matrix Model::predict(const TrainingData& data, const Example& example) const {
  return outputs(logits(data, example).value());
}

Matrix Model::predict_latents(const Matrix& latents) const {
  if (encoder_) {
    throw ConfigError("this model encodes frames; pass a chunk instead of latents");
  }
  if (latents.cols() != latent_dim_) {
    throw DimensionError("expected " + std::to_string(latent_dim_) + "-dim latents");
  }
  return outputs(head_->forward(Var::constant(latents)).value());
}

Matrix Model::predict_chunk(const data::VideoChunk& chunk) const {
  if (!encoder_) {
    throw ConfigError("this model consumes precomputed latents");
  }
  return outputs(head_->forward(encoder_->encode(chunk)).value());
}

void Model::save(const std::filesystem::path& path) const {
  json meta;
  meta["config"] = config_to_json(config_);
  meta["normalization"] = {{"mean", normalization.mean}, {"std", normalization.std}};
  meta["frame_size"] = frame_size_;
  meta["latent_dim"] = latent_dim_;
  write_checkpoint(snapshot(parameters(), meta.dump()), path);
}

Model Model::load(const std::filesystem::path& path) {
  const auto ckpt = read_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.metadata_json);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint metadata is not JSON: " + std::string(e.what()));
  }
  Model model(config_from_json(meta.at("config")), meta.at("frame_size").get<int>(),
              meta.at("latent_dim").get<int>());
  model.normalization = {meta.at("normalization").at("mean").get<double>(),
                         meta.at("normalization").at("std").get<double>()};
  auto params = model.parameters();
  restore(ckpt, params);
  return model;
}

Var example_loss(const Model& model, const Var& logits, const Example& example) {
  const auto& config = model.config();
  const auto& targets = example.labels.target(config.attribute);
  std::vector<double> weights;
  if (config.masked()) {
    weights = lead_weights(example);
    if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) {
      return {};
    }
  }
  switch (config.output_kind()) {
    case models::OutputKind::scalar_regression: {
      std::vector<double> z(targets.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = (targets[i] - model.normalization.mean) / model.normalization.std;
      }
      return nn::mse_loss(logits, z, weights);
    }
    case models::OutputKind::binary: return nn::bce_with_logits_loss(logits, targets, weights);
    case models::OutputKind::three_class:
      return nn::cross_entropy_loss(logits, class_indices(targets), weights);
  }
  return {};
}

EpochEvaluation evaluate(const Model& model, const TrainingData& data,
                         std::span<const Example> examples) {
  const auto& config = model.config();
  const auto output = config.output_kind();
  double sq = 0.0;
  std::size_t hits = 0;
  std::size_t frames = 0;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  EpochEvaluation ev;
  for (const auto& ex : examples) {
    const Var raw = model.logits(data, ex);
    const Var loss = example_loss(model, raw, ex);
    if (loss.defined()) {
      loss_sum += loss.item();
      ++loss_count;
      ev.finite = ev.finite && std::isfinite(loss.item());
    }
    const Matrix out = model.outputs(raw.value());
    ev.finite = ev.finite && out.allFinite();
    const auto& target = ex.labels.target(config.attribute);
    const auto mask = config.masked() ? data::mask_lead_absent(ex.labels.track) : std::vector<bool>{};
    const std::vector<int> classes =
        output == models::OutputKind::three_class ? class_indices(target) : std::vector<int>{};
    for (std::size_t i = 0; i < target.size(); ++i) {
      if (!mask.empty() && !mask[i]) {
        continue;
      }
      const double p = out(static_cast<Eigen::Index>(i), 0);
      switch (output) {
        case models::OutputKind::scalar_regression: sq += (p - target[i]) * (p - target[i]); break;
        case models::OutputKind::binary: hits += (p >= 0.5) == (target[i] >= 0.5) ? 1 : 0; break;
        case models::OutputKind::three_class:
          hits += static_cast<int>(p) == classes[i] ? 1 : 0;
          break;
      }
      ++frames;
    }
  }
  ev.loss = loss_count == 0 ? kNaN : loss_sum / static_cast<double>(loss_count);
  if (frames == 0) {
    ev.metric = kNaN;
  } else if (output == models::OutputKind::scalar_regression) {
    ev.metric = sq / static_cast<double>(frames);
  } else {
    ev.metric = static_cast<double>(hits) / static_cast<double>(frames);
  }
  return ev;
}

Adam::Adam(models::ParamList params, double learning_rate)
    : params_(std::move(params)), lr_(learning_rate) {
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
    v_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    p.var.zero_grad();
  }
}

void Adam::step(double grad_scale) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& raw = params_[i].var.grad();
    if (raw.size() == 0) {
      continue;
    }
    const Matrix g = raw * grad_scale;
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g.cwiseProduct(g);
    params_[i].var.mutable_value().array() -=
        lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + kEps);
  }
}

RunResult train_one(const ModelConfig& config, const TrainingData& data,
                    const TrainOptions& options) {
  std::unique_ptr<Model> unused;
  return train_one(config, data, options, unused);
}

RunResult train_one(const ModelConfig& config, const TrainingData& data, const TrainOptions& options,
                    std::unique_ptr<Model>& trained) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  auto model = std::make_unique<Model>(config, data.frame_size, data.latent_dim);

  if (config.output_kind() == models::OutputKind::scalar_regression) {
    std::vector<double> values;
    for (const auto& ex : data.train) {
      if (ex.flipped || ex.reversed) {
        continue;
      }
      const auto& t = ex.labels.target(config.attribute);
      const auto mask = config.masked() ? data::mask_lead_absent(ex.labels.track) : std::vector<bool>{};
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (mask.empty() || mask[i]) {
          values.push_back(t[i]);
        }
      }
    }
    if (!values.empty()) {
      const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                          static_cast<double>(values.size());
      double var = 0.0;
      for (double v : values) {
        var += (v - mean) * (v - mean);
      }
      const double sd = std::sqrt(var / static_cast<double>(values.size()));
      model->normalization = {mean, sd > 1e-6 ? sd : 1.0};
    }
  }

  RunResult result;
  result.config = config;
  auto params = model->parameters();
  Adam adam(params, config.learning_rate);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto micro = static_cast<std::size_t>(config.batch_size);
  const auto step_size = static_cast<std::size_t>(effective_batch(config));
  const bool maximize = config.metric_is_accuracy();
  double best = kNaN;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (result.diverged) {
      result.val_metric_per_epoch.push_back(kNaN);
      result.val_loss_per_epoch.push_back(kNaN);
      result.train_loss_per_epoch.push_back(kNaN);
      continue;
    }
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t begin = 0; begin < order.size() && !result.diverged; begin += step_size) {
      const std::size_t end = std::min(order.size(), begin + step_size);
      adam.zero_grad();
      int contributing = 0;
      // Each worker averages over its own micro-batch; the step averages over workers.
      for (std::size_t w = begin; w < end; w += micro) {
        std::vector<Var> losses;
        for (std::size_t i = w; i < std::min(end, w + micro); ++i) {
          const Example& ex = data.train[order[i]];
          Var loss = example_loss(*model, model->logits(data, ex), ex);
          if (loss.defined()) {
            losses.push_back(std::move(loss));
          }
        }
        if (losses.empty()) {
          continue;
        }
        Var total = losses.front();
        for (std::size_t i = 1; i < losses.size(); ++i) {
          total = nn::add(total, losses[i]);
        }
        total = nn::scale(total, 1.0 / static_cast<double>(losses.size()));
        const double value = total.item();
        if (!std::isfinite(value) || value > kDivergenceLoss) {
          result.diverged = true;
          break;
        }
        loss_sum += value;
        ++loss_count;
        nn::backward(total);
        ++contributing;
      }
      if (result.diverged || contributing == 0) {
        continue;
      }
      adam.step(1.0 / contributing);
    }

    EpochEvaluation ev{kNaN, kNaN, true};
    if (!result.diverged) {
      ev = evaluate(*model, data, data.val);
      // A non-finite validation loss or output counts like a non-finite training loss.
      result.diverged = !ev.finite;
    }
    if (result.diverged) {
      result.val_metric_per_epoch.push_back(kNaN);
      result.val_loss_per_epoch.push_back(kNaN);
      result.train_loss_per_epoch.push_back(kNaN);
      continue;
    }
    result.val_metric_per_epoch.push_back(ev.metric);
    result.val_loss_per_epoch.push_back(ev.loss);
    result.train_loss_per_epoch.push_back(
        loss_count == 0 ? kNaN : loss_sum / static_cast<double>(loss_count));
    if (options.on_epoch) {
      options.on_epoch(epoch, ev.metric);
    }

    if (options.run_dir) {
      const bool improved =
          std::isfinite(ev.metric) &&
          (std::isnan(best) || (maximize ? ev.metric > best : ev.metric < best));
      if (improved) {
        best = ev.metric;
        result.best_epoch = epoch;
        model->save(*options.run_dir / "checkpoints" / "best.dkck");
      }
      if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%04d.dkck", epoch + 1);
        model->save(*options.run_dir / "checkpoints" / name);
      }
    } else if (std::isfinite(ev.metric) &&
               (std::isnan(best) || (maximize ? ev.metric > best : ev.metric < best))) {
      best = ev.metric;
      result.best_epoch = epoch;
    }
  }

  result.final_metric = result.val_metric_per_epoch.empty() || result.diverged
                            ? kNaN
                            : result.val_metric_per_epoch.back();
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  trained = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------

std::vector<ModelConfig> grid_configs(std::span<const data::Attribute> attributes,
                                      const ModelConfig& base,
                                      std::span<const double> learning_rates) {
  constexpr std::array<models::EncoderKind, 2> kEncoders = {models::EncoderKind::residual_cnn,
                                                            models::EncoderKind::external_latents};
  constexpr std::array<models::HeadKind, 3> kHeads = {
      models::HeadKind::baseline, models::HeadKind::gru, models::HeadKind::transformer};
  constexpr std::array<int, 2> kBatchSizes = {1, 2};
  std::vector<ModelConfig> out;
  for (auto attribute : attributes) {
    for (auto encoder : kEncoders) {
      for (auto head : kHeads) {
        for (int bs : kBatchSizes) {
          for (double lr : learning_rates) {
            ModelConfig c = base;
            c.attribute = attribute;
            c.encoder = encoder;
            c.head = head;
            c.batch_size = bs;
            c.learning_rate = lr;
            out.push_back(c);
          }
        }
      }
    }
  }
  return out;
}

std::vector<RunResult> run_grid(std::span<const data::Attribute> attributes,
                                const ModelConfig& base, const std::filesystem::path& dataset_root,
                                const GridOptions& options) {
  const auto configs = grid_configs(attributes, base, options.learning_rates);
  std::vector<RunResult> results(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;
  const auto runs_dir = options.out_dir / "runs";
  std::filesystem::create_directories(runs_dir);

  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      const auto& config = configs[i];
      const auto path = runs_dir / (config.id() + ".json");
      RunResult r;
      bool loaded = false;
      if (options.resume && std::filesystem::exists(path)) {
        try {
          r = RunResult::from_json(slurp(path));
          loaded = true;
        } catch (const FormatError&) {
          // A torn or foreign file is retrained.
        }
      }
      if (!loaded) {
        try {
          const auto data = TrainingData::load(dataset_root, config);
          TrainOptions topts;
          topts.run_dir = options.out_dir / "checkpoints" / config.id();
          r = train_one(config, data, topts);
        } catch (const Error& e) {
          r = RunResult{};
          r.config = config;
          r.final_metric = kNaN;
          r.error = e.what();
        }
        write_atomic(path, r.to_json());
      }
      results[i] = std::move(r);
      if (options.on_result) {
        std::lock_guard lock(report_mutex);
        options.on_result(results[i]);
      }
    }
  };

  const int threads = std::max(1, options.parallel);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back(worker);
    }
    for (auto& t : pool) {
      t.join();
    }
  }
  return results;
}

std::vector<RunResult> load_results(const std::filesystem::path& out_dir) {
  std::vector<RunResult> out;
  const auto runs_dir = out_dir / "runs";
  if (!std::filesystem::exists(runs_dir)) {
    return out;
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(runs_dir)) {
    if (entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    out.push_back(RunResult::from_json(slurp(f)));
  }
  return out;
}

}  // namespace dashkin::train
