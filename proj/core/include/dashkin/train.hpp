#pragma once

// Training: run configuration, per-attribute losses and metrics, the Adam
// loop with emulated two-worker gradient averaging, divergence accounting and
// the resumable encoder x head x batch x learning-rate grid.

#include "dashkin/datastore.hpp"
#include "dashkin/models.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dashkin::train {

enum class Augmentation { none, horizontal_flip, reverse, both };
enum class RelSpeedMode { regression, three_class };

std::string_view to_string(Augmentation a);
Augmentation augmentation_from_string(std::string_view s);

struct ModelConfig {
  data::Attribute attribute = data::Attribute::speed;
  models::EncoderKind encoder = models::EncoderKind::residual_cnn;
  models::HeadKind head = models::HeadKind::gru;
  int batch_size = 1;
  double learning_rate = 1e-3;
  Augmentation augmentation = Augmentation::horizontal_flip;
  int epochs = 250;
  int workers_per_node = 2;
  bool lead_mask = false;
  RelSpeedMode rel_speed_mode = RelSpeedMode::regression;
  int head_layers = 2;
  models::ModelScale scale = models::ModelScale::full();
  std::uint64_t seed = 0;
  int checkpoint_every = 25;

  [[nodiscard]] models::OutputKind output_kind() const;
  /// Accuracy metrics are maximized; MSE metrics are minimized.
  [[nodiscard]] bool metric_is_accuracy() const { return output_kind() != models::OutputKind::scalar_regression; }
  [[nodiscard]] bool masked() const;

  /// Throws ConfigError, or InvalidTargetError when time reversal is combined
  /// with a target it invalidates.
  void validate() const;

  [[nodiscard]] std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  /// Stable hex digest of the canonical JSON; used for run file names.
  [[nodiscard]] std::string id() const;
};

/// batch_size x workers_per_node.
int effective_batch(const ModelConfig& config);

struct RunResult {
  ModelConfig config;
  std::vector<double> val_metric_per_epoch;
  /// Training-loss function evaluated on the validation split.
  std::vector<double> val_loss_per_epoch;
  std::vector<double> train_loss_per_epoch;
  double final_metric = 0.0;
  bool diverged = false;
  double wall_time = 0.0;
  int best_epoch = -1;
  /// Non-empty when the run failed for a reason other than divergence.
  std::string error;

  [[nodiscard]] std::string to_json() const;
  static RunResult from_json(const std::string& text);
};

// ---------------------------------------------------------------------------
// Losses and metrics

/// Mean squared error over frames where the mask is true (all when empty).
/// Returns NaN when no frame is selected.
double mse(std::span<const double> predictions, std::span<const double> labels,
           const std::vector<bool>& mask = {});
/// Fraction of frames where prediction and label fall on the same side of the threshold.
double accuracy(std::span<const double> probabilities, std::span<const double> labels,
                double threshold = 0.5);
double class_accuracy(std::span<const int> predicted, std::span<const int> labels,
                      const std::vector<bool>& mask = {});

// ---------------------------------------------------------------------------
// Data

/// One training or validation unit. Frames or latents are loaded on demand.
struct Example {
  std::string chunk_id;
  bool flipped = false;
  bool reversed = false;
  data::TrainingLabels labels;
};

struct TrainingData {
  data::DatasetLayout layout;
  std::vector<Example> train;
  std::vector<Example> val;
  int frames = 0;
  int frame_size = 0;
  int latent_dim = 0;  ///< 0 when no latent store is present

  /// Reads the index, split and label files; augmented variants are added to
  /// the training side only.
  static TrainingData load(const std::filesystem::path& root, const ModelConfig& config);
};

/// Regression targets are trained in standardized units.
struct Normalization {
  double mean = 0.0;
  double std = 1.0;
};

/// Encoder plus head with everything needed to turn one example into outputs.
class Model {
 public:
  Model(const ModelConfig& config, int frame_size, int latent_dim);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  [[nodiscard]] models::ParamList parameters() const;
  /// frames x output_dim logits.
  [[nodiscard]] nn::Var logits(const TrainingData& data, const Example& example) const;
  /// Per-frame outputs in label units: regression values, probabilities or class indices.
  [[nodiscard]] nn::Matrix predict(const TrainingData& data, const Example& example) const;
  [[nodiscard]] nn::Matrix predict_latents(const nn::Matrix& latents) const;
  [[nodiscard]] nn::Matrix predict_chunk(const data::VideoChunk& chunk) const;
  /// Converts logits to per-frame outputs in label units.
  [[nodiscard]] nn::Matrix outputs(const nn::Matrix& logits) const;

  Normalization normalization;

  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  ModelConfig config_;
  int frame_size_;
  int latent_dim_;
  std::unique_ptr<models::ResidualCnn> encoder_;
  std::unique_ptr<models::Head> head_;
};

/// Loss of one example in training units. Returns an undefined Var when the
/// lead mask leaves no frame.
nn::Var example_loss(const Model& model, const nn::Var& logits, const Example& example);

struct EpochEvaluation {
  double metric = 0.0;
  double loss = 0.0;
  bool finite = true;  ///< false when any loss or output was non-finite
};
/// Metric and loss on a set of examples; never touches parameters.
EpochEvaluation evaluate(const Model& model, const TrainingData& data,
                         std::span<const Example> examples);

/// Adam with default betas (0.9, 0.999) and eps 1e-8.
class Adam {
 public:
  Adam(models::ParamList params, double learning_rate);
  /// Gradients are multiplied by `grad_scale` before the update.
  void step(double grad_scale = 1.0);
  void zero_grad();

 private:
  models::ParamList params_;
  double lr_;
  std::vector<nn::Matrix> m_;
  std::vector<nn::Matrix> v_;
  long long t_ = 0;
};

/// A micro-batch loss above this, in training units, counts as divergence like a
/// non-finite one. Regression targets are standardized, so sane losses are O(1).
inline constexpr double kDivergenceLoss = 1e6;

struct TrainOptions {
  /// Checkpoints go under this directory when set.
  std::optional<std::filesystem::path> run_dir;
  std::function<void(int epoch, double metric)> on_epoch;
};

RunResult train_one(const ModelConfig& config, const TrainingData& data,
                    const TrainOptions& options = {});
/// Trains and also hands back the final parameters.
RunResult train_one(const ModelConfig& config, const TrainingData& data, const TrainOptions& options,
                    std::unique_ptr<Model>& trained);

// ---------------------------------------------------------------------------
// Grid

inline constexpr std::array<double, 2> kGridLearningRates = {1e-3, 1e-5};

/// encoder x head x batch size x learning rate in declaration order, per attribute.
std::vector<ModelConfig> grid_configs(std::span<const data::Attribute> attributes,
                                      const ModelConfig& base,
                                      std::span<const double> learning_rates = kGridLearningRates);

struct GridOptions {
  std::filesystem::path out_dir;
  /// Result tables only cover the default pair.
  std::vector<double> learning_rates{kGridLearningRates.begin(), kGridLearningRates.end()};
  bool resume = false;
  int parallel = 1;
  std::function<void(const RunResult&)> on_result;
};

/// Runs every grid config, persisting `runs/<id>.json` after each run. With
/// `resume`, runs whose result file exists are loaded instead of retrained.
std::vector<RunResult> run_grid(std::span<const data::Attribute> attributes,
                                const ModelConfig& base, const std::filesystem::path& dataset_root,
                                const GridOptions& options);

std::vector<RunResult> load_results(const std::filesystem::path& out_dir);

}  // namespace dashkin::train
