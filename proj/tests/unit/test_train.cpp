#include "dashkin/error.hpp"
#include "dashkin/train.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace dashkin::train {
namespace {

using data::Attribute;
using models::EncoderKind;
using models::HeadKind;

constexpr int kFrames = 10;
constexpr int kDims = 4;
constexpr int kSize = 8;

models::ModelScale toy_scale() {
  models::ModelScale s;
  s.latent_dim = kDims;
  s.hidden = 8;
  s.channel_plan = {3, 4};
  s.block_plan = {1, 1};
  s.attention_heads = 2;
  s.feed_forward = 8;
  return s;
}

ModelConfig toy_config(Attribute attribute = Attribute::speed, HeadKind head = HeadKind::gru) {
  ModelConfig c;
  c.attribute = attribute;
  c.encoder = EncoderKind::external_latents;
  c.head = head;
  c.augmentation = Augmentation::none;
  c.epochs = 3;
  c.scale = toy_scale();
  c.seed = 1;
  return c;
}

/// Latent rows drawn from N(0, 1); labels are simple functions of them, and the
/// lead is present exactly where the first latent coordinate is positive.
void write_toy_dataset(const std::filesystem::path& root, int n_train, int n_val,
                       std::uint64_t seed = 3) {
  const data::DatasetLayout layout(root);
  layout.create_directories();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<data::ChunkInfo> infos;
  data::DatasetSplit split;
  for (int k = 0; k < n_train + n_val; ++k) {
    const std::string id = "c" + std::to_string(k);
    models::LatentSequence seq;
    seq.chunk_id = id;
    seq.values.resize(kFrames, kDims);
    auto track = dashkin::testing::make_track(id, std::vector<double>(kFrames),
                                              std::vector<double>(kFrames));
    for (int f = 0; f < kFrames; ++f) {
      for (int d = 0; d < kDims; ++d) {
        seq.values(f, d) = static_cast<float>(normal(rng));
      }
      const double z0 = seq.values(f, 0);
      const double z1 = seq.values(f, 1);
      track.speed[f] = 50.0 + 10.0 * z1;
      track.yaw[f] = seq.values(f, 2);
      if (z0 > 0) {
        track.lead_present[f] = 1.0;
        track.lead_distance[f] = 30.0 + 5.0 * z1;
        track.lead_rel_speed[f] = 8.0 * seq.values(f, 3);
      }
    }
    models::write_latents(seq, layout.latent_path(id));
    auto flipped = seq;
    flipped.values.col(2) *= -1.0f;
    models::write_latents(flipped, layout.latent_path(id, "flip"));
    data::write_label_file(track, layout.label_path(id));
    auto chunk = data::VideoChunk::zeros(id, kFrames, kSize, kSize);
    for (auto& b : chunk.data) {
      b = static_cast<std::uint8_t>(rng());
    }
    data::write_chunk_file(chunk, layout.chunk_path(id));
    infos.push_back({id, k < n_train ? "train_drive" : "val_drive", 0.0, 2.0});
    (k < n_train ? split.train_ids : split.val_ids).push_back(id);
  }
  layout.write_index(infos);
  layout.write_split(split);
}

std::vector<nn::Matrix> snapshot(const models::ParamList& params) {
  std::vector<nn::Matrix> out;
  for (const auto& p : params) {
    out.push_back(p.var.value());
  }
  return out;
}

TEST(Metrics, MseAndAccuracyExamples) {
  const std::vector<double> p{0, 0};
  const std::vector<double> y{2, 4};
  EXPECT_EQ(mse(p, y), 10.0);
  EXPECT_EQ(mse(p, y, {true, false}), 4.0);
  EXPECT_TRUE(std::isnan(mse(p, y, {false, false})));
  const std::vector<double> prob{0.9, 0.2, 0.6, 0.5};
  const std::vector<double> lab{1, 0, 0, 1};
  EXPECT_DOUBLE_EQ(accuracy(prob, lab), 0.75);
  const std::vector<int> pc{0, 1, 2};
  const std::vector<int> lc{0, 2, 2};
  EXPECT_DOUBLE_EQ(class_accuracy(pc, lc), 2.0 / 3.0);
  EXPECT_THROW((void)mse(p, std::vector<double>{1.0}), DimensionError);
}

TEST(Config, EffectiveBatchIsPerWorkerTimesWorkers) {
  ModelConfig c;
  c.batch_size = 1;
  EXPECT_EQ(effective_batch(c), 2);
  c.batch_size = 2;
  EXPECT_EQ(effective_batch(c), 4);
  c.workers_per_node = 1;
  EXPECT_EQ(effective_batch(c), 2);
}

TEST(Config, ValidationRules) {
  auto c = toy_config(Attribute::speed);
  c.augmentation = Augmentation::reverse;
  EXPECT_THROW(c.validate(), InvalidTargetError);
  c.attribute = Attribute::yaw;
  c.augmentation = Augmentation::both;
  EXPECT_THROW(c.validate(), InvalidTargetError);
  c.attribute = Attribute::lead_rel_speed;
  EXPECT_THROW(c.validate(), InvalidTargetError);
  c.attribute = Attribute::lead_distance;
  EXPECT_NO_THROW(c.validate());
  c.attribute = Attribute::lead_present;
  EXPECT_NO_THROW(c.validate());

  auto d = toy_config();
  d.rel_speed_mode = RelSpeedMode::three_class;
  EXPECT_THROW(d.validate(), ConfigError);
  d = toy_config();
  d.learning_rate = 0.0;
  EXPECT_THROW(d.validate(), ConfigError);
  d = toy_config();
  d.encoder = EncoderKind::standin;
  EXPECT_THROW(d.validate(), ConfigError);
}

TEST(Config, JsonRoundTripAndStableId) {
  auto c = toy_config(Attribute::lead_rel_speed, HeadKind::transformer);
  c.rel_speed_mode = RelSpeedMode::three_class;
  c.lead_mask = true;
  const auto back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.id(), c.id());
  auto other = c;
  other.learning_rate = 1e-5;
  EXPECT_NE(other.id(), c.id());
  EXPECT_THROW((void)ModelConfig::from_json("{"), FormatError);
}

TEST(Grid, CardinalityAndOrder) {
  const std::array<Attribute, 1> one{Attribute::speed};
  const auto g = grid_configs(one, ModelConfig{});
  ASSERT_EQ(g.size(), 24u);
  EXPECT_EQ(g[0].encoder, EncoderKind::residual_cnn);
  EXPECT_EQ(g[0].head, HeadKind::baseline);
  EXPECT_EQ(g[0].batch_size, 1);
  EXPECT_EQ(g[0].learning_rate, 1e-3);
  EXPECT_EQ(g[1].learning_rate, 1e-5);
  EXPECT_EQ(g[2].batch_size, 2);
  EXPECT_EQ(g[4].head, HeadKind::gru);
  EXPECT_EQ(g[12].encoder, EncoderKind::external_latents);
  const auto all = grid_configs(data::kAllAttributes, ModelConfig{});
  EXPECT_EQ(all.size(), 120u);
  std::set<std::string> ids;
  for (const auto& c : all) {
    ids.insert(c.id());
  }
  EXPECT_EQ(ids.size(), 120u);
}

TEST(Grid, LearningRateAxisIsConfigurable) {
  const std::array<Attribute, 1> attrs{Attribute::yaw};
  const std::array<double, 3> lrs{1e-2, 1e-3, 1e3};
  const auto configs = grid_configs(attrs, toy_config(), lrs);
  ASSERT_EQ(configs.size(), 36u);
  EXPECT_EQ(configs[0].learning_rate, 1e-2);
  EXPECT_EQ(configs[2].learning_rate, 1e3);
  EXPECT_EQ(configs[3].batch_size, 2);
  EXPECT_EQ(grid_configs(attrs, toy_config()).back().learning_rate, 1e-5);
}

TEST(Data, AugmentationAddsTrainingVariantsOnly) {
  dashkin::testing::TempDir dir;
  write_toy_dataset(dir.path(), 4, 2);
  auto c = toy_config(Attribute::lead_distance);
  EXPECT_EQ(TrainingData::load(dir.path(), c).train.size(), 4u);
  c.augmentation = Augmentation::both;
  const auto data = TrainingData::load(dir.path(), c);
  EXPECT_EQ(data.train.size(), 12u);
  EXPECT_EQ(data.val.size(), 2u);
  EXPECT_EQ(data.frames, kFrames);
  EXPECT_EQ(data.latent_dim, kDims);
  EXPECT_EQ(data.frame_size, kSize);
  for (const auto& e : data.val) {
    EXPECT_FALSE(e.flipped || e.reversed);
  }
}

TEST(Loss, LeadMaskMatchesHandMaskedLoss) {
  dashkin::testing::TempDir dir;
  write_toy_dataset(dir.path(), 2, 1);
  auto c = toy_config(Attribute::lead_distance);
  c.lead_mask = true;
  const auto data = TrainingData::load(dir.path(), c);
  Model model(c, data.frame_size, data.latent_dim);
  model.normalization = {30.0, 5.0};
  const auto& ex = data.train[0];
  const auto& track = ex.labels.track;
  ASSERT_GT(std::count(track.lead_present.begin(), track.lead_present.end(), 1.0), 0);
  ASSERT_GT(std::count(track.lead_present.begin(), track.lead_present.end(), 0.0), 0);
  auto params = model.parameters();

  for (auto& p : params) {
    p.var.zero_grad();
  }
  const nn::Var masked = example_loss(model, model.logits(data, ex), ex);
  const double masked_value = masked.item();
  nn::backward(masked);
  const auto masked_grads = [&] {
    std::vector<nn::Matrix> g;
    for (const auto& p : params) {
      g.push_back(p.var.grad());
    }
    return g;
  }();

  for (auto& p : params) {
    p.var.zero_grad();
  }
  const nn::Var logits = model.logits(data, ex);
  nn::Var sum;
  int n = 0;
  for (std::size_t i = 0; i < track.size(); ++i) {
    if (track.lead_present[i] != 1.0) {
      continue;
    }
    const double z = (track.lead_distance[i] - 30.0) / 5.0;
    const nn::Var d = nn::add_scalar(nn::slice_rows(logits, static_cast<nn::Index>(i), 1), -z);
    const nn::Var sq = nn::hadamard(d, d);
    sum = sum.defined() ? nn::add(sum, sq) : sq;
    ++n;
  }
  const nn::Var hand = nn::scale(nn::sum(sum), 1.0 / n);
  EXPECT_NEAR(hand.item(), masked_value, 1e-12);
  nn::backward(hand);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ASSERT_EQ(params[i].var.grad().size(), masked_grads[i].size()) << params[i].name;
    EXPECT_LT((params[i].var.grad() - masked_grads[i]).cwiseAbs().maxCoeff(), 1e-12)
        << params[i].name;
  }

  Example absent = ex;
  std::fill(absent.labels.track.lead_present.begin(), absent.labels.track.lead_present.end(), 0.0);
  EXPECT_FALSE(example_loss(model, model.logits(data, absent), absent).defined());
}

TEST(Training, HugeLearningRateDivergesWithNanTail) {
  dashkin::testing::TempDir dir;
  write_toy_dataset(dir.path(), 6, 2);
  for (auto head : {HeadKind::baseline, HeadKind::gru, HeadKind::transformer}) {
    auto c = toy_config(Attribute::speed, head);
    c.learning_rate = 1e3;
    c.epochs = 6;
    const auto data = TrainingData::load(dir.path(), c);
    const auto r = train_one(c, data);
    EXPECT_TRUE(r.diverged) << models::to_string(head);
    EXPECT_TRUE(std::isnan(r.final_metric));
    ASSERT_EQ(r.val_metric_per_epoch.size(), 6u);
    const auto first_nan =
        std::find_if(r.val_metric_per_epoch.begin(), r.val_metric_per_epoch.end(),
                     [](double v) { return std::isnan(v); });
    ASSERT_NE(first_nan, r.val_metric_per_epoch.end());
    EXPECT_TRUE(std::all_of(first_nan, r.val_metric_per_epoch.end(),
                            [](double v) { return std::isnan(v); }));
  }
}

TEST(Training, SeededRunsAreReproducible) {
  dashkin::testing::TempDir dir;
  write_toy_dataset(dir.path(), 6, 2);
  auto c = toy_config(Attribute::speed, HeadKind::gru);
  c.epochs = 4;
  const auto data = TrainingData::load(dir.path(), c);
  const auto a = train_one(c, data);
  const auto b = train_one(c, data);
  EXPECT_EQ(a.val_metric_per_epoch, b.val_metric_per_epoch);
  EXPECT_EQ(a.train_loss_per_epoch, b.train_loss_per_epoch);
  EXPECT_FALSE(a.diverged);
  c.seed = 2;
  EXPECT_NE(train_one(c, data).val_metric_per_epoch, a.val_metric_per_epoch);
}

TEST(Training, EvaluateLeavesParametersUntouched) {
  dashkin::testing::TempDir dir;
  write_toy_dataset(dir.path(), 3, 3);
  const auto c = toy_config(Attribute::yaw, HeadKind::transformer);
  const auto data = TrainingData::load(dir.path(), c);
  const Model model(c, data.frame_size, data.latent_dim);
  const auto before = snapshot(model.parameters());
  const auto e1 = evaluate(model, data, data.val);
  const auto e2 = evaluate(model, data, data.val);
  EXPECT_EQ(snapshot(model.parameters()), before);
  EXPECT_EQ(e1.metric, e2.metric);
  EXPECT_TRUE(e1.finite);
}

TEST(Training, CnnEncoderTrainsEndToEnd) {
  dashkin::testing::TempDir dir;
  write_toy_dataset(dir.path(), 3, 1);
  auto c = toy_config(Attribute::speed, HeadKind::baseline);
  c.encoder = EncoderKind::residual_cnn;
  c.augmentation = Augmentation::horizontal_flip;
  c.epochs = 2;
  const auto data = TrainingData::load(dir.path(), c);
  const auto r = train_one(c, data);
  EXPECT_FALSE(r.diverged) << r.error;
  EXPECT_TRUE(std::isfinite(r.final_metric));
}

TEST(Training, SeparableLeadPresenceIsLearned) {
  dashkin::testing::TempDir dir;
  write_toy_dataset(dir.path(), 20, 6);
  auto c = toy_config(Attribute::lead_present, HeadKind::baseline);
  c.epochs = 50;
  const auto data = TrainingData::load(dir.path(), c);
  const auto r = train_one(c, data);
  EXPECT_GT(r.final_metric, 0.95);
}

TEST(Training, ThreeClassRelativeSpeed) {
  dashkin::testing::TempDir dir;
  write_toy_dataset(dir.path(), 6, 2);
  auto c = toy_config(Attribute::lead_rel_speed, HeadKind::gru);
  c.rel_speed_mode = RelSpeedMode::three_class;
  c.lead_mask = true;
  const auto data = TrainingData::load(dir.path(), c);
  const auto r = train_one(c, data);
  EXPECT_TRUE(c.metric_is_accuracy());
  EXPECT_GE(r.final_metric, 0.0);
  EXPECT_LE(r.final_metric, 1.0);
}

TEST(Training, CheckpointReloadsToSamePredictions) {
  dashkin::testing::TempDir dir;
  write_toy_dataset(dir.path(), 4, 2);
  auto c = toy_config(Attribute::speed, HeadKind::gru);
  c.epochs = 2;
  c.checkpoint_every = 1;
  const auto data = TrainingData::load(dir.path(), c);
  std::unique_ptr<Model> trained;
  TrainOptions opts;
  opts.run_dir = dir / "run";
  const auto r = train_one(c, data, opts, trained);
  EXPECT_TRUE(std::filesystem::exists(dir / "run/checkpoints/epoch_0002.dkck"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run/checkpoints/best.dkck"));
  trained->save(dir / "final.dkck");
  const auto loaded = Model::load(dir / "final.dkck");
  EXPECT_EQ(loaded.predict(data, data.val[0]), trained->predict(data, data.val[0]));
  EXPECT_EQ(loaded.normalization.mean, trained->normalization.mean);
  EXPECT_GE(r.best_epoch, 0);
}

TEST(Results, JsonRoundTripKeepsNan) {
  RunResult r;
  r.config = toy_config();
  r.val_metric_per_epoch = {3.0, std::numeric_limits<double>::quiet_NaN()};
  r.val_loss_per_epoch = {1.0, std::numeric_limits<double>::quiet_NaN()};
  r.train_loss_per_epoch = {2.0, std::numeric_limits<double>::quiet_NaN()};
  r.final_metric = std::numeric_limits<double>::quiet_NaN();
  r.diverged = true;
  const auto back = RunResult::from_json(r.to_json());
  EXPECT_TRUE(back.diverged);
  EXPECT_TRUE(std::isnan(back.final_metric));
  ASSERT_EQ(back.val_metric_per_epoch.size(), 2u);
  EXPECT_EQ(back.val_metric_per_epoch[0], 3.0);
  EXPECT_TRUE(std::isnan(back.val_metric_per_epoch[1]));
  EXPECT_EQ(back.config.id(), r.config.id());
}

TEST(Grid, ResumeLoadsFinishedRuns) {
  dashkin::testing::TempDir dir;
  write_toy_dataset(dir.path() / "data", 3, 1);
  auto base = toy_config();
  base.epochs = 1;
  const std::array<Attribute, 1> attrs{Attribute::yaw};
  GridOptions opts;
  opts.out_dir = dir / "out";
  const auto first = run_grid(attrs, base, dir / "data", opts);
  ASSERT_EQ(first.size(), 24u);
  for (const auto& r : first) {
    EXPECT_TRUE(r.error.empty()) << r.error;
  }
  EXPECT_EQ(load_results(opts.out_dir).size(), 24u);

  // Tamper with one stored result; resuming must load it rather than retrain.
  auto stored = first[5];
  stored.final_metric = 12345.0;
  const auto path = opts.out_dir / "runs" / (stored.config.id() + ".json");
  dashkin::testing::write_file(path, stored.to_json());
  opts.resume = true;
  const auto resumed = run_grid(attrs, base, dir / "data", opts);
  ASSERT_EQ(resumed.size(), 24u);
  EXPECT_EQ(resumed[5].final_metric, 12345.0);
  EXPECT_EQ(resumed[0].val_metric_per_epoch, first[0].val_metric_per_epoch);
}

}  // namespace
}  // namespace dashkin::train
