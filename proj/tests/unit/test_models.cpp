#include "dashkin/error.hpp"
#include "dashkin/models.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace dashkin::models {

void PrintTo(HeadKind k, std::ostream* os) { *os << to_string(k); }
void PrintTo(OutputKind k, std::ostream* os) { *os << to_string(k); }

namespace {

using dashkin::testing::gradient_check;
using dashkin::testing::random_matrix;

data::VideoChunk noise_chunk(std::uint32_t frames, std::uint32_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto c = data::VideoChunk::zeros("n", frames, size, size);
  for (auto& b : c.data) {
    b = static_cast<std::uint8_t>(rng());
  }
  return c;
}

EncoderSpec toy_encoder() {
  EncoderSpec s;
  s.channel_plan = {3, 4};
  s.block_plan = {1, 2};
  s.latent_dim = 5;
  return s;
}

HeadSpec toy_head(HeadKind kind, OutputKind output = OutputKind::scalar_regression) {
  HeadSpec s;
  s.kind = kind;
  s.latent_dim = 6;
  s.hidden = 4;
  s.layers = 2;
  s.attention_heads = 2;
  s.feed_forward = 6;
  s.output = output;
  return s;
}

/// Rows of `m` reordered so that row i of the result is row perm[i] of `m`.
Matrix permute_rows(const Matrix& m, const std::vector<int>& perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(perm[i]);
  }
  return out;
}

TEST(ResidualCnn, ParameterCountMatchesHandCount) {
  // stage 3ch: conv 3*3*9+3, projection 3*3+3
  // stage 4ch: conv 4*3*9+4, projection 4*3+4, conv 4*4*9+4
  // readout 4*5+5
  const std::size_t expected = (84 + 12) + (112 + 16) + 148 + 25;
  EXPECT_EQ(ResidualCnn::analytic_parameter_count(toy_encoder()), expected);
  std::mt19937_64 rng(1);
  const ResidualCnn cnn(toy_encoder(), 8, rng);
  ParamList params;
  cnn.collect(params, "");
  EXPECT_EQ(count_parameters(params), expected);
}

TEST(ResidualCnn, FullPlanHasFourteenBlocksAndCountsAgree) {
  const EncoderSpec full;
  std::mt19937_64 rng(2);
  const ResidualCnn cnn(full, 64, rng);
  EXPECT_EQ(cnn.block_count(), 14u);
  ParamList params;
  cnn.collect(params, "");
  EXPECT_EQ(count_parameters(params), ResidualCnn::analytic_parameter_count(full));
}

TEST(ResidualCnn, OneLatentRowPerFrame) {
  EncoderSpec spec;
  const auto desk = ModelScale::desk();
  spec.channel_plan = desk.channel_plan;
  spec.block_plan = desk.block_plan;
  spec.latent_dim = desk.latent_dim;
  std::mt19937_64 rng(3);
  const ResidualCnn cnn(spec, 16, rng);
  auto chunk = noise_chunk(200, 16, 4);
  // Frames 7 and 130 are identical, so their latent rows must be too.
  std::copy_n(chunk.data.begin() + static_cast<std::ptrdiff_t>(7 * chunk.frame_bytes()),
              chunk.frame_bytes(),
              chunk.data.begin() + static_cast<std::ptrdiff_t>(130 * chunk.frame_bytes()));
  const Matrix z = cnn.encode(chunk).value();
  EXPECT_EQ(z.rows(), 200);
  EXPECT_EQ(z.cols(), desk.latent_dim);
  EXPECT_TRUE(z.allFinite());
  EXPECT_EQ(z.row(7), z.row(130));
  EXPECT_NE(z.row(7), z.row(8));
}

TEST(ResidualCnn, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  const ResidualCnn cnn(toy_encoder(), 8, rng);
  const auto chunk = noise_chunk(4, 8, 6);
  const Matrix weights = random_matrix(4, 5, rng);
  ParamList params;
  cnn.collect(params, "cnn.");
  const auto report = gradient_check(params, [&] {
    return nn::sum(nn::hadamard(cnn.encode(chunk), Var::constant(weights)));
  });
  EXPECT_GT(report.checked, 20u);
  EXPECT_EQ(report.failures, 0u) << report.worst_name << " " << report.worst_relative;
}

TEST(StandinEncoder, DeterministicAndContentSensitive) {
  const StandinEncoder a(16, 8, 7);
  const StandinEncoder b(16, 8, 7);
  const StandinEncoder other(16, 8, 8);
  const auto chunk = noise_chunk(5, 16, 1);
  EXPECT_EQ(a.encode(chunk), b.encode(chunk));
  EXPECT_FALSE(a.encode(chunk) == other.encode(chunk));
  const auto z = a.encode(chunk).values;
  for (Eigen::Index i = 1; i < z.rows(); ++i) {
    EXPECT_NE(z.row(i), z.row(0));
  }
  const auto black = a.encode(data::VideoChunk::zeros("k", 5, 16, 16)).values;
  for (Eigen::Index i = 1; i < black.rows(); ++i) {
    EXPECT_EQ(black.row(i), black.row(0));
  }
  EXPECT_THROW((void)a.encode(noise_chunk(2, 12, 1)), DimensionError);
}

TEST(Latents, FileRoundTripAndDimensionCheck) {
  dashkin::testing::TempDir dir;
  const data::DatasetLayout layout(dir.path());
  layout.create_directories();
  LatentSequence seq;
  seq.chunk_id = "c0";
  seq.values.resize(200, 512);
  std::mt19937_64 rng(9);
  for (Eigen::Index i = 0; i < seq.values.size(); ++i) {
    seq.values.data()[i] = static_cast<float>(std::normal_distribution<double>()(rng));
  }
  write_latents(seq, layout.latent_path("c0"));
  const LatentStore store(layout, 200, 512);
  EXPECT_TRUE(store.contains("c0"));
  EXPECT_FALSE(store.contains("c0", "flip"));
  EXPECT_EQ(store.load("c0"), seq);

  LatentSequence narrow;
  narrow.values = LatentSequence::Values::Zero(200, 511);
  write_latents(narrow, layout.latent_path("c1"));
  EXPECT_THROW((void)store.load("c1"), DimensionError);
  EXPECT_THROW((void)store.load("missing"), IoError);
}

TEST(Heads, OutputShapes) {
  std::mt19937_64 rng(10);
  const Var z = Var::constant(random_matrix(7, 6, rng));
  for (auto kind : {HeadKind::baseline, HeadKind::gru, HeadKind::transformer}) {
    for (auto out : {OutputKind::scalar_regression, OutputKind::binary, OutputKind::three_class}) {
      const auto head = make_head(toy_head(kind, out), rng);
      const Matrix y = head->forward(z).value();
      EXPECT_EQ(y.rows(), 7);
      EXPECT_EQ(y.cols(), out == OutputKind::three_class ? 3 : 1);
    }
  }
}

TEST(Heads, BaselineIsPermutationEquivariant) {
  std::mt19937_64 rng(11);
  const auto head = make_head(toy_head(HeadKind::baseline), rng);
  const Matrix z = random_matrix(9, 6, rng);
  const std::vector<int> perm{3, 0, 8, 1, 2, 7, 6, 5, 4};
  const Matrix y = head->forward(Var::constant(z)).value();
  const Matrix yp = head->forward(Var::constant(permute_rows(z, perm))).value();
  EXPECT_LT((yp - permute_rows(y, perm)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Heads, TransformerEquivarianceDependsOnPositionEncoding) {
  std::mt19937_64 rng(12);
  const Matrix z = random_matrix(6, 6, rng);
  const std::vector<int> perm{5, 2, 0, 1, 4, 3};
  auto spec = toy_head(HeadKind::transformer);
  spec.position_encoding = false;
  const auto plain = make_head(spec, rng);
  const Matrix y = plain->forward(Var::constant(z)).value();
  const Matrix yp = plain->forward(Var::constant(permute_rows(z, perm))).value();
  EXPECT_LT((yp - permute_rows(y, perm)).cwiseAbs().maxCoeff(), 1e-10);

  spec.position_encoding = true;
  const auto positional = make_head(spec, rng);
  const Matrix w = positional->forward(Var::constant(z)).value();
  const Matrix wp = positional->forward(Var::constant(permute_rows(z, perm))).value();
  EXPECT_GT((wp - permute_rows(w, perm)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Heads, GruDependsOnOrderAndIsCausal) {
  std::mt19937_64 rng(13);
  const auto head = make_head(toy_head(HeadKind::gru), rng);
  const Matrix z = random_matrix(6, 6, rng);
  const std::vector<int> perm{5, 4, 3, 2, 1, 0};
  const Matrix y = head->forward(Var::constant(z)).value();
  const Matrix yp = head->forward(Var::constant(permute_rows(z, perm))).value();
  EXPECT_GT((yp - permute_rows(y, perm)).cwiseAbs().maxCoeff(), 1e-6);
  Matrix later = z;
  later.row(5).setConstant(3.0);
  const Matrix yl = head->forward(Var::constant(later)).value();
  EXPECT_EQ(yl.topRows(5), y.topRows(5));
}

TEST(Heads, ActivationsAreProbabilities) {
  std::mt19937_64 rng(14);
  const Matrix logits = random_matrix(20, 3, rng, 10.0);
  const Matrix p = activate(logits.leftCols(1), OutputKind::binary);
  EXPECT_TRUE((p.array() > 0.0).all() && (p.array() < 1.0).all());
  const Matrix s = activate(logits, OutputKind::three_class);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    EXPECT_NEAR(s.row(i).sum(), 1.0, 1e-12);
  }
  EXPECT_EQ(activate(logits, OutputKind::scalar_regression), logits);
}

TEST(Heads, SinusoidalTable) {
  const Matrix p = sinusoidal_positions(5, 4);
  EXPECT_EQ(p(0, 0), 0.0);
  EXPECT_EQ(p(0, 1), 1.0);
  EXPECT_NEAR(p(3, 0), std::sin(3.0), 1e-12);
  EXPECT_NEAR(p(3, 3), std::cos(3.0 / 100.0), 1e-12);
}

class HeadGradient : public ::testing::TestWithParam<std::tuple<HeadKind, OutputKind>> {};

TEST_P(HeadGradient, MatchesFiniteDifferences) {
  const auto [kind, output] = GetParam();
  std::mt19937_64 rng(15);
  const auto head = make_head(toy_head(kind, output), rng);
  const Matrix z = random_matrix(4, 6, rng);
  ParamList params;
  head->collect(params, "head.");
  std::function<nn::Var()> loss;
  if (output == OutputKind::scalar_regression) {
    const std::vector<double> target{0.5, -1.0, 2.0, 0.0};
    loss = [&, target] { return nn::mse_loss(head->forward(Var::constant(z)), target); };
  } else if (output == OutputKind::binary) {
    const std::vector<double> target{1.0, 0.0, 0.3, 1.0};
    const std::vector<double> weight{1.0, 0.0, 1.0, 1.0};
    loss = [&, target, weight] {
      return nn::bce_with_logits_loss(head->forward(Var::constant(z)), target, weight);
    };
  } else {
    const std::vector<int> target{0, 2, 1, 2};
    loss = [&, target] { return nn::cross_entropy_loss(head->forward(Var::constant(z)), target); };
  }
  const auto report = gradient_check(params, loss);
  EXPECT_GT(report.checked, 20u);
  EXPECT_EQ(report.failures, 0u) << report.worst_name << " " << report.worst_relative;
}

INSTANTIATE_TEST_SUITE_P(
    AllHeads, HeadGradient,
    ::testing::Combine(::testing::Values(HeadKind::baseline, HeadKind::gru, HeadKind::transformer),
                       ::testing::Values(OutputKind::scalar_regression, OutputKind::binary,
                                         OutputKind::three_class)),
    [](const ::testing::TestParamInfo<HeadGradient::ParamType>& info) {
      return std::string(to_string(std::get<0>(info.param))) + "_" +
             std::string(to_string(std::get<1>(info.param)));
    });

TEST(Specs, RejectInvalidShapes) {
  auto t = toy_head(HeadKind::transformer);
  t.attention_heads = 3;
  EXPECT_THROW(t.validate(), ConfigError);
  auto e = toy_encoder();
  e.block_plan.pop_back();
  EXPECT_THROW(e.validate(), ConfigError);
  EXPECT_THROW((void)head_kind_from_string("lstm"), ConfigError);
  EXPECT_EQ(head_kind_from_string("gru"), HeadKind::gru);
}

}  // namespace
}  // namespace dashkin::models
