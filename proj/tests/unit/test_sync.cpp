#include "dashkin/error.hpp"
#include "dashkin/sync.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace dashkin::sync {
namespace {

std::vector<cansig::SignalSample> samples(std::initializer_list<std::pair<double, double>> tv) {
  std::vector<cansig::SignalSample> out;
  for (const auto& [t, v] : tv) {
    out.push_back({t, "x", v});
  }
  return out;
}

TEST(UsableBlocks, OverlapExamples) {
  const std::vector<TimeInterval> v1{{0, 100}};
  const std::vector<TimeInterval> c1{{50, 150}};
  EXPECT_EQ(usable_blocks(v1, c1, 10), (std::vector<TimeInterval>{{50, 100}}));
  const std::vector<TimeInterval> c2{{200, 300}};
  EXPECT_TRUE(usable_blocks(v1, c2, 10).empty());
}

TEST(UsableBlocks, DropsShortPiecesAgainstBruteForce) {
  const std::vector<TimeInterval> video{{0, 60}, {70, 200}};
  const std::vector<TimeInterval> can{{30, 120}};
  const auto got = usable_blocks(video, can, 40);
  EXPECT_EQ(got, (std::vector<TimeInterval>{{70, 120}}));
  const auto oracle = dashkin::testing::brute_force_usable(video, can, 40);
  ASSERT_EQ(oracle.size(), got.size());
  EXPECT_NEAR(oracle[0].start, got[0].start, 0.1);
  EXPECT_NEAR(oracle[0].end, got[0].end, 0.1);
}

TEST(UsableBlocks, RandomCoveragesMatchBruteForceAndCommute) {
  std::mt19937_64 rng(3);
  auto random_cover = [&rng]() {
    std::vector<TimeInterval> out;
    double t = std::uniform_int_distribution<int>(0, 20)(rng);
    const int n = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int i = 0; i < n; ++i) {
      const double len = std::uniform_int_distribution<int>(5, 80)(rng);
      out.push_back({t, t + len});
      t += len + std::uniform_int_distribution<int>(1, 30)(rng);
    }
    return out;
  };
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_cover();
    const auto b = random_cover();
    const auto got = usable_blocks(a, b, 20);
    EXPECT_EQ(got, usable_blocks(b, a, 20));
    const auto oracle = dashkin::testing::brute_force_usable(a, b, 20);
    ASSERT_EQ(oracle.size(), got.size()) << trial;
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_NEAR(oracle[i].start, got[i].start, 0.1 + 1e-9);
      EXPECT_NEAR(oracle[i].end, got[i].end, 0.1 + 1e-9);
      if (i > 0) {
        EXPECT_GE(got[i].start, got[i - 1].end);
      }
    }
  }
}

TEST(ChunkBlock, FloorDivisionAndAlignment) {
  const auto g = chunk_block({0, 130}, 40);
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g[0].t0, 0);
  EXPECT_EQ(g[1].t0, 40);
  EXPECT_EQ(g[2].t0, 80);
  EXPECT_TRUE(chunk_block({0, 39.9}, 40).empty());
  const auto h = chunk_block({5, 205}, 40);
  ASSERT_EQ(h.size(), 5u);
  for (std::size_t k = 0; k < h.size(); ++k) {
    EXPECT_DOUBLE_EQ(h[k].t0, 5.0 + 40.0 * static_cast<double>(k));
    EXPECT_EQ(h[k].n, 200u);
    EXPECT_LE(h[k].t0 + h[k].duration(), 205.0 + 1e-9);
  }
}

TEST(ResampleLinear, ConstantSeriesIsExact) {
  const auto s = samples({{0.0, 7.0}, {13.0, 7.0}, {41.0, 7.0}});
  const auto out = resample_linear(s, LabelGrid{0.0, 5.0, 200});
  ASSERT_EQ(out.size(), 200u);
  for (double v : out) {
    EXPECT_EQ(v, 7.0);
  }
}

TEST(ResampleLinear, TwoPointDefinition) {
  const auto s = samples({{0.0, 0.0}, {1.0, 10.0}});
  const auto out = resample_linear(s, LabelGrid{0.2, 5.0, 2});
  EXPECT_NEAR(out[0], 2.0, 1e-12);
  EXPECT_NEAR(out[1], 4.0, 1e-12);
}

TEST(ResampleLinear, BooleanSeriesGivesFraction) {
  const auto s = samples({{0.0, 0.0}, {1.0, 1.0}});
  const auto out = resample_linear(s, LabelGrid{0.3, 5.0, 2});
  EXPECT_GT(out[0], 0.0);
  EXPECT_LT(out[0], 1.0);
}

TEST(ResampleLinear, GridBeyondCoverageIsCoverageError) {
  const auto s = samples({{0.0, 0.0}, {10.0, 1.0}});
  EXPECT_THROW((void)resample_linear(s, LabelGrid{0.0, 5.0, 200}), CoverageError);
  EXPECT_THROW((void)resample_linear(s, LabelGrid{-1.0, 5.0, 2}), CoverageError);
}

TEST(ResampleLinear, ExactTimestampsAndIdentityOnGrid) {
  const LabelGrid grid{10.0, 5.0, 200};
  std::vector<double> t(200);
  std::vector<double> v(200);
  std::mt19937_64 rng(1);
  for (std::size_t k = 0; k < 200; ++k) {
    t[k] = grid.time_at(k);
    v[k] = std::normal_distribution<double>()(rng);
  }
  EXPECT_EQ(resample_linear(t, v, grid), v);
}

TEST(ResampleLinear, NoOvershootOnRandomSeries) {
  std::mt19937_64 rng(9);
  std::vector<double> t;
  std::vector<double> v;
  double now = -0.5;
  while (now < 41.0) {
    t.push_back(now);
    v.push_back(std::uniform_real_distribution<double>(-50, 50)(rng));
    now += std::uniform_real_distribution<double>(0.01, 0.7)(rng);
  }
  const LabelGrid grid{0.0, 5.0, 200};
  const auto out = resample_linear(t, v, grid);
  for (std::size_t k = 0; k < grid.n; ++k) {
    const double g = grid.time_at(k);
    const auto hi = static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), g) - t.begin());
    const std::size_t lo = t[hi] == g ? hi : hi - 1;
    EXPECT_GE(out[k], std::min(v[lo], v[hi]) - 1e-12);
    EXPECT_LE(out[k], std::max(v[lo], v[hi]) + 1e-12);
  }
}

TEST(CoverageIntervals, SplitsOnGaps) {
  const auto s = samples({{0, 0}, {0.5, 0}, {1.0, 0}, {5.0, 0}, {5.5, 0}, {9.0, 0}});
  const auto c = coverage_intervals(s, 1.0);
  EXPECT_EQ(c, (std::vector<TimeInterval>{{0, 1.0}, {5.0, 5.5}}));
}

TEST(Manifest, ResolvesRelativePaths) {
  dashkin::testing::TempDir dir;
  dashkin::testing::write_file(
      dir / "m.json",
      R"([{"video_path": "v.avi", "video_start_time_s": 12.5, "video_fps": 30, "can_csv_path": "/abs/c.csv"}])");
  const auto m = load_manifest(dir / "m.json");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].video_path, dir.path() / "v.avi");
  EXPECT_EQ(m[0].can_csv_path, std::filesystem::path("/abs/c.csv"));
  EXPECT_EQ(m[0].video_start_time_s, 12.5);
  dashkin::testing::write_file(dir / "bad.json", R"([{"video_path": "v.avi"}])");
  EXPECT_THROW(load_manifest(dir / "bad.json"), FormatError);
}

}  // namespace
}  // namespace dashkin::sync
