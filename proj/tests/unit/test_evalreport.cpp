#include "dashkin/error.hpp"
#include "dashkin/evalreport.hpp"

#include "reference_tables.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

namespace dashkin::report {
namespace {

using data::Attribute;
using dashkin::testing::kNaN;
using models::EncoderKind;
using models::HeadKind;

std::vector<train::RunResult> synthetic_results(Attribute attribute, double base = 100.0) {
  std::vector<train::RunResult> out;
  const std::array<Attribute, 1> attrs{attribute};
  train::ModelConfig cfg;
  int k = 0;
  for (const auto& c : train::grid_configs(attrs, cfg)) {
    train::RunResult r;
    r.config = c;
    r.final_metric = base + k++;
    r.val_metric_per_epoch = {r.final_metric + 1, r.final_metric};
    out.push_back(r);
  }
  return out;
}

TEST(BestConfig, PublishedSpeedTable) {
  const auto t = dashkin::testing::to_result_table(dashkin::testing::kSpeedTable, Attribute::speed,
                                                   Direction::min);
  const auto best = best_config(t);
  EXPECT_EQ(best.value, 446.0);
  EXPECT_EQ(best.key, (CellKey{EncoderKind::external_latents, HeadKind::gru, 2, 1e-3}));
}

TEST(BestConfig, PublishedYawTable) {
  const auto t = dashkin::testing::to_result_table(dashkin::testing::kYawTable, Attribute::yaw,
                                                   Direction::min);
  const auto best = best_config(t);
  EXPECT_EQ(best.value, 2.726);
  EXPECT_EQ(best.key, (CellKey{EncoderKind::residual_cnn, HeadKind::gru, 2, 1e-3}));
}

TEST(BestConfig, PublishedLeadPresentTable) {
  const auto t = dashkin::testing::to_result_table(dashkin::testing::kLeadPresentTable,
                                                   Attribute::lead_present, Direction::max);
  const auto best = best_config(t);
  EXPECT_EQ(best.value, 0.781);
  EXPECT_EQ(best.key, (CellKey{EncoderKind::external_latents, HeadKind::gru, 2, 1e-5}));
}

TEST(BestConfig, RemainingPublishedTablesIgnoreNan) {
  const auto ld = dashkin::testing::to_result_table(dashkin::testing::kLeadDistanceTable,
                                                    Attribute::lead_distance, Direction::min);
  EXPECT_EQ(best_config(ld).value, 6874.0);
  const auto ls = dashkin::testing::to_result_table(dashkin::testing::kLeadRelSpeedTable,
                                                    Attribute::lead_rel_speed, Direction::max);
  EXPECT_EQ(best_config(ls).value, 0.881);
}

TEST(BestConfig, InvariantUnderMonotoneRescaling) {
  std::mt19937_64 rng(4);
  for (const auto* printed : {&dashkin::testing::kSpeedTable, &dashkin::testing::kYawTable,
                              &dashkin::testing::kLeadDistanceTable}) {
    const auto t = dashkin::testing::to_result_table(*printed, Attribute::speed, Direction::min);
    const auto best = best_config(t);
    for (int trial = 0; trial < 10; ++trial) {
      const double a = std::uniform_real_distribution<double>(0.1, 3.0)(rng);
      const double b = std::uniform_real_distribution<double>(-50, 50)(rng);
      auto scaled = t;
      for (auto& c : scaled.cells) {
        c = std::isnan(c) ? c : std::exp(a * std::log(c)) + b;
      }
      EXPECT_EQ(best_config(scaled).key, best.key);
    }
  }
}

TEST(BestConfig, TiesAndDegenerateTables) {
  ResultTable t;
  t.cells.fill(kNaN);
  EXPECT_THROW((void)best_config(t, Direction::min), NoFiniteResultError);
  const CellKey only{EncoderKind::external_latents, HeadKind::transformer, 2, 1e-5};
  t.at(only) = 9.0;
  EXPECT_EQ(best_config(t, Direction::min).key, only);
  EXPECT_EQ(best_config(t, Direction::max).key, only);

  t.cells.fill(5.0);
  // Lexicographic on (encoder, head, batch size, learning rate ascending).
  EXPECT_EQ(best_config(t, Direction::min).key,
            (CellKey{EncoderKind::residual_cnn, HeadKind::baseline, 1, 1e-5}));
  const CellKey later{EncoderKind::residual_cnn, HeadKind::gru, 2, 1e-3};
  const CellKey earlier{EncoderKind::residual_cnn, HeadKind::gru, 1, 1e-3};
  t.at(later) = 1.0;
  t.at(earlier) = 1.0;
  EXPECT_EQ(best_config(t, Direction::min).key, earlier);
}

TEST(ConvertUnits, Examples) {
  EXPECT_NEAR(convert_mse_units(446.253), 34.433, 1e-3);
  EXPECT_EQ(convert_mse_units(0.0), 0.0);
  EXPECT_NEAR(convert_mse_units(12.96), 1.0, 1e-15);
  EXPECT_THROW((void)convert_mse_units(-1.0), DomainError);
}

TEST(ConvertUnits, IsLinear) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const double x = std::uniform_real_distribution<double>(0, 1e4)(rng);
    const double a = std::uniform_real_distribution<double>(0, 50)(rng);
    EXPECT_NEAR(convert_mse_units(a * x), a * convert_mse_units(x),
                1e-12 * std::max(1.0, a * convert_mse_units(x)));
  }
}

TEST(BuildTable, CompleteGridAndDivergedCell) {
  auto results = synthetic_results(Attribute::speed);
  results[3].final_metric = kNaN;
  results[3].diverged = true;
  const auto t = build_table(results, Attribute::speed);
  EXPECT_EQ(t.direction, Direction::min);
  EXPECT_EQ(t.title, "Speed (MSE km/h)");
  int nan_cells = 0;
  for (const auto& r : results) {
    const CellKey key{r.config.encoder, r.config.head, r.config.batch_size, r.config.learning_rate};
    if (std::isnan(r.final_metric)) {
      EXPECT_TRUE(std::isnan(t.at(key)));
      ++nan_cells;
    } else {
      EXPECT_EQ(t.at(key), r.final_metric);
    }
  }
  EXPECT_EQ(nan_cells, 1);
  const auto text = format_table_text(t);
  EXPECT_NE(text.find("NaN"), std::string::npos);
  const auto lp = build_table(synthetic_results(Attribute::lead_present, 0.1), Attribute::lead_present);
  EXPECT_EQ(lp.direction, Direction::max);
}

TEST(BuildTable, RunsOutsideTheTableAreIgnored) {
  auto results = synthetic_results(Attribute::speed);
  auto extra = results[0];
  extra.config.learning_rate = 1e3;
  extra.final_metric = kNaN;
  results.push_back(extra);
  const auto t = build_table(results, Attribute::speed);
  EXPECT_TRUE(t.same_cells(build_table(synthetic_results(Attribute::speed), Attribute::speed)));
}

TEST(BuildTable, MissingRunIsNamed) {
  auto results = synthetic_results(Attribute::yaw);
  const auto missing = results[17];
  results.erase(results.begin() + 17);
  try {
    (void)build_table(results, Attribute::yaw);
    FAIL() << "expected IncompleteTableError";
  } catch (const IncompleteTableError& e) {
    const CellKey key{missing.config.encoder, missing.config.head, missing.config.batch_size,
                      missing.config.learning_rate};
    EXPECT_NE(std::string(e.what()).find(describe(key)), std::string::npos) << e.what();
  }
}

TEST(TableCsv, RoundTripKeepsNanPositions) {
  for (const auto* printed : {&dashkin::testing::kSpeedTable, &dashkin::testing::kLeadRelSpeedTable,
                              &dashkin::testing::kYawTable}) {
    const auto t = dashkin::testing::to_result_table(*printed, Attribute::lead_distance,
                                                     Direction::min);
    const auto back = parse_table_csv(format_table_csv(t));
    EXPECT_TRUE(back.same_cells(t));
  }
  EXPECT_THROW((void)parse_table_csv("nope\n"), FormatError);
}

TEST(CurveExport, DivergedTailIsPreservedInData) {
  dashkin::testing::TempDir dir;
  train::RunResult r;
  r.config.attribute = Attribute::speed;
  for (int e = 0; e < 250; ++e) {
    r.val_metric_per_epoch.push_back(e < 9 ? 100.0 - e : kNaN);
  }
  r.diverged = true;
  r.final_metric = kNaN;
  const std::vector<train::RunResult> results{r};
  const auto written = curve_export(results, dir.path());
  ASSERT_EQ(written.size(), 1u);
  std::istringstream in(dashkin::testing::read_file(written[0]));
  std::string line;
  std::getline(in, line);
  int rows = 0;
  int finite = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    finite += line.substr(a + 1, b - a - 1) == "NaN" ? 0 : 1;
  }
  EXPECT_EQ(rows, 250);
  EXPECT_EQ(finite, 9);
  EXPECT_TRUE(std::filesystem::exists(dir / "curves/speed.svg"));
}

TEST(CurveExport, EmptyResultsGiveEmptyManifest) {
  dashkin::testing::TempDir dir;
  EXPECT_TRUE(curve_export({}, dir.path()).empty());
  const auto manifest = dashkin::testing::read_file(dir / "curves/manifest.json");
  EXPECT_EQ(manifest.find('{'), std::string::npos);
  EXPECT_NE(manifest.find('['), std::string::npos);
}

TEST(WriteReport, TabulatesCompleteAttributesAndSkipsOthers) {
  dashkin::testing::TempDir dir;
  auto results = synthetic_results(Attribute::speed);
  auto partial = synthetic_results(Attribute::yaw);
  partial.resize(10);
  results.insert(results.end(), partial.begin(), partial.end());
  const auto summary = write_report(results, dir.path());
  EXPECT_EQ(summary.tabulated, std::vector<Attribute>{Attribute::speed});
  EXPECT_EQ(summary.skipped.size(), 1u);
  EXPECT_TRUE(std::filesystem::exists(dir / "tables/speed.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "tables/speed.txt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "tables/yaw.csv"));
  EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir / "curves"),
                          std::filesystem::directory_iterator()),
            static_cast<std::ptrdiff_t>(results.size()) + 3);
  const auto runs = dashkin::testing::read_file(dir / "runs.csv");
  EXPECT_EQ(std::count(runs.begin(), runs.end(), '\n'),
            static_cast<std::ptrdiff_t>(results.size()) + 1);
}

TEST(RunsCsv, DivergedRunsShowNan) {
  auto results = synthetic_results(Attribute::yaw);
  results[5].final_metric = kNaN;
  results[5].diverged = true;
  results[6].error = "bad, data\nhere";
  std::istringstream in(format_runs_csv(results));
  std::string line;
  std::getline(in, line);
  std::vector<std::string> rows;
  while (std::getline(in, line)) {
    rows.push_back(line);
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9) << line;
  }
  ASSERT_EQ(rows.size(), results.size());
  EXPECT_NE(rows[5].find(",true,NaN,"), std::string::npos) << rows[5];
  EXPECT_EQ(rows[4].find("NaN"), std::string::npos) << rows[4];
  EXPECT_EQ(rows[0].rfind(results[0].config.id() + ",yaw,residual_cnn,baseline,1,1e-03,2,false,", 0),
            0u)
      << rows[0];
}

}  // namespace
}  // namespace dashkin::report
