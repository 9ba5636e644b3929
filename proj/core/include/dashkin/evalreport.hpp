#pragma once

// Result tables (rows batch size x learning rate, columns head x encoder),
// best-configuration extraction, unit conversion and curve export.

#include "dashkin/train.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dashkin::report {

inline constexpr std::array<int, 2> kBatchSizes = {1, 2};
/// Row order of the printed table.
inline constexpr std::array<double, 2> kLearningRates = {1e-3, 1e-5};
inline constexpr std::array<models::HeadKind, 3> kHeads = {
    models::HeadKind::baseline, models::HeadKind::gru, models::HeadKind::transformer};
inline constexpr std::array<models::EncoderKind, 2> kEncoders = {
    models::EncoderKind::residual_cnn, models::EncoderKind::external_latents};

struct CellKey {
  models::EncoderKind encoder = models::EncoderKind::residual_cnn;
  models::HeadKind head = models::HeadKind::baseline;
  int batch_size = 1;
  double learning_rate = 1e-3;

  friend bool operator==(const CellKey&, const CellKey&) = default;
};

std::string describe(const CellKey& key);

enum class Direction { min, max };

struct ResultTable {
  data::Attribute attribute = data::Attribute::speed;
  std::string title;
  Direction direction = Direction::min;
  /// Indexed by cell_index; NaN marks a diverged run.
  std::array<double, 24> cells{};

  static std::size_t cell_index(const CellKey& key);
  static CellKey cell_key(std::size_t index);
  [[nodiscard]] double at(const CellKey& key) const { return cells[cell_index(key)]; }
  double& at(const CellKey& key) { return cells[cell_index(key)]; }

  /// Equal cells with NaN == NaN.
  [[nodiscard]] bool same_cells(const ResultTable& other) const;
};

std::string table_title(data::Attribute attribute, bool accuracy);

/// Runs whose batch size or learning rate has no row are ignored. Throws
/// IncompleteTableError naming every absent cell.
ResultTable build_table(std::span<const train::RunResult> results, data::Attribute attribute);

struct Best {
  CellKey key;
  double value = 0.0;
};

/// NaN cells are ignored; ties go to the first cell in (encoder, head, batch
/// size, ascending learning rate) order. Throws NoFiniteResultError.
Best best_config(const ResultTable& table, Direction direction);
inline Best best_config(const ResultTable& table) { return best_config(table, table.direction); }

/// km/h squared to m/s squared. Throws DomainError on negative input.
double convert_mse_units(double mse_kmh2);

/// Fixed-width layout with `NaN` cells.
std::string format_table_text(const ResultTable& table);
/// Long format: attribute,encoder,head,batch_size,learning_rate,value.
std::string format_table_csv(const ResultTable& table);
ResultTable parse_table_csv(const std::string& text);

/// Writes `curves/<config id>.csv` per run, one SVG per attribute and
/// `curves/manifest.json`. Returns the written CSV paths.
std::vector<std::filesystem::path> curve_export(std::span<const train::RunResult> results,
                                                const std::filesystem::path& out_dir);

/// One row per run in input order; diverged runs show `NaN`.
std::string format_runs_csv(std::span<const train::RunResult> results);

struct ReportSummary {
  std::vector<data::Attribute> tabulated;
  std::vector<std::string> skipped;  ///< one message per incomplete attribute
};

/// Tables for every attribute with a complete grid, curves and `runs.csv` for all
/// runs, and a summary.
ReportSummary write_report(std::span<const train::RunResult> results,
                           const std::filesystem::path& out_dir);

}  // namespace dashkin::report
