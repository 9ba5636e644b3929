#include "dashkin/evalreport.hpp"

#include "dashkin/error.hpp"
#include "dashkin/plot.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace dashkin::report {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kKmhPerMs = 3.6;

std::string format_value(double v) {
  if (std::isnan(v)) {
    return "NaN";
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string short_value(double v) {
  if (std::isnan(v)) {
    return "NaN";
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string lr_label(double lr) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.0e", lr);
  return buf;
}

int lr_index(double lr) {
  for (std::size_t i = 0; i < kLearningRates.size(); ++i) {
    if (std::abs(lr - kLearningRates[i]) <= 1e-12) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

int bs_index(int bs) {
  for (std::size_t i = 0; i < kBatchSizes.size(); ++i) {
    if (bs == kBatchSizes[i]) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

void save(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << text;
}

}  // namespace

std::string describe(const CellKey& key) {
  return std::string(models::to_string(key.encoder)) + "/" + std::string(models::to_string(key.head)) +
         "/bs" + std::to_string(key.batch_size) + "/lr" + lr_label(key.learning_rate);
}

// Layout: row = bs * 2 + lr, column = head * 2 + encoder.
std::size_t ResultTable::cell_index(const CellKey& key) {
  const int b = bs_index(key.batch_size);
  const int l = lr_index(key.learning_rate);
  if (b < 0 || l < 0) {
    throw ConfigError("cell " + describe(key) + " lies outside the grid");
  }
  const auto row = static_cast<std::size_t>(b * 2 + l);
  const auto col = static_cast<std::size_t>(key.head) * 2 + static_cast<std::size_t>(key.encoder);
  if (key.encoder == models::EncoderKind::standin) {
    throw ConfigError("stand-in encoder has no table column");
  }
  return row * 6 + col;
}

CellKey ResultTable::cell_key(std::size_t index) {
  const std::size_t row = index / 6;
  const std::size_t col = index % 6;
  return {kEncoders[col % 2], kHeads[col / 2], kBatchSizes[row / 2], kLearningRates[row % 2]};
}

bool ResultTable::same_cells(const ResultTable& other) const {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const bool both_nan = std::isnan(cells[i]) && std::isnan(other.cells[i]);
    if (!both_nan && cells[i] != other.cells[i]) {
      return false;
    }
  }
  return attribute == other.attribute;
}

std::string table_title(data::Attribute attribute, bool accuracy) {
  switch (attribute) {
    case data::Attribute::speed: return "Speed (MSE km/h)";
    case data::Attribute::yaw: return "Yaw (MSE deg/s)";
    case data::Attribute::lead_present: return "Lead Car Present (accuracy)";
    case data::Attribute::lead_distance: return "Lead Distance (MSE m)";
    case data::Attribute::lead_rel_speed:
      return accuracy ? "Lead Relative Speed (accuracy)" : "Lead Relative Speed (MSE km/h)";
  }
  return "";
}

ResultTable build_table(std::span<const train::RunResult> results, data::Attribute attribute) {
  ResultTable table;
  table.attribute = attribute;
  table.cells.fill(kNaN);
  std::array<bool, 24> seen{};
  bool accuracy = attribute == data::Attribute::lead_present;
  for (const auto& r : results) {
    // Runs from a widened learning-rate sweep have no cell.
    if (r.config.attribute != attribute || lr_index(r.config.learning_rate) < 0 ||
        bs_index(r.config.batch_size) < 0) {
      continue;
    }
    const CellKey key{r.config.encoder, r.config.head, r.config.batch_size, r.config.learning_rate};
    const auto idx = ResultTable::cell_index(key);
    table.cells[idx] = std::isfinite(r.final_metric) ? r.final_metric : kNaN;
    seen[idx] = true;
    accuracy = r.config.metric_is_accuracy();
  }
  std::string missing;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) {
      missing += (missing.empty() ? "" : ", ") + describe(ResultTable::cell_key(i));
    }
  }
  if (!missing.empty()) {
    throw IncompleteTableError("table for '" + std::string(data::to_string(attribute)) +
                               "' is missing: " + missing);
  }
  table.direction = accuracy ? Direction::max : Direction::min;
  table.title = table_title(attribute, accuracy);
  return table;
}

Best best_config(const ResultTable& table, Direction direction) {
  bool found = false;
  Best best;
  for (auto encoder : kEncoders) {
    for (auto head : kHeads) {
      for (int bs : kBatchSizes) {
        for (double lr : {1e-5, 1e-3}) {
          const CellKey key{encoder, head, bs, lr};
          const double v = table.at(key);
          if (std::isnan(v)) {
            continue;
          }
          const bool better = !found || (direction == Direction::min ? v < best.value : v > best.value);
          if (better) {
            best = {key, v};
            found = true;
          }
        }
      }
    }
  }
  if (!found) {
    throw NoFiniteResultError("table '" + table.title + "' has no finite cell");
  }
  return best;
}

double convert_mse_units(double mse_kmh2) {
  if (mse_kmh2 < 0.0 || std::isnan(mse_kmh2)) {
    throw DomainError("convert_mse_units: MSE must be non-negative");
  }
  return mse_kmh2 / (kKmhPerMs * kKmhPerMs);
}

std::string format_table_text(const ResultTable& table) {
  std::ostringstream os;
  constexpr int w = 12;
  os << table.title << "\n";
  os << std::setw(4) << "" << std::setw(8) << "";
  for (auto head : kHeads) {
    os << std::setw(2 * w) << models::to_string(head);
  }
  os << "\n" << std::setw(4) << "BS" << std::setw(8) << "LR";
  for (std::size_t h = 0; h < kHeads.size(); ++h) {
    os << std::setw(w) << "CNN" << std::setw(w) << "Latents";
  }
  os << "\n";
  for (int bs : kBatchSizes) {
    for (double lr : kLearningRates) {
      os << std::setw(4) << bs << std::setw(8) << lr_label(lr);
      for (auto head : kHeads) {
        for (auto encoder : kEncoders) {
          os << std::setw(w) << short_value(table.at({encoder, head, bs, lr}));
        }
      }
      os << "\n";
    }
  }
  return os.str();
}

std::string format_table_csv(const ResultTable& table) {
  std::ostringstream os;
  os << "attribute,encoder,head,batch_size,learning_rate,value\n";
  for (std::size_t i = 0; i < table.cells.size(); ++i) {
    const auto key = ResultTable::cell_key(i);
    os << data::to_string(table.attribute) << ',' << models::to_string(key.encoder) << ','
       << models::to_string(key.head) << ',' << key.batch_size << ',' << lr_label(key.learning_rate)
       << ',' << format_value(table.cells[i]) << '\n';
  }
  return os.str();
}

ResultTable parse_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "attribute,encoder,head,batch_size,learning_rate,value") {
    throw FormatError("result table CSV has an unexpected header");
  }
  ResultTable table;
  table.cells.fill(kNaN);
  std::array<bool, 24> seen{};
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) {
      f.push_back(field);
    }
    if (f.size() != 6) {
      throw FormatError("result table row has " + std::to_string(f.size()) + " fields: " + line);
    }
    try {
      const auto attribute = data::attribute_from_string(f[0]);
      if (first) {
        table.attribute = attribute;
        first = false;
      } else if (attribute != table.attribute) {
        throw FormatError("result table mixes attributes");
      }
      const CellKey key{models::encoder_kind_from_string(f[1]), models::head_kind_from_string(f[2]),
                        std::stoi(f[3]), std::stod(f[4])};
      const auto idx = ResultTable::cell_index(key);
      table.cells[idx] = f[5] == "NaN" ? kNaN : std::stod(f[5]);
      seen[idx] = true;
    } catch (const std::logic_error&) {
      throw FormatError("unparseable result table row: " + line);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("bad result table row: ") + e.what());
    }
  }
  for (bool s : seen) {
    if (!s) {
      throw IncompleteTableError("result table CSV does not list all 24 cells");
    }
  }
  const bool accuracy = table.attribute == data::Attribute::lead_present;
  table.direction = accuracy ? Direction::max : Direction::min;
  table.title = table_title(table.attribute, accuracy);
  return table;
}

std::vector<std::filesystem::path> curve_export(std::span<const train::RunResult> results,
                                                const std::filesystem::path& out_dir) {
  const auto dir = out_dir / "curves";
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  std::map<data::Attribute, std::vector<plot::Series>> by_attribute;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& r : results) {
    const auto id = r.config.id();
    std::ostringstream csv;
    csv << "epoch,val_metric,val_loss,train_loss\n";
    plot::Series series;
    series.label = describe({r.config.encoder, r.config.head, r.config.batch_size,
                             r.config.learning_rate});
    for (std::size_t e = 0; e < r.val_metric_per_epoch.size(); ++e) {
      auto at = [&](const std::vector<double>& v) { return e < v.size() ? v[e] : kNaN; };
      csv << e + 1 << ',' << format_value(r.val_metric_per_epoch[e]) << ','
          << format_value(at(r.val_loss_per_epoch)) << ',' << format_value(at(r.train_loss_per_epoch))
          << '\n';
      series.x.push_back(static_cast<double>(e + 1));
      series.y.push_back(r.val_metric_per_epoch[e]);
    }
    const auto path = dir / (id + ".csv");
    save(path, csv.str());
    written.push_back(path);
    manifest.push_back({{"config_id", id},
                        {"attribute", std::string(data::to_string(r.config.attribute))},
                        {"label", series.label},
                        {"file", path.filename().string()}});
    by_attribute[r.config.attribute].push_back(std::move(series));
  }
  for (const auto& [attribute, series] : by_attribute) {
    const bool accuracy = attribute == data::Attribute::lead_present;
    plot::write_line_chart(dir / (std::string(data::to_string(attribute)) + ".svg"),
                           {table_title(attribute, accuracy) + " validation", "epoch",
                            accuracy ? "accuracy" : "MSE", false},
                           series);
  }
  save(dir / "manifest.json", manifest.dump(2) + "\n");
  return written;
}

std::string format_runs_csv(std::span<const train::RunResult> results) {
  std::ostringstream os;
  os << "config_id,attribute,encoder,head,batch_size,learning_rate,epochs,diverged,final_metric,error\n";
  for (const auto& r : results) {
    std::string error = r.error;
    std::replace_if(error.begin(), error.end(), [](char c) { return c == ',' || c == '\n'; }, ' ');
    os << r.config.id() << ',' << data::to_string(r.config.attribute) << ','
       << models::to_string(r.config.encoder) << ',' << models::to_string(r.config.head) << ','
       << r.config.batch_size << ',' << lr_label(r.config.learning_rate) << ','
       << r.val_metric_per_epoch.size() << ',' << (r.diverged ? "true" : "false") << ','
       << format_value(r.final_metric) << ',' << error << '\n';
  }
  return os.str();
}

ReportSummary write_report(std::span<const train::RunResult> results,
                           const std::filesystem::path& out_dir) {
  ReportSummary summary;
  std::ostringstream text;
  for (auto attribute : data::kAllAttributes) {
    const bool any = std::any_of(results.begin(), results.end(), [&](const train::RunResult& r) {
      return r.config.attribute == attribute;
    });
    if (!any) {
      continue;
    }
    try {
      const auto table = build_table(results, attribute);
      const auto name = std::string(data::to_string(attribute));
      save(out_dir / "tables" / (name + ".csv"), format_table_csv(table));
      save(out_dir / "tables" / (name + ".txt"), format_table_text(table));
      summary.tabulated.push_back(attribute);
      text << table.title << ": ";
      try {
        const auto best = best_config(table);
        text << "best " << short_value(best.value) << " at " << describe(best.key);
        if (attribute == data::Attribute::speed && table.direction == Direction::min) {
          text << " (" << short_value(convert_mse_units(best.value)) << " m/s squared)";
        }
      } catch (const NoFiniteResultError&) {
        text << "no finite result";
      }
      text << "\n";
    } catch (const IncompleteTableError& e) {
      summary.skipped.emplace_back(e.what());
    }
  }
  curve_export(results, out_dir);
  save(out_dir / "runs.csv", format_runs_csv(results));
  save(out_dir / "summary.txt", text.str());
  return summary;
}

}  // namespace dashkin::report
