#pragma once

// Small dependency-free SVG charts for histograms and training curves.

#include <filesystem>
#include <string>
#include <vector>

namespace dashkin::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;  ///< non-finite points are skipped
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
};

void write_line_chart(const std::filesystem::path& path, const Axes& axes,
                      const std::vector<Series>& series);

/// Bars over [edges[i], edges[i+1]) with heights `counts`.
void write_bar_chart(const std::filesystem::path& path, const Axes& axes,
                     const std::vector<double>& edges, const std::vector<double>& counts);

}  // namespace dashkin::plot
