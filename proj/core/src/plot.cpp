#include "dashkin/plot.hpp"

#include "dashkin/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace dashkin::plot {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 400;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 50;

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  bool log_y;

  [[nodiscard]] double px(double x) const {
    const double span = x1 > x0 ? x1 - x0 : 1.0;
    return kLeft + (x - x0) / span * (kWidth - kLeft - kRight);
  }
  [[nodiscard]] double py(double y) const {
    double v = y;
    if (log_y) {
      v = std::log10(std::max(y, 1e-300));
    }
    const double span = y1 > y0 ? y1 - y0 : 1.0;
    return kHeight - kBottom - (v - y0) / span * (kHeight - kTop - kBottom);
  }
};

void header(std::ostringstream& os, const Axes& axes, const Frame& f) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << escape(axes.title) << "</text>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
     << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
     << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(axes.x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << kHeight / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 "
     << kHeight / 2 << ")\" text-anchor=\"middle\">" << escape(axes.y_label)
     << (axes.log_y ? " (log10)" : "") << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    os << "<text x=\"" << f.px(xv) << "\" y=\"" << kHeight - kBottom + 16
       << "\" text-anchor=\"middle\" font-size=\"10\">" << xv << "</text>\n";
    const double ypx = kHeight - kBottom - i / 4.0 * (kHeight - kTop - kBottom);
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << ypx + 3
       << "\" text-anchor=\"end\" font-size=\"10\">" << (f.log_y ? std::pow(10.0, yv) : yv)
       << "</text>\n";
  }
}

void save(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write plot " + path.string());
  }
  out << text;
}

}  // namespace

void write_line_chart(const std::filesystem::path& path, const Axes& axes,
                      const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -x0;
  double y0 = x0;
  double y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (axes.log_y && s.y[i] <= 0)) {
        continue;
      }
      const double y = axes.log_y ? std::log10(s.y[i]) : s.y[i];
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) {
    x0 = 0;
    x1 = 1;
    y0 = 0;
    y1 = 1;
  }
  Frame f{x0, x1, y0, y1, axes.log_y};
  std::ostringstream os;
  header(os, axes, f);
  std::size_t colour = 0;
  for (const auto& s : series) {
    const char* stroke = kPalette[colour++ % kPalette.size()];
    std::ostringstream pts;
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (axes.log_y && s.y[i] <= 0)) {
        // Truncate at the first non-finite value: the rest of a diverged run is not drawn.
        break;
      }
      pts << f.px(s.x[i]) << ',' << f.py(s.y[i]) << ' ';
      ++n;
    }
    if (n > 0) {
      os << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\""
         << pts.str() << "\"/>\n";
    }
  }
  std::size_t row = 0;
  for (const auto& s : series) {
    if (s.label.empty()) {
      continue;
    }
    const double ly = kTop + 12 + 14 * static_cast<double>(row);
    os << "<text x=\"" << kWidth - kRight - 4 << "\" y=\"" << ly
       << "\" text-anchor=\"end\" font-size=\"10\" fill=\"" << kPalette[row % kPalette.size()]
       << "\">" << escape(s.label) << "</text>\n";
    ++row;
  }
  os << "</svg>\n";
  save(path, os.str());
}

void write_bar_chart(const std::filesystem::path& path, const Axes& axes,
                     const std::vector<double>& edges, const std::vector<double>& counts) {
  double y1 = 0;
  double y0 = 0;
  for (double c : counts) {
    const double v = axes.log_y ? std::log10(c + 1.0) : c;
    y1 = std::max(y1, v);
  }
  if (y1 <= y0) {
    y1 = 1;
  }
  const double x0 = edges.empty() ? 0 : edges.front();
  const double x1 = edges.empty() ? 1 : edges.back();
  Frame f{x0, x1, y0, y1, false};
  std::ostringstream os;
  header(os, axes, f);
  for (std::size_t i = 0; i + 1 < edges.size() && i < counts.size(); ++i) {
    const double v = axes.log_y ? std::log10(counts[i] + 1.0) : counts[i];
    const double left = f.px(edges[i]);
    const double right = f.px(edges[i + 1]);
    const double top = f.py(v);
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << std::max(0.0, right - left - 1)
       << "\" height=\"" << (kHeight - kBottom - top) << "\" fill=\"" << kPalette[0] << "\"/>\n";
  }
  os << "</svg>\n";
  save(path, os.str());
}

}  // namespace dashkin::plot
