#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "treegraph/error.hpp"

namespace tg {

// Minimal line chart, one polyline per named series over a shared x index.
inline void write_line_chart_svg(const std::string& path, const std::string& title,
                                 const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  if (series.empty()) throw ContractError("svg chart: no series");
  const int w = 720, h = 420, ml = 60, mr = 160, mt = 40, mb = 40;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 0;
  for (const auto& [name, ys] : series) {
    n = std::max(n, ys.size());
    for (double y : ys) {
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  if (n < 2) return;  // nothing worth plotting
  if (hi - lo < 1e-12) {
    hi += 1.0;
    lo -= 1.0;
  }
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ofstream os(path);
  if (!os) throw IoError("cannot write svg: " + path);
  os << "<svg xmlns='http://www.w3.org/2000/svg' viewBox='0 0 " << w << ' ' << h << "'>\n"
     << "<rect width='100%' height='100%' fill='white'/>\n"
     << "<text x='" << ml << "' y='24' font-family='sans-serif' font-size='16'>" << title
     << "</text>\n"
     << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
     << "' stroke='black'/>\n"
     << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
     << "' stroke='black'/>\n";
  char buf[64];
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    const double y = (h - mb) - (static_cast<double>(h - mb - mt) * t / 4.0);
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    os << "<text x='4' y='" << y + 4 << "' font-family='sans-serif' font-size='11'>" << buf
       << "</text>\n";
  }
  int ci = 0;
  for (const auto& [name, ys] : series) {
    const char* color = colors[ci % 6];
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double x = ml + static_cast<double>(w - ml - mr) * static_cast<double>(i) /
                                static_cast<double>(n - 1);
      const double y = (h - mb) - (ys[i] - lo) / (hi - lo) * static_cast<double>(h - mb - mt);
      os << x << ',' << y << ' ';
    }
    os << "'/>\n<text x='" << w - mr + 8 << "' y='" << mt + 16 * ci + 8
       << "' font-family='sans-serif' font-size='12' fill='" << color << "'>" << name
       << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
}

}  // namespace tg
