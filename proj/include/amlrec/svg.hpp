#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "amlrec/errors.hpp"
#include "amlrec/perf_matrix.hpp" // detail::format_double

namespace amlrec {

struct ChartSeries {
  std::string name;
  std::vector<double> values; // y at iterations 1..n
};

namespace detail {

inline const char* chart_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  return palette[i % 8];
}

inline std::string svg_num(double v) {
  // two decimals keep coordinates compact and platform-independent
  const double r = std::round(v * 100.0) / 100.0;
  std::string s = format_double(r);
  return s;
}

} // namespace detail

/// Renders a fixed-size, self-contained line chart. Output depends only on
/// the inputs, so identical calls give byte-identical documents.
inline std::string render_line_chart(const std::string& title, const std::string& y_label,
                                     const std::vector<ChartSeries>& series) {
  const double width = 640.0, height = 400.0;
  const double left = 60.0, right = 20.0, top = 40.0, bottom = 45.0;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  std::size_t n = 0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const ChartSeries& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }
  if (n == 0 || !std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi == lo) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  auto xpos = [&](std::size_t t) {
    return n <= 1 ? left + plot_w / 2
                  : left + plot_w * static_cast<double>(t) / static_cast<double>(n - 1);
  };
  auto ypos = [&](double v) { return top + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\">\n";
  out += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  out += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" + title + "</text>\n";

  // axes and horizontal gridlines with value labels
  for (int g = 0; g <= 4; ++g) {
    const double v = lo + (hi - lo) * g / 4.0;
    const double y = ypos(v);
    out += "<line x1=\"" + detail::svg_num(left) + "\" y1=\"" + detail::svg_num(y) +
           "\" x2=\"" + detail::svg_num(left + plot_w) + "\" y2=\"" + detail::svg_num(y) +
           "\" stroke=\"#dddddd\"/>\n";
    out += "<text x=\"" + detail::svg_num(left - 6) + "\" y=\"" + detail::svg_num(y + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
           detail::svg_num(v) + "</text>\n";
  }
  out += "<line x1=\"" + detail::svg_num(left) + "\" y1=\"" + detail::svg_num(top) +
         "\" x2=\"" + detail::svg_num(left) + "\" y2=\"" + detail::svg_num(top + plot_h) +
         "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + detail::svg_num(left) + "\" y1=\"" + detail::svg_num(top + plot_h) +
         "\" x2=\"" + detail::svg_num(left + plot_w) + "\" y2=\"" +
         detail::svg_num(top + plot_h) + "\" stroke=\"black\"/>\n";
  out += "<text x=\"" + detail::svg_num(left + plot_w / 2) + "\" y=\"" +
         detail::svg_num(height - 10) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">iteration"
         "</text>\n";
  out += "<text x=\"14\" y=\"" + detail::svg_num(top + plot_h / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
         "transform=\"rotate(-90 14 " + detail::svg_num(top + plot_h / 2) + ")\">" +
         y_label + "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const ChartSeries& s = series[si];
    std::string points;
    for (std::size_t t = 0; t < s.values.size(); ++t) {
      if (!std::isfinite(s.values[t])) continue;
      if (!points.empty()) points += ' ';
      points += detail::svg_num(xpos(t)) + ',' + detail::svg_num(ypos(s.values[t]));
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(detail::chart_color(si)) +
           "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    const double ly = top + 14.0 * static_cast<double>(si);
    out += "<rect x=\"" + detail::svg_num(left + plot_w - 130) + "\" y=\"" +
           detail::svg_num(ly) + "\" width=\"10\" height=\"10\" fill=\"" +
           detail::chart_color(si) + "\"/>\n";
    out += "<text x=\"" + detail::svg_num(left + plot_w - 116) + "\" y=\"" +
           detail::svg_num(ly + 9) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
           s.name + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

} // namespace amlrec
