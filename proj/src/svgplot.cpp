#include "abevo/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "abevo/errors.hpp"

namespace abevo::svgplot {

namespace {

const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string line_chart(const std::map<std::string, eval::CurveSeries>& series,
                       const std::string& title, const std::string& x_label,
                       const std::string& y_label, int width, int height) {
  if (series.empty()) throw DataError("line_chart: no series");
  double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
  for (const auto& [name, s] : series) {
    if (s.x.empty() || s.x.size() != s.y.size())
      throw DataError("line_chart: series '" + name + "' is empty or ragged");
    for (double v : s.x) {
      x_min = std::min(x_min, v);
      x_max = std::max(x_max, v);
    }
    for (double v : s.y) {
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) y_max = y_min + 1.0;

  const double ml = 60, mr = 16, mt = 34, mb = 46;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) { return mt + ph - (y - y_min) / (y_max - y_min) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
         " " + std::to_string(height) + "\">\n";
  svg += "<!-- data\n";
  for (const auto& [name, s] : series) {
    svg += "series\t" + name + "\n";
    for (size_t i = 0; i < s.x.size(); ++i) svg += fmt(s.x[i]) + "\t" + fmt(s.y[i]) + "\n";
  }
  svg += "-->\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt2(width / 2.0) + "\" y=\"20\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"14\">" + escape_xml(title) + "</text>\n";

  // axes
  svg += "<line x1=\"" + fmt2(ml) + "\" y1=\"" + fmt2(mt) + "\" x2=\"" + fmt2(ml) + "\" y2=\"" +
         fmt2(mt + ph) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt2(ml) + "\" y1=\"" + fmt2(mt + ph) + "\" x2=\"" + fmt2(ml + pw) +
         "\" y2=\"" + fmt2(mt + ph) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double fx = x_min + (x_max - x_min) * i / 4.0;
    double fy = y_min + (y_max - y_min) * i / 4.0;
    svg += "<text x=\"" + fmt2(px(fx)) + "\" y=\"" + fmt2(mt + ph + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" + fmt(fx) +
           "</text>\n";
    svg += "<text x=\"" + fmt2(ml - 6) + "\" y=\"" + fmt2(py(fy) + 3) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" + fmt(fy) +
           "</text>\n";
  }
  svg += "<text x=\"" + fmt2(ml + pw / 2.0) + "\" y=\"" + fmt2(height - 10.0) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
         escape_xml(x_label) + "</text>\n";
  svg += "<text x=\"14\" y=\"" + fmt2(mt + ph / 2.0) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 " +
         fmt2(mt + ph / 2.0) + ")\">" + escape_xml(y_label) + "</text>\n";

  int color = 0;
  double legend_y = mt + 8;
  for (const auto& [name, s] : series) {
    const char* stroke = kPalette[color % 8];
    std::string points;
    for (size_t i = 0; i < s.x.size(); ++i) {
      points += fmt2(px(s.x[i])) + "," + fmt2(py(s.y[i]));
      if (i + 1 < s.x.size()) points.push_back(' ');
    }
    bool dashed = name.find("baseline") != std::string::npos;
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(stroke) + "\" stroke-width=\"1.5\"" +
           (dashed ? " stroke-dasharray=\"6 4\"" : "") + " points=\"" + points + "\"/>\n";
    svg += "<text x=\"" + fmt2(ml + pw - 4) + "\" y=\"" + fmt2(legend_y) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\" fill=\"" + stroke +
           "\">" + escape_xml(name) + "</text>\n";
    legend_y += 13;
    ++color;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace abevo::svgplot
