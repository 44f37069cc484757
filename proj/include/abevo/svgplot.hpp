#pragma once

#include <map>
#include <string>

#include "abevo/metrics.hpp"

namespace abevo::svgplot {

// Self-contained SVG line chart. The data table is embedded as an XML
// comment so figures stay diffable.
std::string line_chart(const std::map<std::string, eval::CurveSeries>& series,
                       const std::string& title, const std::string& x_label,
                       const std::string& y_label, int width = 640, int height = 420);

}  // namespace abevo::svgplot
