#pragma once

#include <string>
#include <vector>

namespace fediod {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Standalone SVG line chart: axes with tick labels, one polyline per series, and a legend.
std::string render_svg(const std::vector<Series>& series, const std::string& x_label = "step",
                       const std::string& y_label = "accuracy");

/// Writes render_svg(...) to `path`; throws std::runtime_error when the file cannot be written.
void emit_svg(const std::vector<Series>& series, const std::string& path, const std::string& x_label = "step",
              const std::string& y_label = "accuracy");

}  // namespace fediod
