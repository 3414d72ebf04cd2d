// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace galore {

struct Series {
  std::string label;
  std::vector<double> y;  // one value per x
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 720;
  int height = 440;
};

/// Static SVG line chart with axes, ticks and a legend. Output depends only on
/// the inputs. Non-finite y values break the polyline.
std::string line_chart(const ChartSpec& spec, const std::vector<double>& x,
                       const std::vector<Series>& series);

}  // namespace galore
