#pragma once

#include <string>
#include <vector>

namespace cicada {

// One named polyline; `y` is indexed by the shared x axis values.
struct ChartSeries {
  std::string name;
  std::vector<double> y;
};

// Renders a self-contained SVG line chart: one polyline per series,
// axes with tick labels, and a legend.  All series must match x in length.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::vector<double>& x,
                      const std::vector<ChartSeries>& series,
                      const std::string& x_label, const std::string& y_label);

// Renders one horizontal strip per row; each cell is colored by its
// integer category.  Rows must share a common length.
void write_strip_chart(const std::string& path, const std::string& title,
                       const std::vector<std::string>& row_names,
                       const std::vector<std::vector<int>>& cells,
                       const std::string& x_label);

}  // namespace cicada
