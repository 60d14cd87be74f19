#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mminr {

/// One polyline. NaN y-values leave a gap.
struct Curve {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartLabels {
  std::string title;
  std::string x_label;
  std::string y_label;
};

/// Columns: x, then one column per curve (curves must share x).
void write_curves_csv(const std::vector<Curve>& curves, const std::string& x_label,
                      const std::filesystem::path& path);

/// Standalone SVG line chart.
std::string render_line_chart_svg(const std::vector<Curve>& curves, const ChartLabels& labels);
void write_line_chart_svg(const std::vector<Curve>& curves, const ChartLabels& labels,
                          const std::filesystem::path& path);

}  // namespace mminr
