#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "afrl/evaluation.hpp"

namespace afrl {

struct PlotPoint {
  double x = 0.0;
  double y = 0.0;
  std::string label;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotPoint> points;  // joined in order of x
};

/// Standalone SVG. The root element carries data-x-min, data-x-max,
/// data-y-min and data-y-max with the plotted axis ranges.
std::string render_svg(const PlotSpec& spec);

/// One front per requirement (N@10 against AUC), written as
/// `pareto_<requirement>.svg`. Rows without an AUC or with an error are
/// skipped. Throws DataError when nothing is plottable.
std::vector<std::filesystem::path> plot_pareto(std::span<const ResultRow> rows, const std::filesystem::path& out_dir);

}  // namespace afrl
