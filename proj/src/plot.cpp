#include "afrl/plot.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/core.h>

#include "afrl/io.hpp"

namespace afrl {
namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 30.0;
constexpr double kTop = 50.0;
constexpr double kBottom = 60.0;

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::pair<double, double> padded_range(double lo, double hi) {
  const double span = hi - lo;
  const double pad = span > 0.0 ? 0.05 * span : std::max(0.05, 0.05 * std::abs(lo));
  return {lo - pad, hi + pad};
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
  if (spec.points.empty()) throw DataError("nothing to plot");
  auto pts = spec.points;
  std::stable_sort(pts.begin(), pts.end(), [](const PlotPoint& a, const PlotPoint& b) { return a.x < b.x; });
  double x_lo = pts.front().x, x_hi = pts.back().x;
  double y_lo = pts.front().y, y_hi = pts.front().y;
  for (const auto& p : pts) {
    y_lo = std::min(y_lo, p.y);
    y_hi = std::max(y_hi, p.y);
  }
  const auto [x0, x1] = padded_range(x_lo, x_hi);
  const auto [y0, y1] = padded_range(y_lo, y_hi);
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "data-x-min=\"{2:.17g}\" data-x-max=\"{3:.17g}\" data-y-min=\"{4:.17g}\" data-y-max=\"{5:.17g}\">\n",
      kWidth, kHeight, x0, x1, y0, y1);
  svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kWidth, kHeight);
  svg += fmt::format("<text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n", kWidth / 2,
                     escape(spec.title));
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", kLeft,
                     kTop, pw, ph);
  for (int t = 0; t <= 4; ++t) {
    const double fx = x0 + (x1 - x0) * t / 4.0;
    const double fy = y0 + (y1 - y0) * t / 4.0;
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\" font-size=\"11\">{:.3f}</text>\n", sx(fx),
                       kTop + ph + 18, fx);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\" font-size=\"11\">{:.3f}</text>\n", kLeft - 6,
                       sy(fy) + 4, fy);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n", kLeft + pw / 2,
                     kHeight - 15, escape(spec.x_label));
  svg += fmt::format(
      "<text x=\"18\" y=\"{0}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 {0})\">{1}</text>\n",
      kTop + ph / 2, escape(spec.y_label));
  std::string path;
  for (const auto& p : pts) path += fmt::format("{:.2f},{:.2f} ", sx(p.x), sy(p.y));
  svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n", path);
  for (const auto& p : pts) {
    svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"4\" fill=\"steelblue\"><title>{}</title></circle>\n",
                       sx(p.x), sy(p.y), escape(p.label));
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::filesystem::path> plot_pareto(std::span<const ResultRow> rows, const std::filesystem::path& out_dir) {
  if (rows.empty()) throw DataError("metrics CSV has no rows");
  std::map<std::string, PlotSpec> fronts;
  for (const auto& row : rows) {
    if (!row.error.empty() || !row.report.auc) continue;
    auto& spec = fronts[row.report.requirement];
    spec.title = fmt::format("Pareto front, sensitive: {}", row.report.requirement);
    spec.x_label = "fairness AUC";
    spec.y_label = "N@10";
    spec.points.push_back({*row.report.auc, row.report.ndcg_at_10, fmt::format("lambda={:g}", row.lambda)});
  }
  if (fronts.empty()) throw DataError("metrics CSV has no rows with a fairness AUC");
  std::vector<std::filesystem::path> written;
  for (const auto& [req, spec] : fronts) {
    std::string name = req;
    std::replace(name.begin(), name.end(), '+', '_');
    const auto path = out_dir / fmt::format("pareto_{}.svg", name);
    write_file(path, render_svg(spec));
    written.push_back(path);
  }
  return written;
}

}  // namespace afrl
