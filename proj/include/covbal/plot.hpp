#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "covbal/csv.hpp"

namespace covbal {

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

/* Self-contained SVG line chart, one polyline per series with markers and a
 * legend. Output is a pure function of the inputs (fixed palette, fixed
 * coordinate formatting), so identical inputs give byte-identical files.
 * Throws std::invalid_argument when there is no series, a series is empty,
 * or a coordinate is not finite. */
std::string render_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                              std::span<const PlotSeries> series);

/* Chart built from a summary table: kind "sd" plots the sd column of a
 * simulation summary against the swept value, one series per
 * procedure/metric/group; kind "entropy" plots the value column of an
 * entropy summary, one series per quantity. Throws std::invalid_argument on
 * an unknown kind or a table lacking the needed columns. */
std::string plot_from_summary(const CsvTable& table, const std::string& kind, const std::string& title);

}  // namespace covbal
