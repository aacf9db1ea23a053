#include "covbal/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace covbal {

namespace {

constexpr double kWidth = 720, kHeight = 480;
constexpr double kLeft = 64, kRight = 540, kTop = 44, kBottom = 430;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

std::string xml_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
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

std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Range {
  double lo = 0, hi = 1;
  double place(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

Range make_range(double lo, double hi) {
  if (lo == hi) {
    const double pad = std::max(0.5, std::fabs(lo) * 0.1);
    return {lo - pad, hi + pad};
  }
  const double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                              std::span<const PlotSeries> series) {
  if (series.empty()) throw std::invalid_argument("no series to plot");
  double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
  bool first = true;
  for (const auto& s : series) {
    if (s.points.empty()) throw std::invalid_argument("series '" + s.name + "' has no points");
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y))
        throw std::invalid_argument("series '" + s.name + "' has a non-finite point");
      if (first) {
        xlo = xhi = x;
        ylo = yhi = y;
        first = false;
      } else {
        xlo = std::min(xlo, x);
        xhi = std::max(xhi, x);
        ylo = std::min(ylo, y);
        yhi = std::max(yhi, y);
      }
    }
  }
  const Range xr = make_range(xlo, xhi);
  const Range yr = make_range(ylo, yhi);

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + coord(kWidth) + "\" height=\"" + coord(kHeight) +
         "\" viewBox=\"0 0 " + coord(kWidth) + " " + coord(kHeight) + "\">\n";
  svg += "<rect width=\"" + coord(kWidth) + "\" height=\"" + coord(kHeight) + "\" fill=\"#ffffff\"/>\n";
  svg += "<text x=\"" + coord((kLeft + kRight) / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\" fill=\"#222222\">" + xml_escape(title) + "</text>\n";

  // Gridlines and ticks, five per axis.
  for (int i = 0; i <= 4; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double px = xr.place(fx, kLeft, kRight);
    svg += "<line x1=\"" + coord(px) + "\" y1=\"" + coord(kTop) + "\" x2=\"" + coord(px) + "\" y2=\"" + coord(kBottom) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + coord(px) + "\" y=\"" + coord(kBottom + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#444444\">" +
           xml_escape(tick_label(fx)) + "</text>\n";
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    const double py = yr.place(fy, kBottom, kTop);
    svg += "<line x1=\"" + coord(kLeft) + "\" y1=\"" + coord(py) + "\" x2=\"" + coord(kRight) + "\" y2=\"" + coord(py) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + coord(kLeft - 8) + "\" y=\"" + coord(py + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#444444\">" +
           xml_escape(tick_label(fy)) + "</text>\n";
  }
  svg += "<line x1=\"" + coord(kLeft) + "\" y1=\"" + coord(kBottom) + "\" x2=\"" + coord(kRight) + "\" y2=\"" +
         coord(kBottom) + "\" stroke=\"#222222\" stroke-width=\"1.5\"/>\n";
  svg += "<line x1=\"" + coord(kLeft) + "\" y1=\"" + coord(kTop) + "\" x2=\"" + coord(kLeft) + "\" y2=\"" +
         coord(kBottom) + "\" stroke=\"#222222\" stroke-width=\"1.5\"/>\n";
  svg += "<text x=\"" + coord((kLeft + kRight) / 2) + "\" y=\"" + coord(kHeight - 10) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#222222\">" +
         xml_escape(x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + coord((kTop + kBottom) / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" fill=\"#222222\" transform=\"rotate(-90 16 " + coord((kTop + kBottom) / 2) + ")\">" +
         xml_escape(y_label) + "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % kPaletteSize];
    std::string pts;
    for (const auto& [x, y] : series[i].points) {
      if (!pts.empty()) pts += ' ';
      pts += coord(xr.place(x, kLeft, kRight)) + "," + coord(yr.place(y, kBottom, kTop));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (const auto& [x, y] : series[i].points)
      svg += "<circle cx=\"" + coord(xr.place(x, kLeft, kRight)) + "\" cy=\"" + coord(yr.place(y, kBottom, kTop)) +
             "\" r=\"3\" fill=\"" + std::string(color) + "\"/>\n";
    const double ly = kTop + 16 + 20 * static_cast<double>(i);
    svg += "<line x1=\"" + coord(kRight + 16) + "\" y1=\"" + coord(ly) + "\" x2=\"" + coord(kRight + 40) + "\" y2=\"" +
           coord(ly) + "\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + coord(kRight + 46) + "\" y=\"" + coord(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#222222\">" + xml_escape(series[i].name) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

namespace {

double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("malformed " + what + " value '" + text + "' in summary table");
  }
}

int require_column(const CsvTable& table, const std::string& name) {
  const int c = table.column(name);
  if (c < 0) throw std::invalid_argument("summary table lacks column '" + name + "'");
  return c;
}

}  // namespace

std::string plot_from_summary(const CsvTable& table, const std::string& kind, const std::string& title) {
  std::vector<PlotSeries> series;
  std::string x_label = "x", y_label;
  const int sweep_col = require_column(table, "sweep");
  const int value_col = require_column(table, "sweep_value");
  auto series_for = [&](const std::string& name) -> PlotSeries& {
    for (auto& s : series)
      if (s.name == name) return s;
    series.push_back({name, {}});
    return series.back();
  };

  if (kind == "sd") {
    const int proc = require_column(table, "procedure");
    const int metric = require_column(table, "metric");
    const int group = require_column(table, "group");
    const int sd = require_column(table, "sd");
    y_label = "sd";
    bool one_metric = true;
    std::string first_metric;
    for (const auto& row : table.rows) {
      const std::string key = row[static_cast<std::size_t>(metric)] + "|" + row[static_cast<std::size_t>(group)];
      if (first_metric.empty())
        first_metric = key;
      else if (key != first_metric)
        one_metric = false;
    }
    for (const auto& row : table.rows) {
      if (row[static_cast<std::size_t>(sd)].empty()) continue;  // theory-only line
      if (row[static_cast<std::size_t>(value_col)].empty())
        throw std::invalid_argument("summary table has no swept values to plot against");
      x_label = row[static_cast<std::size_t>(sweep_col)];
      std::string name = row[static_cast<std::size_t>(proc)];
      if (!one_metric)
        name += " " + row[static_cast<std::size_t>(metric)] + " g" + row[static_cast<std::size_t>(group)];
      series_for(name).points.emplace_back(parse_number(row[static_cast<std::size_t>(value_col)], "sweep"),
                                           parse_number(row[static_cast<std::size_t>(sd)], "sd"));
    }
  } else if (kind == "entropy") {
    const int quantity = require_column(table, "quantity");
    const int value = require_column(table, "value");
    y_label = "value";
    for (const auto& row : table.rows) {
      if (row[static_cast<std::size_t>(value_col)].empty())
        throw std::invalid_argument("summary table has no swept values to plot against");
      x_label = row[static_cast<std::size_t>(sweep_col)];
      series_for(row[static_cast<std::size_t>(quantity)])
          .points.emplace_back(parse_number(row[static_cast<std::size_t>(value_col)], "sweep"),
                               parse_number(row[static_cast<std::size_t>(value)], "value"));
    }
  } else {
    throw std::invalid_argument("unknown plot kind '" + kind + "' (sd, entropy)");
  }
  if (series.empty()) throw std::invalid_argument("summary table has no plottable rows");
  return render_line_chart(title, x_label, y_label, series);
}

}  // namespace covbal
