#include "covbal/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "covbal/csv.hpp"
#include "json.hpp"

namespace covbal {

namespace {

using Json = nlohmann::ordered_json;

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Json json_num(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void pad(std::ostream& out, const std::string& text, std::size_t width) {
  out << text;
  for (std::size_t i = text.size(); i < width; ++i) out << ' ';
}

// Distinct values in first-appearance order.
template <typename Get>
std::vector<std::string> distinct(const std::vector<ReportRow>& rows, Get get) {
  std::vector<std::string> out;
  for (const auto& row : rows)
    if (std::find(out.begin(), out.end(), get(row)) == out.end()) out.push_back(get(row));
  return out;
}

void print_grid(std::ostream& out, const Report& report, bool simulated) {
  const auto points = distinct(report.rows, [](const ReportRow& r) { return r.sweep_label; });
  const auto procedures = distinct(report.rows, [](const ReportRow& r) { return r.procedure; });
  std::vector<std::string> metrics;
  for (const auto& row : report.rows) {
    const std::string key = row.metric + "  g" + std::to_string(row.group);
    if (std::find(metrics.begin(), metrics.end(), key) == metrics.end()) metrics.push_back(key);
  }
  auto cell_for = [&](const std::string& point, const std::string& p, const std::string& m) -> std::string {
    for (const auto& row : report.rows) {
      if (row.sweep_label != point || row.procedure != p) continue;
      if (row.metric + "  g" + std::to_string(row.group) != m) continue;
      if (simulated && row.has_sim) return fixed3(row.mean) + "(" + fixed3(row.sd) + ")";
      if (!simulated && !std::isnan(row.theory_value)) return fixed3(row.theory_value) + " [" + row.theory_ref + "]";
      break;
    }
    return "-";
  };
  std::size_t metric_width = 8;
  for (const auto& m : metrics) metric_width = std::max(metric_width, m.size() + 2);
  std::size_t cell_width = 10;
  for (const auto& point : points)
    for (const auto& p : procedures) {
      cell_width = std::max(cell_width, p.size() + 2);
      for (const auto& m : metrics) cell_width = std::max(cell_width, cell_for(point, p, m).size() + 2);
    }

  for (const auto& point : points) {
    if (!point.empty()) out << "-- " << point << " --\n";
    pad(out, "metric", metric_width);
    for (const auto& p : procedures) pad(out, p, cell_width);
    out << '\n';
    for (const auto& m : metrics) {
      pad(out, m, metric_width);
      for (const auto& p : procedures) pad(out, cell_for(point, p, m), cell_width);
      out << '\n';
    }
    out << '\n';
  }
}

}  // namespace

void write_report_csv(std::ostream& out, const Report& report) {
  CsvTable table;
  table.header = {"sweep", "sweep_value", "procedure", "metric", "group",
                  "mean",  "sd",          "se_mean",   "theory_ref", "theory_value"};
  for (const auto& row : report.rows) {
    table.rows.push_back({row.sweep, row.sweep.empty() ? "" : num(row.sweep_value), row.procedure, row.metric,
                          std::to_string(row.group), row.has_sim ? num(row.mean) : "", row.has_sim ? num(row.sd) : "",
                          row.has_sim ? num(row.se_mean) : "", row.theory_ref, num(row.theory_value)});
  }
  write_csv(out, table);
}

void write_report_json(std::ostream& out, const Report& report) {
  Json rows = Json::array();
  for (const auto& row : report.rows) {
    Json r;
    r["sweep"] = row.sweep;
    r["sweep_value"] = row.sweep.empty() ? Json(nullptr) : Json(row.sweep_value);
    r["procedure"] = row.procedure;
    r["metric"] = row.metric;
    r["group"] = row.group;
    r["mean"] = row.has_sim ? json_num(row.mean) : Json(nullptr);
    r["sd"] = row.has_sim ? json_num(row.sd) : Json(nullptr);
    r["se_mean"] = row.has_sim ? json_num(row.se_mean) : Json(nullptr);
    r["theory_ref"] = row.theory_ref;
    r["theory_value"] = json_num(row.theory_value);
    rows.push_back(std::move(r));
  }
  Json doc;
  doc["rows"] = std::move(rows);
  out << doc.dump(2) << '\n';
}

void print_mean_sd_grid(std::ostream& out, const Report& report) { print_grid(out, report, true); }

void print_theory_grid(std::ostream& out, const Report& report) { print_grid(out, report, false); }

void write_entropy_csv(std::ostream& out, const std::vector<EntropyRow>& rows) {
  CsvTable table;
  table.header = {"sweep", "sweep_value", "quantity", "value"};
  for (const auto& row : rows)
    table.rows.push_back({row.sweep, row.sweep.empty() ? "" : num(row.sweep_value), row.quantity, num(row.value)});
  write_csv(out, table);
}

void write_entropy_json(std::ostream& out, const std::vector<EntropyRow>& rows) {
  Json list = Json::array();
  for (const auto& row : rows) {
    Json r;
    r["sweep"] = row.sweep;
    r["sweep_value"] = row.sweep.empty() ? Json(nullptr) : Json(row.sweep_value);
    r["quantity"] = row.quantity;
    r["value"] = json_num(row.value);
    list.push_back(std::move(r));
  }
  Json doc;
  doc["rows"] = std::move(list);
  out << doc.dump(2) << '\n';
}

void print_entropy_table(std::ostream& out, const std::vector<EntropyRow>& rows) {
  std::string current;
  bool first = true;
  std::size_t width = 10;
  for (const auto& row : rows) width = std::max(width, row.quantity.size() + 2);
  for (const auto& row : rows) {
    if (first || row.sweep_label != current) {
      if (!first) out << '\n';
      if (!row.sweep_label.empty()) out << "-- " << row.sweep_label << " --\n";
      current = row.sweep_label;
      first = false;
    }
    pad(out, row.quantity, width);
    out << fixed3(row.value) << '\n';
  }
}

void write_recommend_csv(std::ostream& out, const std::vector<RecommendRow>& rows) {
  CsvTable table;
  table.header = {"rank", "subset", "h_x", "h_cond", "sv", "strata", "regime"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    table.rows.push_back({std::to_string(i + 1), row.subset, num(row.h_x), num(row.h_cond), num(row.sv),
                          std::to_string(row.strata), row.regime});
  }
  write_csv(out, table);
}

void write_recommend_json(std::ostream& out, const std::vector<RecommendRow>& rows) {
  Json list = Json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    Json r;
    r["rank"] = i + 1;
    r["subset"] = row.subset;
    r["h_x"] = json_num(row.h_x);
    r["h_cond"] = json_num(row.h_cond);
    r["sv"] = json_num(row.sv);
    r["strata"] = row.strata;
    r["regime"] = row.regime;
    list.push_back(std::move(r));
  }
  Json doc;
  doc["rows"] = std::move(list);
  out << doc.dump(2) << '\n';
}

void print_recommend_table(std::ostream& out, const std::vector<RecommendRow>& rows) {
  std::size_t width = 8;
  for (const auto& row : rows) width = std::max(width, row.subset.size() + 2);
  pad(out, "subset", width);
  out << "h_x     h_cond  sv      strata  regime\n";
  for (const auto& row : rows) {
    pad(out, row.subset, width);
    pad(out, fixed3(row.h_x), 8);
    pad(out, fixed3(row.h_cond), 8);
    pad(out, fixed3(row.sv), 8);
    pad(out, std::to_string(row.strata), 8);
    out << row.regime << '\n';
  }
}

}  // namespace covbal
