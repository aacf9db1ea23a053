#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace covbal {

// One summary line of a simulation or theory run. Simulation fields are
// meaningful only when has_sim is set (the theory command leaves them blank).
struct ReportRow {
  std::string sweep;        // swept parameter name; empty for one scenario
  std::string sweep_label;  // printable point label, e.g. "delta=1/16"
  double sweep_value = 0;
  std::string procedure;
  std::string metric;
  int group = 1;
  bool has_sim = false;
  double mean = 0;
  double sd = 0;
  double se_mean = 0;
  std::string theory_ref;
  double theory_value = std::numeric_limits<double>::quiet_NaN();
};

struct Report {
  std::vector<ReportRow> rows;
};

// Fixed columns: sweep,sweep_value,procedure,metric,group,mean,sd,se_mean,
// theory_ref,theory_value. Blank cells for absent values.
void write_report_csv(std::ostream& out, const Report& report);
void write_report_json(std::ostream& out, const Report& report);

// Per sweep point, one "mean(sd)" grid with metrics as rows and procedures
// as columns, three decimals.
void print_mean_sd_grid(std::ostream& out, const Report& report);
// Same layout showing "theory_value (theory_ref)" cells.
void print_theory_grid(std::ostream& out, const Report& report);

struct EntropyRow {
  std::string sweep;
  std::string sweep_label;
  double sweep_value = 0;
  std::string quantity;
  double value = 0;
};

// Fixed columns: sweep,sweep_value,quantity,value.
void write_entropy_csv(std::ostream& out, const std::vector<EntropyRow>& rows);
void write_entropy_json(std::ostream& out, const std::vector<EntropyRow>& rows);
void print_entropy_table(std::ostream& out, const std::vector<EntropyRow>& rows);

struct RecommendRow {
  std::string subset;     // "+"-joined covariate names
  double h_x = 0;         // entropy of the subset's strata
  double h_cond = 0;      // conditional entropy of the target given the subset
  double sv = 0;          // variance-sum surrogate for the target
  std::int64_t strata = 0;
  std::string regime;     // block regime at the configured study size
};

// Fixed columns: rank,subset,h_x,h_cond,sv,strata,regime (rows are emitted
// in rank order).
void write_recommend_csv(std::ostream& out, const std::vector<RecommendRow>& rows);
void write_recommend_json(std::ostream& out, const std::vector<RecommendRow>& rows);
void print_recommend_table(std::ostream& out, const std::vector<RecommendRow>& rows);

}  // namespace covbal
