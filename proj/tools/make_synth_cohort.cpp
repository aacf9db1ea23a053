#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "covbal/scenarios.hpp"

// Generates the bundled demonstration cohort: a categorical patient table
// with correlated columns, written as raw CSV plus the recode map that turns
// the raw strings back into 1-based levels.
int main(int argc, char** argv) {
  CLI::App app{"generate a synthetic categorical patient cohort"};
  std::int64_t patients = 281;
  std::uint64_t seed = 20240501;
  std::string csv_path = "synthetic_cohort.csv";
  std::string recode_path;
  app.add_option("--patients", patients, "number of rows")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--out", csv_path, "CSV file to write");
  app.add_option("--recode-out", recode_path, "also write the recode map (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot open " + csv_path);
    covbal::write_synthetic_cohort_csv(csv, patients, seed);
    if (!recode_path.empty()) {
      std::ofstream recode(recode_path, std::ios::binary);
      if (!recode) throw std::runtime_error("cannot open " + recode_path);
      recode << covbal::synthetic_recode_json();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
