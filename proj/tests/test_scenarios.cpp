#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "covbal/rational.hpp"
#include "covbal/rng.hpp"
#include "covbal/scenarios.hpp"
#include "covbal/schema.hpp"
#include "covbal/theory.hpp"
#include "doctest.h"

using covbal::Cohort;
using covbal::CovariateSchema;
using covbal::JointPmf;
using covbal::PatientProfile;
using covbal::Rational;
using covbal::SplitMix64;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  out.close();
  return path;
}

// cell order: observed stratum (x1,x2) major, unobserved stratum (u1,u2) minor
std::size_t cell_index(int x1, int x2, int u1, int u2) {
  return static_cast<std::size_t>(((x1 - 1) * 2 + (x2 - 1)) * 4 + (u1 - 1) * 2 + (u2 - 1));
}

}  // namespace

TEST_CASE("association cells follow the diagonal construction exactly") {
  SUBCASE("quarter tilt") {
    const auto cells = covbal::delta_joint_cells(Rational(3, 100));
    REQUIRE(cells.size() == 16);
    int diagonal = 0;
    Rational mass;
    for (int x1 = 1; x1 <= 2; ++x1)
      for (int x2 = 1; x2 <= 2; ++x2)
        for (int u1 = 1; u1 <= 2; ++u1)
          for (int u2 = 1; u2 <= 2; ++u2) {
            const Rational& c = cells[cell_index(x1, x2, u1, u2)];
            if (u1 == x1 && u2 == x2) {
              CHECK(c == Rational(37, 400));
              ++diagonal;
            } else {
              CHECK(c == Rational(21, 400));
            }
            mass += c;
          }
    CHECK(diagonal == 4);
    CHECK(mass == Rational(1));
  }

  SUBCASE("strong tilt") {
    const auto cells = covbal::delta_joint_cells(Rational(2, 16));
    CHECK(cells[cell_index(1, 1, 1, 1)] == Rational(3, 16));
    CHECK(cells[cell_index(1, 1, 2, 1)] == Rational(1, 48));
  }

  SUBCASE("every univariate marginal stays exactly balanced") {
    for (const Rational& delta : {Rational(0), Rational(1, 16), Rational(7, 100), Rational(3, 16)}) {
      const auto cells = covbal::delta_joint_cells(delta);
      Rational x1_low, u1_low, u2_low;
      for (int x1 = 1; x1 <= 2; ++x1)
        for (int x2 = 1; x2 <= 2; ++x2)
          for (int u1 = 1; u1 <= 2; ++u1)
            for (int u2 = 1; u2 <= 2; ++u2) {
              const Rational& c = cells[cell_index(x1, x2, u1, u2)];
              if (x1 == 1) x1_low += c;
              if (u1 == 1) u1_low += c;
              if (u2 == 1) u2_low += c;
            }
      CHECK(x1_low == Rational(1, 2));
      CHECK(u1_low == Rational(1, 2));
      CHECK(u2_low == Rational(1, 2));
    }
  }

  SUBCASE("tilt outside the feasible range is rejected") {
    CHECK_THROWS_AS(covbal::delta_joint_cells(Rational(-1, 100)), std::invalid_argument);
    CHECK_THROWS_AS(covbal::delta_joint_cells(Rational(4, 16)), std::invalid_argument);
  }
}

TEST_CASE("association model samples its own joint") {
  const auto model = covbal::delta_model(Rational(1, 16));
  const auto& schema = model->schema();
  CHECK(schema.observed_count() == 2);
  CHECK(schema.unobserved_count() == 2);
  CHECK(schema.observed()[0].name == "X1");
  CHECK(schema.unobserved()[1].name == "U2");
  CHECK(model->max_draws() == INT64_MAX);

  // joint mirrors the exact cells
  const auto cells = covbal::delta_joint_cells(Rational(1, 16));
  for (std::int64_t s = 0; s < 4; ++s)
    for (std::int64_t r = 0; r < 4; ++r)
      CHECK(model->joint().cell(s, r) ==
            doctest::Approx(cells[static_cast<std::size_t>(s * 4 + r)].value()).epsilon(1e-15));

  // empirical cell frequencies within 4 binomial standard errors
  auto sampler = model->sampler();
  SplitMix64 rng(covbal::replicate_seed(2024, 0, 0));
  const int n = 100000;
  std::array<std::int64_t, 16> counts{};
  PatientProfile p;
  for (int i = 0; i < n; ++i) {
    sampler->next(p, rng);
    counts[cell_index(p.observed[0], p.observed[1], p.unobserved[0], p.unobserved[1])]++;
  }
  for (int x1 = 1; x1 <= 2; ++x1)
    for (int x2 = 1; x2 <= 2; ++x2)
      for (int u1 = 1; u1 <= 2; ++u1)
        for (int u2 = 1; u2 <= 2; ++u2) {
          const double target = cells[cell_index(x1, x2, u1, u2)].value();
          const double freq = static_cast<double>(counts[cell_index(x1, x2, u1, u2)]) / n;
          const double se = std::sqrt(target * (1 - target) / n);
          CHECK(std::fabs(freq - target) < 4 * se);
        }
}

TEST_CASE("threshold model computes exact noisy-threshold conditionals") {
  const auto model = covbal::threshold_model(1.0);
  const auto& schema = model->schema();
  REQUIRE(schema.observed_count() == 10);
  REQUIRE(schema.observed_strata() == 1024);
  REQUIRE(schema.unobserved_strata() == 4);

  SUBCASE("joint cells equal the closed form on every stratum") {
    std::vector<int> levels(10);
    for (std::int64_t s = 0; s < 1024; ++s) {
      schema.decode_observed(s, levels);
      int sum10 = 0, sum3 = 0;
      for (int k = 0; k < 10; ++k) {
        sum10 += levels[static_cast<std::size_t>(k)] - 1;
        if (k < 3) sum3 += levels[static_cast<std::size_t>(k)] - 1;
      }
      const double c1 = covbal::normal_cdf(static_cast<double>(sum10) - 6.0);
      const double c2 = covbal::normal_cdf(static_cast<double>(sum3) - 2.0);
      // level 2 means the noisy sum cleared the threshold
      CHECK(model->joint().cell(s, schema.unobserved_index(std::array<int, 2>{2, 2})) ==
            doctest::Approx(c1 * c2 / 1024.0).epsilon(1e-12));
      CHECK(model->joint().cell(s, schema.unobserved_index(std::array<int, 2>{1, 1})) ==
            doctest::Approx((1 - c1) * (1 - c2) / 1024.0).epsilon(1e-12));
      CHECK(model->joint().stratum_prob(s) == doctest::Approx(1.0 / 1024.0).epsilon(1e-12));
    }
  }

  SUBCASE("first-threshold marginal matches the binomial enumeration") {
    double expected = 0;
    double binom = 1;  // C(10, k) built incrementally
    for (int k = 0; k <= 10; ++k) {
      expected += binom / 1024.0 * covbal::normal_cdf(static_cast<double>(k) - 6.0);
      binom = binom * (10 - k) / (k + 1);
    }
    CHECK(model->joint().unobs_margin_prob(0, 2) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.298678).epsilon(1e-5));
    // the matching asymptotic scale for the complete-randomization margin
    CHECK(std::sqrt(0.16 * (1.0 - expected)) == doctest::Approx(0.335).epsilon(2e-3));
  }

  SUBCASE("sampler agrees with the conditional law given the coin total") {
    auto sampler = model->sampler();
    SplitMix64 rng(covbal::replicate_seed(77, 0, 0));
    const int n = 100000;
    std::map<int, std::array<std::int64_t, 2>> by_total;  // coin total -> {count, exceed count}
    PatientProfile p;
    for (int i = 0; i < n; ++i) {
      sampler->next(p, rng);
      int sum10 = 0;
      for (int v : p.observed) sum10 += v - 1;
      auto& cell = by_total[sum10];
      cell[0]++;
      if (p.unobserved[0] == 2) cell[1]++;
    }
    for (int k : {4, 5, 6, 7}) {
      const auto& cell = by_total[k];
      REQUIRE(cell[0] > 1000);
      const double target = covbal::normal_cdf(static_cast<double>(k) - 6.0);
      const double freq = static_cast<double>(cell[1]) / static_cast<double>(cell[0]);
      const double se = std::sqrt(target * (1 - target) / static_cast<double>(cell[0]));
      CHECK(std::fabs(freq - target) < 5 * se);
    }
  }

  SUBCASE("noise scales must be positive") {
    CHECK_THROWS_AS(covbal::threshold_model(0.0), std::invalid_argument);
    CHECK_THROWS_AS(covbal::threshold_model(1.0, -2.0), std::invalid_argument);
  }
}

TEST_CASE("tabular model wraps an explicit joint") {
  const CovariateSchema schema({{"X", 2}}, {{"U", 2}});
  const std::vector<double> cells = {0.4, 0.1, 0.2, 0.3};
  const auto model = covbal::tabular_model(JointPmf(schema, cells));
  CHECK(model->joint().cell(1, 0) == doctest::Approx(0.2).epsilon(1e-15));

  auto sampler = model->sampler();
  SplitMix64 rng(5);
  const int n = 50000;
  std::array<std::int64_t, 4> counts{};
  PatientProfile p;
  for (int i = 0; i < n; ++i) {
    sampler->next(p, rng);
    counts[static_cast<std::size_t>((p.observed[0] - 1) * 2 + (p.unobserved[0] - 1))]++;
  }
  for (std::size_t c = 0; c < 4; ++c) {
    const double freq = static_cast<double>(counts[c]) / n;
    const double se = std::sqrt(cells[c] * (1 - cells[c]) / n);
    CHECK(std::fabs(freq - cells[c]) < 4 * se);
  }
}

TEST_CASE("cohort csv ingestion recodes raw categories") {
  const std::string csv =
      "PatientID,Gender,Marital Status\n"
      "P1,Female,\"Legally married\"\n"
      "P2,Male,Cohabit\n"
      "P3,Female,\"Divorced\"\n"
      "P4,Male,Single\n";
  const std::string recode = R"({
    "Gender": {"Female": 1, "Male": 2},
    "Marital Status": {"Legally married": 1, "Cohabit": 1, "Single": 2, "Divorced": 3}
  })";
  const auto csv_path = temp_file("covbal_cohort.csv", csv);
  const auto recode_path = temp_file("covbal_recode.json", recode);

  SUBCASE("valid file loads with merged categories") {
    const Cohort cohort = covbal::load_cohort(csv_path.string(), recode_path.string());
    REQUIRE(cohort.columns.size() == 2);  // PatientID is not in the recode map
    CHECK(cohort.column("Gender") == 0);
    CHECK(cohort.column("Marital Status") == 1);
    CHECK(cohort.column("PatientID") == -1);
    CHECK(cohort.columns[0].levels == 2);
    CHECK(cohort.columns[1].levels == 3);
    REQUIRE(cohort.rows.size() == 4);
    CHECK(cohort.rows[0] == std::vector<int>{1, 1});
    CHECK(cohort.rows[1] == std::vector<int>{2, 1});  // Cohabit merges into level 1
    CHECK(cohort.rows[2] == std::vector<int>{1, 3});
    CHECK(cohort.rows[3] == std::vector<int>{2, 2});

    const auto counts = covbal::level_counts(cohort);
    CHECK(counts[0] == std::vector<std::int64_t>{2, 2});
    CHECK(counts[1] == std::vector<std::int64_t>{2, 1, 1});
  }

  SUBCASE("unmapped values are reported with their row number") {
    const auto bad_path = temp_file("covbal_cohort_bad.csv",
                                    "Gender,Marital Status\n"
                                    "Female,Cohabit\n"
                                    "Male,Widowed\n");
    try {
      covbal::load_cohort(bad_path.string(), recode_path.string());
      FAIL("expected an ingestion error");
    } catch (const std::runtime_error& e) {
      const std::string message = e.what();
      CHECK(message.find("row 3") != std::string::npos);  // header is row 1
      CHECK(message.find("Widowed") != std::string::npos);
      CHECK(message.find("Marital Status") != std::string::npos);
    }
  }

  SUBCASE("missing columns and malformed maps are rejected") {
    const auto no_column = temp_file("covbal_cohort_nocol.csv", "Gender\nFemale\n");
    CHECK_THROWS_WITH_AS(covbal::load_cohort(no_column.string(), recode_path.string()),
                         "recode map column 'Marital Status' is missing from the csv header", std::runtime_error);

    const auto single_level = temp_file("covbal_recode_single.json", R"({"Gender": {"Female": 1}})");
    CHECK_THROWS_AS(covbal::load_cohort(csv_path.string(), single_level.string()), std::runtime_error);

    const auto not_object = temp_file("covbal_recode_arr.json", R"([1, 2])");
    CHECK_THROWS_AS(covbal::load_cohort(csv_path.string(), not_object.string()), std::runtime_error);

    CHECK_THROWS_AS(covbal::load_cohort("/nonexistent/file.csv", recode_path.string()), std::runtime_error);
  }
}

TEST_CASE("empirical joint counts relative frequencies") {
  Cohort cohort;
  cohort.columns = {{"A", 2}, {"B", 2}};
  cohort.rows = {{1, 1}, {1, 1}, {1, 2}, {2, 2}};

  const std::array<std::string, 1> obs = {"A"};
  const std::array<std::string, 1> unobs = {"B"};
  const JointPmf joint = covbal::empirical_joint(cohort, obs, unobs);
  CHECK(joint.cell(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(joint.cell(0, 1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(joint.cell(1, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(joint.cell(1, 1) == doctest::Approx(0.25).epsilon(1e-15));

  SUBCASE("single profile is a point mass") {
    Cohort one;
    one.columns = cohort.columns;
    one.rows = {{2, 1}};
    const JointPmf point = covbal::empirical_joint(one, obs, unobs);
    CHECK(point.cell(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
    std::vector<double> cells;
    for (std::int64_t s = 0; s < 2; ++s)
      for (std::int64_t r = 0; r < 2; ++r) cells.push_back(point.cell(s, r));
    CHECK(covbal::shannon_entropy(cells) == doctest::Approx(0.0).epsilon(1e-15));
  }

  SUBCASE("name sets must be disjoint and present") {
    const std::array<std::string, 1> dup = {"A"};
    CHECK_THROWS_AS(covbal::empirical_joint(cohort, obs, dup), std::invalid_argument);
    const std::array<std::string, 1> missing = {"C"};
    CHECK_THROWS_AS(covbal::empirical_joint(cohort, obs, missing), std::invalid_argument);
  }
}

TEST_CASE("cohort arrivals deal or resample rows") {
  Cohort cohort;
  cohort.columns = {{"A", 2}, {"B", 3}};
  SplitMix64 fill(3);
  for (int i = 0; i < 20; ++i)
    cohort.rows.push_back({static_cast<int>(fill.next_below(2)) + 1, static_cast<int>(fill.next_below(3)) + 1});
  const std::array<std::string, 1> obs = {"A"};
  const std::array<std::string, 1> unobs = {"B"};

  SUBCASE("permutation arrivals use each row exactly once") {
    const auto model = covbal::cohort_model(cohort, obs, unobs, covbal::ArrivalPolicy::Permutation);
    CHECK(model->max_draws() == 20);

    std::multiset<std::pair<int, int>> expected;
    for (const auto& row : cohort.rows) expected.insert({row[0], row[1]});

    auto sampler = model->sampler();
    SplitMix64 rng(11);
    std::multiset<std::pair<int, int>> seen;
    PatientProfile p;
    for (int i = 0; i < 20; ++i) {
      sampler->next(p, rng);
      seen.insert({p.observed[0], p.unobserved[0]});
    }
    CHECK(seen == expected);
    CHECK_THROWS_WITH_AS(sampler->next(p, rng), "cohort exhausted: permutation arrivals deal each patient once",
                         std::runtime_error);

    // a fresh replicate deals a different order but the same multiset
    auto sampler2 = model->sampler();
    SplitMix64 rng2(12);
    std::vector<std::pair<int, int>> order1, order2;
    auto sampler1 = model->sampler();
    SplitMix64 rng1(11);
    for (int i = 0; i < 20; ++i) {
      sampler1->next(p, rng1);
      order1.push_back({p.observed[0], p.unobserved[0]});
      sampler2->next(p, rng2);
      order2.push_back({p.observed[0], p.unobserved[0]});
    }
    CHECK(order1 != order2);
  }

  SUBCASE("bootstrap arrivals draw rows with replacement indefinitely") {
    const auto model = covbal::cohort_model(cohort, obs, unobs, covbal::ArrivalPolicy::Bootstrap);
    CHECK(model->max_draws() == INT64_MAX);
    std::set<std::pair<int, int>> rows;
    for (const auto& row : cohort.rows) rows.insert({row[0], row[1]});
    auto sampler = model->sampler();
    SplitMix64 rng(13);
    PatientProfile p;
    for (int i = 0; i < 100; ++i) {  // more draws than rows
      sampler->next(p, rng);
      CHECK(rows.count({p.observed[0], p.unobserved[0]}) == 1);
    }
  }

  SUBCASE("the empirical joint drives the exact oracle") {
    const auto model = covbal::cohort_model(cohort, obs, unobs, covbal::ArrivalPolicy::Permutation);
    const JointPmf direct = covbal::empirical_joint(cohort, obs, unobs);
    for (std::int64_t s = 0; s < 2; ++s)
      for (std::int64_t r = 0; r < 3; ++r) CHECK(model->joint().cell(s, r) == doctest::Approx(direct.cell(s, r)));
  }
}

TEST_CASE("synthetic cohort generator is deterministic and well formed") {
  const Cohort a = covbal::synthetic_cohort(281, 20240501);
  const Cohort b = covbal::synthetic_cohort(281, 20240501);
  CHECK(a.rows == b.rows);
  CHECK(a.rows.size() == 281);
  REQUIRE(a.columns.size() == 6);
  CHECK(a.columns[0].name == "Gender");
  CHECK(a.columns[1].name == "SITEID");
  CHECK(a.columns[2].name == "Major Race");
  CHECK(a.columns[3].name == "Marital Status");
  CHECK(a.columns[4].name == "Employment Pattern");
  CHECK(a.columns[5].name == "Education");
  const std::array<int, 6> levels = {2, 3, 5, 3, 4, 3};
  for (std::size_t c = 0; c < 6; ++c) {
    CHECK(a.columns[c].levels == levels[c]);
    for (const auto& row : a.rows) {
      CHECK(row[c] >= 1);
      CHECK(row[c] <= levels[c]);
    }
  }

  const Cohort other = covbal::synthetic_cohort(281, 99);
  CHECK(other.rows != a.rows);
  CHECK_THROWS_AS(covbal::synthetic_cohort(0, 1), std::invalid_argument);
}

TEST_CASE("synthetic cohort round-trips through csv and recode map") {
  std::ostringstream csv;
  covbal::write_synthetic_cohort_csv(csv, 100, 424242);
  const auto csv_path = temp_file("covbal_synth.csv", csv.str());
  const auto recode_path = temp_file("covbal_synth_recode.json", covbal::synthetic_recode_json());

  const Cohort loaded = covbal::load_cohort(csv_path.string(), recode_path.string());
  const Cohort direct = covbal::synthetic_cohort(100, 424242);
  REQUIRE(loaded.columns.size() == direct.columns.size());
  for (std::size_t c = 0; c < direct.columns.size(); ++c) CHECK(loaded.columns[c].name == direct.columns[c].name);
  CHECK(loaded.rows == direct.rows);

  SUBCASE("integer-rendered csv reloads through an identity recode") {
    std::ostringstream raw;
    covbal::write_cohort_csv(raw, direct);
    const auto raw_path = temp_file("covbal_synth_raw.csv", raw.str());
    std::string identity = "{";
    for (std::size_t c = 0; c < direct.columns.size(); ++c) {
      if (c) identity += ",";
      identity += "\"" + direct.columns[c].name + "\":{";
      for (int level = 1; level <= direct.columns[c].levels; ++level) {
        if (level > 1) identity += ",";
        identity += "\"" + std::to_string(level) + "\":" + std::to_string(level);
      }
      identity += "}";
    }
    identity += "}";
    const auto identity_path = temp_file("covbal_synth_identity.json", identity);
    const Cohort reloaded = covbal::load_cohort(raw_path.string(), identity_path.string());
    CHECK(reloaded.rows == direct.rows);
  }
}
