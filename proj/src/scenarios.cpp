#include "covbal/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "covbal/csv.hpp"
#include "json.hpp"

namespace covbal {

namespace {

class TabularSampler final : public PopulationSampler {
 public:
  TabularSampler(const CovariateSchema& schema, const std::vector<double>& cumulative)
      : schema_(&schema), cumulative_(&cumulative) {}

  void next(PatientProfile& out, SplitMix64& rng) override {
    const double u = rng.next_double();
    const auto it = std::upper_bound(cumulative_->begin(), cumulative_->end(), u);
    auto cell = static_cast<std::int64_t>(std::min<std::ptrdiff_t>(it - cumulative_->begin(),
                                                                   static_cast<std::ptrdiff_t>(cumulative_->size()) - 1));
    const std::int64_t lr = schema_->unobserved_strata();
    out.observed.resize(static_cast<std::size_t>(schema_->observed_count()));
    out.unobserved.resize(static_cast<std::size_t>(schema_->unobserved_count()));
    schema_->decode_observed(cell / lr, out.observed);
    schema_->decode_unobserved(cell % lr, out.unobserved);
  }

 private:
  const CovariateSchema* schema_;
  const std::vector<double>* cumulative_;
};

class TabularModel final : public PopulationModel {
 public:
  explicit TabularModel(JointPmf joint) : joint_(std::move(joint)) {
    const auto& schema = joint_.schema();
    cumulative_.reserve(static_cast<std::size_t>(schema.observed_strata() * schema.unobserved_strata()));
    double acc = 0;
    for (std::int64_t s = 0; s < schema.observed_strata(); ++s)
      for (std::int64_t r = 0; r < schema.unobserved_strata(); ++r) {
        acc += joint_.cell(s, r);
        cumulative_.push_back(acc);
      }
    cumulative_.back() = 1.0;
  }

  const CovariateSchema& schema() const override { return joint_.schema(); }
  const JointPmf& joint() const override { return joint_; }
  std::unique_ptr<PopulationSampler> sampler() const override {
    return std::make_unique<TabularSampler>(joint_.schema(), cumulative_);
  }

 private:
  JointPmf joint_;
  std::vector<double> cumulative_;
};

CovariateSchema binary_schema(int observed, int unobserved) {
  std::vector<Covariate> obs, unobs;
  for (int k = 1; k <= observed; ++k) obs.push_back({"X" + std::to_string(k), 2});
  for (int j = 1; j <= unobserved; ++j) unobs.push_back({"U" + std::to_string(j), 2});
  return CovariateSchema(std::move(obs), std::move(unobs));
}

}  // namespace

std::vector<Rational> delta_joint_cells(const Rational& delta) {
  if (delta < Rational(0) || delta > Rational(3, 16))
    throw std::invalid_argument("delta must lie in [0, 3/16]");
  const Rational matched = Rational(1, 16) + delta;
  const Rational other = Rational(1, 16) - delta / Rational(3);
  std::vector<Rational> cells;
  cells.reserve(16);
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2)
      for (int u1 = 0; u1 < 2; ++u1)
        for (int u2 = 0; u2 < 2; ++u2) cells.push_back(u1 == x1 && u2 == x2 ? matched : other);
  return cells;
}

std::shared_ptr<const PopulationModel> delta_model(const Rational& delta) {
  auto cells = delta_joint_cells(delta);
  std::vector<double> mass(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) mass[i] = cells[i].value();
  return std::make_shared<TabularModel>(JointPmf(binary_schema(2, 2), std::move(mass)));
}

std::shared_ptr<const PopulationModel> tabular_model(JointPmf joint) {
  return std::make_shared<TabularModel>(std::move(joint));
}

namespace {

class ThresholdSampler final : public PopulationSampler {
 public:
  ThresholdSampler(double sigma1, double sigma2) : sigma1_(sigma1), sigma2_(sigma2) {}

  void next(PatientProfile& out, SplitMix64& rng) override {
    out.observed.resize(10);
    out.unobserved.resize(2);
    // Draw order: one word of coin bits, then the two threshold noises.
    const std::uint64_t bits = rng.next();
    int sum10 = 0, sum3 = 0;
    for (int k = 0; k < 10; ++k) {
      const int v = static_cast<int>((bits >> k) & 1u);
      out.observed[static_cast<std::size_t>(k)] = v + 1;
      sum10 += v;
      if (k < 3) sum3 += v;
    }
    out.unobserved[0] = (static_cast<double>(sum10) + sigma1_ * rng.next_normal() > 6.0) ? 2 : 1;
    out.unobserved[1] = (static_cast<double>(sum3) + sigma2_ * rng.next_normal() > 2.0) ? 2 : 1;
  }

 private:
  double sigma1_;
  double sigma2_;
};

class ThresholdModel final : public PopulationModel {
 public:
  ThresholdModel(double sigma1, double sigma2)
      : sigma1_(sigma1), sigma2_(sigma2), joint_(build_joint(sigma1, sigma2)) {}

  const CovariateSchema& schema() const override { return joint_.schema(); }
  const JointPmf& joint() const override { return joint_; }
  std::unique_ptr<PopulationSampler> sampler() const override {
    return std::make_unique<ThresholdSampler>(sigma1_, sigma2_);
  }

 private:
  static JointPmf build_joint(double sigma1, double sigma2) {
    CovariateSchema schema = binary_schema(10, 2);
    const std::int64_t ls = schema.observed_strata();
    std::vector<double> cells(static_cast<std::size_t>(ls) * 4, 0.0);
    std::vector<int> levels(10);
    const double base = 1.0 / static_cast<double>(ls);
    for (std::int64_t s = 0; s < ls; ++s) {
      schema.decode_observed(s, levels);
      int sum10 = 0, sum3 = 0;
      for (int k = 0; k < 10; ++k) {
        const int v = levels[static_cast<std::size_t>(k)] - 1;
        sum10 += v;
        if (k < 3) sum3 += v;
      }
      const double c1 = normal_cdf((static_cast<double>(sum10) - 6.0) / sigma1);
      const double c2 = normal_cdf((static_cast<double>(sum3) - 2.0) / sigma2);
      for (int u1 = 0; u1 < 2; ++u1)
        for (int u2 = 0; u2 < 2; ++u2) {
          const double p = base * (u1 ? c1 : 1 - c1) * (u2 ? c2 : 1 - c2);
          cells[static_cast<std::size_t>(s * 4 + u1 * 2 + u2)] = p;
        }
    }
    return JointPmf(std::move(schema), std::move(cells));
  }

  double sigma1_;
  double sigma2_;
  JointPmf joint_;
};

}  // namespace

std::shared_ptr<const PopulationModel> threshold_model(double sigma1, double sigma2) {
  if (!(sigma1 > 0) || !(sigma2 > 0)) throw std::invalid_argument("threshold noise scale must be positive");
  return std::make_shared<ThresholdModel>(sigma1, sigma2);
}

int Cohort::column(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return static_cast<int>(i);
  return -1;
}

Cohort load_cohort(const std::string& csv_path, const std::string& recode_json_path) {
  const CsvTable table = read_csv_file(csv_path);
  std::ifstream in(recode_json_path);
  if (!in) throw std::runtime_error("cannot open " + recode_json_path);
  nlohmann::ordered_json recode;
  try {
    recode = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("recode map " + recode_json_path + ": " + e.what());
  }
  if (!recode.is_object() || recode.empty()) throw std::runtime_error("recode map must be a nonempty object");

  Cohort cohort;
  std::vector<int> csv_columns;
  std::vector<std::unordered_map<std::string, int>> maps;
  for (const auto& [name, spec] : recode.items()) {
    const int col = table.column(name);
    if (col < 0) throw std::runtime_error("recode map column '" + name + "' is missing from the csv header");
    if (!spec.is_object() || spec.empty())
      throw std::runtime_error("recode entry for '" + name + "' must map raw values to levels");
    std::unordered_map<std::string, int> map;
    int max_level = 0;
    for (const auto& [raw, level] : spec.items()) {
      if (!level.is_number_integer() || level.get<int>() < 1)
        throw std::runtime_error("recode entry for '" + name + "' has a non-positive level");
      map[raw] = level.get<int>();
      max_level = std::max(max_level, level.get<int>());
    }
    if (max_level < 2) throw std::runtime_error("column '" + name + "' needs at least 2 levels");
    cohort.columns.push_back({name, max_level});
    csv_columns.push_back(col);
    maps.push_back(std::move(map));
  }

  cohort.rows.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    std::vector<int> row(cohort.columns.size());
    for (std::size_t c = 0; c < cohort.columns.size(); ++c) {
      const std::string& raw = table.rows[i][static_cast<std::size_t>(csv_columns[c])];
      auto it = maps[c].find(raw);
      if (it == maps[c].end())
        throw std::runtime_error("row " + std::to_string(i + 2) + ": unmapped value '" + raw + "' in column '" +
                                 cohort.columns[c].name + "'");
      row[c] = it->second;
    }
    cohort.rows.push_back(std::move(row));
  }
  if (cohort.rows.empty()) throw std::runtime_error("cohort csv has no data rows");
  return cohort;
}

std::vector<std::vector<std::int64_t>> level_counts(const Cohort& cohort) {
  std::vector<std::vector<std::int64_t>> counts;
  counts.reserve(cohort.columns.size());
  for (const auto& col : cohort.columns) counts.emplace_back(static_cast<std::size_t>(col.levels), 0);
  for (const auto& row : cohort.rows)
    for (std::size_t c = 0; c < cohort.columns.size(); ++c) ++counts[c][static_cast<std::size_t>(row[c] - 1)];
  return counts;
}

void write_cohort_csv(std::ostream& out, const Cohort& cohort) {
  CsvTable table;
  for (const auto& col : cohort.columns) table.header.push_back(col.name);
  for (const auto& row : cohort.rows) {
    std::vector<std::string> fields;
    fields.reserve(row.size());
    for (int level : row) fields.push_back(std::to_string(level));
    table.rows.push_back(std::move(fields));
  }
  write_csv(out, table);
}

namespace {

struct Split {
  CovariateSchema schema;
  std::vector<int> obs_cols;
  std::vector<int> unobs_cols;
};

Split split_cohort(const Cohort& cohort, std::span<const std::string> observed,
                   std::span<const std::string> unobserved) {
  auto pick = [&](std::span<const std::string> names, std::vector<int>& cols) {
    std::vector<Covariate> block;
    for (const auto& name : names) {
      const int c = cohort.column(name);
      if (c < 0) throw std::invalid_argument("cohort has no column named '" + name + "'");
      cols.push_back(c);
      block.push_back(cohort.columns[static_cast<std::size_t>(c)]);
    }
    return block;
  };
  Split split;
  auto obs = pick(observed, split.obs_cols);
  auto unobs = pick(unobserved, split.unobs_cols);
  split.schema = CovariateSchema(std::move(obs), std::move(unobs));
  return split;
}

}  // namespace

JointPmf empirical_joint(const Cohort& cohort, std::span<const std::string> observed,
                         std::span<const std::string> unobserved) {
  if (cohort.rows.empty()) throw std::invalid_argument("cohort is empty");
  Split split = split_cohort(cohort, observed, unobserved);
  const std::int64_t lr = split.schema.unobserved_strata();
  std::vector<double> cells(static_cast<std::size_t>(split.schema.observed_strata() * lr), 0.0);
  std::vector<int> obs_levels(split.obs_cols.size());
  std::vector<int> unobs_levels(split.unobs_cols.size());
  const double w = 1.0 / static_cast<double>(cohort.rows.size());
  for (const auto& row : cohort.rows) {
    for (std::size_t i = 0; i < split.obs_cols.size(); ++i) obs_levels[i] = row[static_cast<std::size_t>(split.obs_cols[i])];
    for (std::size_t i = 0; i < split.unobs_cols.size(); ++i)
      unobs_levels[i] = row[static_cast<std::size_t>(split.unobs_cols[i])];
    const std::int64_t s = split.schema.observed_index(obs_levels);
    const std::int64_t r = split.schema.unobserved_index(unobs_levels);
    cells[static_cast<std::size_t>(s * lr + r)] += w;
  }
  return JointPmf(std::move(split.schema), std::move(cells));
}

namespace {

class CohortSampler final : public PopulationSampler {
 public:
  CohortSampler(const Cohort& cohort, const Split& split, ArrivalPolicy policy)
      : cohort_(&cohort), split_(&split), policy_(policy) {}

  void next(PatientProfile& out, SplitMix64& rng) override {
    const auto rows = cohort_->rows.size();
    std::size_t pick;
    if (policy_ == ArrivalPolicy::Bootstrap) {
      pick = static_cast<std::size_t>(rng.next_below(rows));
    } else {
      if (order_.empty()) {
        order_.resize(rows);
        std::iota(order_.begin(), order_.end(), 0u);
        for (std::size_t i = rows; i-- > 1;) std::swap(order_[i], order_[rng.next_below(i + 1)]);
      }
      if (pos_ >= rows) throw std::runtime_error("cohort exhausted: permutation arrivals deal each patient once");
      pick = order_[pos_++];
    }
    const auto& row = cohort_->rows[pick];
    out.observed.resize(split_->obs_cols.size());
    out.unobserved.resize(split_->unobs_cols.size());
    for (std::size_t i = 0; i < split_->obs_cols.size(); ++i)
      out.observed[i] = row[static_cast<std::size_t>(split_->obs_cols[i])];
    for (std::size_t i = 0; i < split_->unobs_cols.size(); ++i)
      out.unobserved[i] = row[static_cast<std::size_t>(split_->unobs_cols[i])];
  }

 private:
  const Cohort* cohort_;
  const Split* split_;
  ArrivalPolicy policy_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

class CohortModel final : public PopulationModel {
 public:
  CohortModel(Cohort cohort, std::span<const std::string> observed, std::span<const std::string> unobserved,
              ArrivalPolicy policy)
      : cohort_(std::move(cohort)),
        split_(split_cohort(cohort_, observed, unobserved)),
        joint_(empirical_joint(cohort_, observed, unobserved)),
        policy_(policy) {}

  const CovariateSchema& schema() const override { return joint_.schema(); }
  const JointPmf& joint() const override { return joint_; }
  std::int64_t max_draws() const override {
    return policy_ == ArrivalPolicy::Permutation ? static_cast<std::int64_t>(cohort_.rows.size()) : INT64_MAX;
  }
  std::unique_ptr<PopulationSampler> sampler() const override {
    return std::make_unique<CohortSampler>(cohort_, split_, policy_);
  }

 private:
  Cohort cohort_;
  Split split_;
  JointPmf joint_;
  ArrivalPolicy policy_;
};

}  // namespace

std::shared_ptr<const PopulationModel> cohort_model(Cohort cohort, std::span<const std::string> observed,
                                                    std::span<const std::string> unobserved, ArrivalPolicy policy) {
  return std::make_shared<CohortModel>(std::move(cohort), observed, unobserved, policy);
}

namespace {

int draw_categorical(std::span<const double> probs, SplitMix64& rng) {
  const double u = rng.next_double();
  double acc = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(probs.size());
}

}  // namespace

Cohort synthetic_cohort(std::int64_t patients, std::uint64_t seed) {
  if (patients < 1) throw std::invalid_argument("cohort size must be positive");
  Cohort cohort;
  cohort.columns = {{"Gender", 2},        {"SITEID", 3},    {"Major Race", 5},
                    {"Marital Status", 3}, {"Employment Pattern", 4}, {"Education", 3}};
  SplitMix64 rng(mix64(seed ^ 0x636f686f72740ull));  // "cohort"

  constexpr double kClass[3] = {0.5, 0.3, 0.2};
  constexpr double kGender[2] = {0.55, 0.45};
  constexpr double kSite[3][3] = {{0.6, 0.3, 0.1}, {0.2, 0.5, 0.3}, {0.1, 0.2, 0.7}};
  constexpr double kRace[3][5] = {{0.45, 0.25, 0.15, 0.10, 0.05},
                                  {0.25, 0.35, 0.20, 0.10, 0.10},
                                  {0.15, 0.20, 0.35, 0.15, 0.15}};
  constexpr double kMarital[3][3] = {{0.55, 0.25, 0.20}, {0.35, 0.40, 0.25}, {0.20, 0.30, 0.50}};
  constexpr double kEmployment[3][4] = {{0.55, 0.20, 0.15, 0.10}, {0.35, 0.30, 0.20, 0.15}, {0.15, 0.25, 0.30, 0.30}};
  constexpr double kEducation[3][3] = {{0.50, 0.35, 0.15}, {0.30, 0.45, 0.25}, {0.20, 0.35, 0.45}};

  cohort.rows.reserve(static_cast<std::size_t>(patients));
  for (std::int64_t i = 0; i < patients; ++i) {
    const int z = draw_categorical(kClass, rng) - 1;
    std::vector<int> row(6);
    row[0] = draw_categorical(kGender, rng);
    row[1] = draw_categorical(kSite[z], rng);
    row[2] = draw_categorical(kRace[z], rng);
    row[3] = draw_categorical(kMarital[z], rng);
    double employment[4];
    std::copy(std::begin(kEmployment[z]), std::end(kEmployment[z]), employment);
    if (row[3] == 1) {  // married: more full-time, less unemployed
      employment[0] += 0.10;
      employment[3] -= 0.10;
    } else if (row[3] == 3) {
      employment[0] -= 0.10;
      employment[3] += 0.10;
    }
    row[4] = draw_categorical(employment, rng);
    double education[3];
    std::copy(std::begin(kEducation[z]), std::end(kEducation[z]), education);
    if (row[1] == 1) {  // site skews toward fewer school years
      education[0] += 0.10;
      education[2] -= 0.10;
    } else if (row[1] == 3) {
      education[0] -= 0.10;
      education[2] += 0.10;
    }
    row[5] = draw_categorical(education, rng);
    cohort.rows.push_back(std::move(row));
  }
  return cohort;
}

namespace {

const std::vector<std::vector<std::vector<std::string>>>& raw_aliases() {
  // Aliases per column/level; multi-entry levels exercise many-to-one recodes.
  static const std::vector<std::vector<std::vector<std::string>>> aliases = {
      {{"Male"}, {"Female"}},
      {{"76"}, {"135"}, {"464"}},
      {{"White"}, {"Black"}, {"Hispanic"}, {"Asian"}, {"Other", "Multiple"}},
      {{"Legally married", "Cohabit"}, {"Single", "Never married"}, {"Divorced", "Widowed", "Separated"}},
      {{"Full time"}, {"Part time"}, {"Student", "Homemaker"}, {"Unemployed", "Retired"}},
      {{"Less than 12 years"}, {"12 to 15 years"}, {"16 years or more"}}};
  return aliases;
}

}  // namespace

void write_synthetic_cohort_csv(std::ostream& out, std::int64_t patients, std::uint64_t seed) {
  const Cohort cohort = synthetic_cohort(patients, seed);
  SplitMix64 alias_rng(mix64(seed ^ 0x616c6961730ull));  // "alias"
  const auto& aliases = raw_aliases();
  CsvTable table;
  table.header.push_back("PatientID");
  for (const auto& col : cohort.columns) table.header.push_back(col.name);
  for (std::size_t i = 0; i < cohort.rows.size(); ++i) {
    std::vector<std::string> fields;
    fields.reserve(7);
    fields.push_back("P" + std::to_string(1000 + i));
    for (std::size_t c = 0; c < 6; ++c) {
      const auto& names = aliases[c][static_cast<std::size_t>(cohort.rows[i][c] - 1)];
      fields.push_back(names[alias_rng.next_below(names.size())]);
    }
    table.rows.push_back(std::move(fields));
  }
  write_csv(out, table);
}

std::string synthetic_recode_json() {
  nlohmann::ordered_json recode;
  const auto& aliases = raw_aliases();
  const Cohort cohort = synthetic_cohort(1, 1);
  for (std::size_t c = 0; c < 6; ++c) {
    nlohmann::ordered_json map;
    for (std::size_t level = 0; level < aliases[c].size(); ++level)
      for (const auto& raw : aliases[c][level]) map[raw] = level + 1;
    recode[cohort.columns[c].name] = std::move(map);
  }
  return recode.dump(2) + "\n";
}

}  // namespace covbal
