#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "covbal/rational.hpp"
#include "covbal/rng.hpp"
#include "covbal/schema.hpp"
#include "covbal/theory.hpp"

namespace covbal {

// Per-replicate patient stream. Instances are created fresh per replicate
// and consume the replicate's sampling lane; models stay immutable.
class PopulationSampler {
 public:
  virtual ~PopulationSampler() = default;
  virtual void next(PatientProfile& out, SplitMix64& rng) = 0;
};

// An immutable population: a schema, the exact joint pmf (the theory
// oracle), and a sampler factory. Safe to share across threads.
class PopulationModel {
 public:
  virtual ~PopulationModel() = default;
  virtual const CovariateSchema& schema() const = 0;
  virtual const JointPmf& joint() const = 0;
  // Largest n a single replicate may draw (finite for permutation arrivals).
  virtual std::int64_t max_draws() const { return INT64_MAX; }
  virtual std::unique_ptr<PopulationSampler> sampler() const = 0;
};

/* Two binary observed and two binary unobserved covariates with a single
 * association knob delta in [0, 3/16]: the four cells where the unobserved
 * pair equals the observed pair carry 1/16 + delta, the rest carry
 * 1/16 - delta/3. All four univariate marginals stay exactly (1/2, 1/2). */
std::vector<Rational> delta_joint_cells(const Rational& delta);
std::shared_ptr<const PopulationModel> delta_model(const Rational& delta);

/* Ten iid balanced binary observed covariates; two binary unobserved
 * responses from noisy threshold rules:
 *   U1 = 1{ sum(X) + e1 > 6 },        e1 ~ N(0, sigma1^2)
 *   U2 = 1{ X1 + X2 + X3 + e2 > 2 },  e2 ~ N(0, sigma2^2)
 * Conditionals are exact normal CDF values, so the joint pmf is closed-form. */
std::shared_ptr<const PopulationModel> threshold_model(double sigma1, double sigma2 = 1.0);

// Any explicit joint over a schema; sampling is inverse-CDF on the cells.
std::shared_ptr<const PopulationModel> tabular_model(JointPmf joint);

/* A finite table of level-coded patients. Columns are categorical; rows are
 * complete (no missing values). */
struct Cohort {
  std::vector<Covariate> columns;
  std::vector<std::vector<int>> rows;  // rows x columns, 1-based levels

  int column(std::string_view name) const;  // -1 when absent
};

/* Loads a cohort from CSV using a recode map: an object keyed by column
 * name whose values map raw strings to 1-based levels (many-to-one merges
 * collapse categories). Columns absent from the map are ignored. Errors
 * carry the offending row number and value. */
Cohort load_cohort(const std::string& csv_path, const std::string& recode_json_path);

// Per-column level occupancy counts, same order as cohort.columns.
std::vector<std::vector<std::int64_t>> level_counts(const Cohort& cohort);

// Writes raw-level CSV (levels as integers) for round-tripping.
void write_cohort_csv(std::ostream& out, const Cohort& cohort);

// Relative-frequency joint for a chosen observed/unobserved split.
JointPmf empirical_joint(const Cohort& cohort, std::span<const std::string> observed,
                         std::span<const std::string> unobserved);

enum class ArrivalPolicy { Permutation, Bootstrap };

/* Population backed by a cohort: Permutation deals each patient exactly once
 * per replicate in a fresh uniform order (throws when exhausted); Bootstrap
 * draws rows iid with replacement. */
std::shared_ptr<const PopulationModel> cohort_model(Cohort cohort, std::span<const std::string> observed,
                                                    std::span<const std::string> unobserved, ArrivalPolicy policy);

/* Deterministic six-column demo cohort (Gender, SITEID, Major Race, Marital
 * Status, Employment Pattern, Education) driven by a latent mixing class, so
 * the last two columns are genuinely predictable from the first four. */
Cohort synthetic_cohort(std::int64_t patients, std::uint64_t seed);

// Same cohort rendered with raw string categories (including many-to-one
// aliases) so the recode path is exercised end to end.
void write_synthetic_cohort_csv(std::ostream& out, std::int64_t patients, std::uint64_t seed);

// The recode map matching write_synthetic_cohort_csv, as a JSON string.
std::string synthetic_recode_json();

}  // namespace covbal
