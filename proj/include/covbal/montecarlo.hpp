#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "covbal/procedures.hpp"
#include "covbal/scenarios.hpp"
#include "covbal/theory.hpp"

namespace covbal {

// One tracked quantity: the normalized imbalance n^{-1/2} D_{n,g}(scope) for
// arm g (1-based), recorded once per replicate.
struct Metric {
  Scope scope;
  int arm = 1;
  std::string id;
};

struct Moments {
  double mean = 0;
  double sd = 0;
  double se_mean = 0;
  double se_sd = 0;
  std::size_t count = 0;
};

// Sample mean and standard deviation (divisor R-1) with standard errors
// se_mean = sd / sqrt(R) and se_sd ~= sd / sqrt(2 (R-1)). Throws on empty
// input; with a single value the spread fields are NaN.
Moments summarize(std::span<const double> values);

// Worker count: the request when positive, else the COVBAL_THREADS
// environment variable, else the hardware concurrency (at least 1).
int resolve_threads(int requested);

/* Runs one allocation sequence of `patients` arrivals and returns the
 * normalized imbalance for each metric. Patient sampling uses the stream
 * replicate_seed(master_seed, replicate_index, 0) and treatment draws use
 * lane 1, so for a fixed (seed, replicate) every procedure faces the same
 * arrival sequence and the same treatment randomness (common random
 * numbers), and results do not depend on scheduling. */
std::vector<double> run_replicate(const PopulationModel& model, const ProcedureSpec& procedure, std::int64_t patients,
                                  std::span<const Metric> metrics, std::uint64_t master_seed,
                                  std::int64_t replicate_index);

struct StudyConfig {
  std::shared_ptr<const PopulationModel> model;
  std::vector<ProcedureSpec> procedures;
  std::vector<Metric> metrics;
  std::int64_t patients = 0;
  std::int64_t replicates = 0;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = resolve from environment/hardware
};

struct SummaryRow {
  std::string procedure;
  std::string metric;
  int arm = 1;
  Moments moments;
  // Closed-form prediction on the SD scale, when one applies: "cr",
  // "strpb-large", "strpb-small", or "balanced"; empty otherwise.
  std::string theory_ref;
  double theory_value = std::numeric_limits<double>::quiet_NaN();
};

struct StudySummary {
  std::vector<SummaryRow> rows;  // procedure-major, metrics in config order
};

struct TheoryPrediction {
  std::string ref;
  double value = std::numeric_limits<double>::quiet_NaN();
};

/* Closed-form SD of the normalized imbalance for this procedure and metric,
 * when one of the library formulas applies: complete randomization on any
 * scope; block or balanced designs on unobserved-side scopes (with the joint
 * regrouped onto the covariates a subset procedure actually uses, skipping
 * scopes that do not survive the regrouping). `ref` is empty when no formula
 * applies. */
TheoryPrediction predict_sd(const JointPmf& joint, const ProcedureSpec& procedure, const Metric& metric,
                            std::int64_t patients);

// Monte Carlo over replicates 0..R-1, parallelized over a work-stealing
// replicate counter. Aggregation is by replicate index, so the summary is
// bitwise identical for any thread count. A worker failure is rethrown with
// the failing replicate index.
StudySummary run_study(const StudyConfig& config);

struct TrendPoint {
  std::int64_t patients = 0;
  double variance = 0;
};

struct VarianceTrend {
  std::vector<TrendPoint> points;
  double plateau = 0;            // variance at the largest size
  bool decays_to_zero = false;   // strictly decreasing and final < 25% of first
};

// Variance of the normalized imbalance across an increasing grid of study
// sizes, for one procedure and one metric (config must hold exactly one of
// each). Distinguishes O(1) plateaus from O(1/n) decay.
VarianceTrend estimate_variance_trend(StudyConfig config, std::span<const std::int64_t> sizes);

}  // namespace covbal
