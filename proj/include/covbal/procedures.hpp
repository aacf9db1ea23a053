#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "covbal/ledger.hpp"
#include "covbal/rational.hpp"
#include "covbal/rng.hpp"
#include "covbal/schema.hpp"

namespace covbal {

// Smallest cycle on which the target arm counts are all integers: the least
// common multiple of the reduced ratio denominators. Requires strictly
// positive ratios summing to 1.
std::int64_t period(std::span<const Rational> ratios);

// One complete-randomization draw: arm g with probability ratio[g], realized
// as an exact integer draw on the common-denominator grid. Zero ratios are
// allowed (the arm is simply never drawn).
int assign_cr(std::span<const Rational> ratios, SplitMix64& rng);

/* Corrective probabilities for rank-based biased assignment. Values are
 * sorted nondecreasing: the arm ranked 1st (largest potential imbalance)
 * receives values[0], the arm ranked last receives values[m-1]. */
class BiasedProbabilities {
 public:
  explicit BiasedProbabilities(std::vector<Rational> values);

  const std::vector<Rational>& values() const { return values_; }
  int size() const { return static_cast<int>(values_.size()); }

  /* With the ratios sorted ascending, requires values[k] - ratio[k]
   * nondecreasing, strictly negative at k=0 and strictly positive at the
   * top: every corrective move pushes toward the target ratios. */
  void check_compatible(std::span<const Rational> ratios) const;

 private:
  std::vector<Rational> values_;
};

// Nonnegative weights for the overall, per-margin, and stratum terms of the
// potential-imbalance objective; exact sum 1.
class CarWeights {
 public:
  CarWeights(Rational overall, std::vector<Rational> margins, Rational stratum);

  const Rational& overall() const { return overall_; }
  const std::vector<Rational>& margins() const { return margins_; }
  const Rational& stratum() const { return stratum_; }
  bool stratum_positive() const { return !stratum_.is_zero(); }

 private:
  Rational overall_;
  std::vector<Rational> margins_;
  Rational stratum_;
};

/* Maps candidate potential imbalances to allocation probabilities: arms are
 * ranked by potential imbalance descending and handed the biased values in
 * order; arms tied on imbalance share the arithmetic mean of the values
 * their ranks span. Throws on NaN. */
std::vector<double> car_allocation_probs(std::span<const double> potential, const BiasedProbabilities& biased);

// Mutable per-run state of a randomization procedure. Accepts only the
// blinded observed view; one instance serves one allocation sequence.
class ProcedureState {
 public:
  virtual ~ProcedureState() = default;
  virtual int assign(const ObservedProfile& profile, SplitMix64& rng) = 0;
};

class CrState final : public ProcedureState {
 public:
  explicit CrState(std::vector<Rational> ratios);
  int assign(const ObservedProfile& profile, SplitMix64& rng) override;

 private:
  std::vector<Rational> ratios_;
  std::int64_t q_ = 1;
  std::vector<std::int64_t> cumulative_;
};

/* Stratified permuted blocks. Strata are formed from the selected observed
 * covariates (default: all). Each stratum draws from an urn holding
 * multiple * period(ratios) slots per block, filled in the exact ratio
 * proportions and uniformly shuffled. */
class StrPbState final : public ProcedureState {
 public:
  StrPbState(const CovariateSchema& schema, std::vector<Rational> ratios, int block_multiple = 1,
             std::unordered_map<std::int64_t, int> stratum_multiples = {}, std::vector<int> used_covariates = {});

  int assign(const ObservedProfile& profile, SplitMix64& rng) override;
  std::int64_t block_size() const { return static_cast<std::int64_t>(default_multiple_) * q_; }

 private:
  struct Block {
    std::vector<int> order;
    std::size_t pos = 0;
  };

  std::vector<int> used_;
  CovariateSchema reduced_;
  std::vector<Rational> ratios_;
  std::vector<std::int64_t> scaled_;
  std::int64_t q_ = 1;
  int default_multiple_ = 1;
  std::unordered_map<std::int64_t, int> multiples_;
  std::unordered_map<std::int64_t, Block> blocks_;
  std::vector<int> buf_;
};

/* Weighted covariate-adaptive randomization. The first patient is assigned
 * by complete randomization; afterwards each candidate arm t is scored by
 * the weighted sum of squared post-assignment imbalances over the overall,
 * margin, and stratum scopes, and arms are ranked into the biased
 * probabilities (ties share averaged mass).
 *
 * Ranking is exact: with weights w = a/W and ratios rho = R/Q, the candidate
 * scores differ by 2[(lambda_t - rho_t) - (lambda_t' - rho_t')], where
 * lambda_g is the weighted sum of current imbalances over the scopes the
 * patient belongs to, so sorting the integers W*Q*(lambda_g - rho_g) orders
 * the candidate scores without any floating-point comparison. */
class CarState final : public ProcedureState {
 public:
  CarState(const CovariateSchema& schema, std::vector<Rational> ratios, CarWeights weights,
           BiasedProbabilities biased, std::vector<int> used_covariates = {});

  int assign(const ObservedProfile& profile, SplitMix64& rng) override;

  // Post-assignment weighted squared imbalance if the next patient with this
  // profile were put on candidate_arm; evaluated in doubles for reporting.
  double potential_imbalance(const ObservedProfile& profile, int candidate_arm) const;
  // Probability vector the next assignment would use (exact ranks).
  std::vector<double> allocation_probabilities(const ObservedProfile& profile) const;
  const AllocationLedger& ledger() const { return ledger_; }

 private:
  void reduce(const ObservedProfile& profile, std::vector<int>& out) const;
  std::vector<std::int64_t> rank_keys(std::span<const int> levels) const;

  std::vector<int> used_;
  CovariateSchema reduced_;
  CarWeights weights_;
  BiasedProbabilities biased_;
  AllocationLedger ledger_;
  std::int64_t wq_ = 1;  // W: common denominator of the weights
  std::int64_t a_overall_ = 0;
  std::int64_t a_stratum_ = 0;
  std::vector<std::int64_t> a_margin_;
  mutable std::vector<int> buf_;
};

enum class ProcedureKind { CompleteRandomization, StratifiedBlocks, CovariateAdaptive };

struct ProcedureSpec {
  ProcedureKind kind = ProcedureKind::CompleteRandomization;
  std::string name;
  std::vector<Rational> ratios;
  int block_multiple = 1;
  std::unordered_map<std::int64_t, int> stratum_multiples;
  std::optional<CarWeights> weights;
  std::optional<BiasedProbabilities> biased;
  std::vector<int> used_covariates;  // positions into the observed block; empty = all
};

std::unique_ptr<ProcedureState> make_procedure_state(const ProcedureSpec& spec, const CovariateSchema& schema);

}  // namespace covbal
