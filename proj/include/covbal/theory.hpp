#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "covbal/schema.hpp"

namespace covbal {

/* Joint distribution of (observed stratum, unobserved stratum), stored dense
 * with cells indexed [s * unobserved_strata + r]. Mass must be nonnegative
 * and sum to 1 within 1e-9. */
class JointPmf {
 public:
  JointPmf(CovariateSchema schema, std::vector<double> cells);

  const CovariateSchema& schema() const { return schema_; }
  double cell(std::int64_t s, std::int64_t r) const {
    return cells_[static_cast<std::size_t>(s * schema_.unobserved_strata() + r)];
  }
  double stratum_prob(std::int64_t s) const { return stratum_prob_[static_cast<std::size_t>(s)]; }
  double unobs_stratum_prob(std::int64_t r) const { return unobs_prob_[static_cast<std::size_t>(r)]; }
  double obs_margin_prob(int covariate, int level) const;
  double unobs_margin_prob(int covariate, int level) const;

  // P(scope); works for every scope kind.
  double scope_prob(const Scope& scope) const;
  // P(U_j = level | stratum s); throws std::domain_error when P(s) = 0.
  double cond_margin(std::int64_t s, int covariate, int level) const;
  // P(r | s); throws std::domain_error when P(s) = 0.
  double cond_stratum(std::int64_t s, std::int64_t r) const;

  // Marginalizes out every observed covariate not listed; the unobserved
  // block is untouched. Positions are 0-based and must be distinct.
  JointPmf regroup_observed(std::span<const int> keep) const;

 private:
  CovariateSchema schema_;
  std::vector<double> cells_;
  std::vector<double> stratum_prob_;
  std::vector<double> unobs_prob_;
};

/* Asymptotic variance of the normalized imbalance n^{-1/2} D_{n,g}(scope)
 * under a design that balances every observed stratum (the within-stratum
 * sampling floor). Valid scope kinds: UnobsMargin, UnobsStratum,
 * JointStratumMargin, JointStratumStratum. */
double balanced_variance(const JointPmf& joint, double rho_g, const Scope& scope);

// Variance of n^{-1/2} D_{n,g}(scope) under complete randomization:
// rho_g (1 - rho_g) P(scope). Accepts every scope kind.
double cr_variance(const JointPmf& joint, double rho_g, const Scope& scope);

enum class BlockRegime { LargeStrata, SmallStrata };

// Per-stratum block remainder variances for stratified permuted blocks.
double block_remainder_large(double rho_g, std::int64_t block_size);
double block_remainder_small(double rho_g, std::int64_t n, double stratum_prob, std::int64_t block_size);

struct BlockSizes {
  std::int64_t uniform = 0;
  std::unordered_map<std::int64_t, std::int64_t> per_stratum;  // keyed by observed stratum index

  std::int64_t at(std::int64_t s) const {
    auto it = per_stratum.find(s);
    return it == per_stratum.end() ? uniform : it->second;
  }
};

struct StrPbVariance {
  double value = 0;           // variance of n^{-1/2} D_{n,g}(scope)
  bool regime_mismatch = false;  // some stratum sits on the wrong side of n*p_s vs B_s
};

/* Variance of n^{-1/2} D_{n,g}(scope) under stratified permuted blocks:
 * the block remainder for the chosen regime composed with the sampling
 * floor. Same scope kinds as balanced_variance. */
StrPbVariance strpb_variance(const JointPmf& joint, double rho_g, const Scope& scope, BlockRegime regime,
                             std::int64_t n, const BlockSizes& blocks);

// Shannon entropy in nats; 0 log 0 = 0; entries must be nonnegative.
double shannon_entropy(std::span<const double> pmf);

/* Unobserved target selector: a 0-based covariate position for one
 * unobserved margin, or nullopt for the full unobserved block. */
using UnobsTarget = std::optional<int>;

double conditional_entropy(const JointPmf& joint, UnobsTarget target = std::nullopt);
double mutual_information(const JointPmf& joint, UnobsTarget target = std::nullopt);
double weighted_conditional_entropy(const JointPmf& joint, double rho_g, UnobsTarget target = std::nullopt);

// Sum of balanced_variance over every margin level (or every unobserved
// stratum) of the target; the first-order surrogate for the weighted
// conditional entropy.
double variance_sum(const JointPmf& joint, double rho_g, UnobsTarget target = std::nullopt);
double variance_sum_unweighted(const JointPmf& joint, UnobsTarget target = std::nullopt);

struct EntropyBounds {
  double lower = 0;
  double upper = 0;
};

// Sandwich for H(U|X) from the marginal entropies: lower = max(0, H_U - H_X),
// upper = H_W - H_X. Throws std::domain_error when lower > upper.
EntropyBounds entropy_bounds(double h_unobserved, double h_observed, double h_joint);

}  // namespace covbal
