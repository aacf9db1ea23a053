#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "covbal/rational.hpp"
#include "covbal/schema.hpp"

namespace covbal {

// Allocation ratios: every entry in [0,1], exact sum 1. Procedures that
// maintain per-arm queues or corrective probabilities additionally require
// strictly positive entries.
void validate_ratios(std::span<const Rational> ratios, bool require_positive);

namespace detail {

/* Counts for a family of like-keyed subsets, stored as one arena with stride
 * arms+1 per row: [N, N_1, ..., N_m]. Rows materialize lazily on first
 * update, so untouched subsets cost nothing and read back as zero. */
class CountMap {
 public:
  void init(int arms) { stride_ = arms + 1; }
  std::int64_t* row(std::int64_t key);
  const std::int64_t* find(std::int64_t key) const;
  const std::unordered_map<std::int64_t, std::size_t>& slots() const { return slots_; }

 private:
  int stride_ = 0;
  std::unordered_map<std::int64_t, std::size_t> slots_;
  std::vector<std::int64_t> data_;
};

}  // namespace detail

/* Running treatment counts over the observed scopes (overall, each observed
 * margin, the observed stratum). This is the only tally a randomization
 * procedure may read. Imbalance for arm g over subset A is
 *   D_g(A) = N_g(A) - rho_g * N(A),
 * exact by construction; the scaled accessors return Q * D_g(A) as an
 * integer, where Q is the common denominator of the ratios. */
class AllocationLedger {
 public:
  AllocationLedger(const CovariateSchema& schema, std::vector<Rational> ratios);

  int arms() const { return static_cast<int>(ratios_.size()); }
  const std::vector<Rational>& ratios() const { return ratios_; }
  std::int64_t total() const { return total_; }
  std::int64_t scale() const { return q_; }
  std::int64_t scaled_ratio(int arm) const { return scaled_ratios_[static_cast<std::size_t>(arm - 1)]; }

  void record(const ObservedProfile& profile, int arm);

  // Observed scope kinds only (Overall, ObsMargin, ObsStratum).
  Rational imbalance(const Scope& scope, int arm) const;
  std::int64_t scaled_imbalance(const Scope& scope, int arm) const;

  // Hot-path accessors, arm is 1-based; covariate positions 0-based.
  std::int64_t scaled_overall(int arm) const;
  std::int64_t scaled_margin(int covariate, int level, int arm) const;
  std::int64_t scaled_stratum(std::int64_t stratum_index, int arm) const;

 private:
  const CovariateSchema* schema_;
  std::vector<Rational> ratios_;
  std::vector<std::int64_t> scaled_ratios_;
  std::int64_t q_ = 1;
  std::int64_t total_ = 0;
  std::vector<std::int64_t> overall_;
  std::vector<std::int64_t> margin_counts_;  // [covariate][level-1][arm0..] plus margin totals
  std::vector<std::int64_t> margin_totals_;
  std::vector<std::size_t> margin_offset_;
  detail::CountMap strata_;
};

/* Full-profile tally over every scope kind, including unobserved and joint
 * scopes. Lives on the evaluation side of the blind: it is fed complete
 * profiles after assignment and is never visible to procedures. */
class AuditLedger {
 public:
  AuditLedger(const CovariateSchema& schema, std::vector<Rational> ratios);

  int arms() const { return static_cast<int>(ratios_.size()); }
  std::int64_t total() const { return total_; }

  void record(const PatientProfile& profile, int arm);

  std::int64_t count(const Scope& scope) const;
  std::int64_t arm_count(const Scope& scope, int arm) const;
  Rational imbalance(const Scope& scope, int arm) const;

 private:
  const std::int64_t* locate(const Scope& scope) const;

  const CovariateSchema* schema_;
  std::vector<Rational> ratios_;
  std::int64_t total_ = 0;
  std::vector<std::int64_t> overall_;
  detail::CountMap obs_margins_;    // key: covariate * max_levels + (level-1)
  detail::CountMap obs_strata_;     // key: observed stratum index
  detail::CountMap unobs_margins_;  // key: covariate * max_levels + (level-1)
  detail::CountMap unobs_strata_;   // key: unobserved stratum index
  detail::CountMap joint_margins_;  // key: (s * q + j) * max_levels + (level-1)
  detail::CountMap joint_strata_;   // key: s * unobserved_strata + r
  std::int64_t max_levels_ = 0;
};

}  // namespace covbal
