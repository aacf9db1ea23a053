#include "covbal/ledger.hpp"

#include <algorithm>
#include <stdexcept>

namespace covbal {

void validate_ratios(std::span<const Rational> ratios, bool require_positive) {
  if (ratios.size() < 2) throw std::invalid_argument("allocation needs at least two arms");
  Rational sum(0);
  for (const auto& r : ratios) {
    if (r < Rational(0) || r > Rational(1)) throw std::invalid_argument("allocation ratio outside [0,1]");
    if (require_positive && r.is_zero()) throw std::invalid_argument("allocation ratio must be positive");
    sum += r;
  }
  if (sum != Rational(1)) throw std::invalid_argument("allocation ratios must sum to 1 exactly");
}

namespace detail {

std::int64_t* CountMap::row(std::int64_t key) {
  auto [it, inserted] = slots_.try_emplace(key, data_.size());
  if (inserted) data_.resize(data_.size() + static_cast<std::size_t>(stride_), 0);
  return data_.data() + it->second;
}

const std::int64_t* CountMap::find(std::int64_t key) const {
  auto it = slots_.find(key);
  return it == slots_.end() ? nullptr : data_.data() + it->second;
}

}  // namespace detail

AllocationLedger::AllocationLedger(const CovariateSchema& schema, std::vector<Rational> ratios)
    : schema_(&schema), ratios_(std::move(ratios)) {
  validate_ratios(ratios_, false);
  q_ = common_denominator(ratios_.data(), ratios_.size());
  scaled_ratios_.reserve(ratios_.size());
  for (const auto& r : ratios_) scaled_ratios_.push_back(r.num() * (q_ / r.den()));
  overall_.assign(ratios_.size(), 0);
  margin_offset_.resize(static_cast<std::size_t>(schema.observed_count()) + 1, 0);
  std::size_t offset = 0;
  for (int k = 0; k < schema.observed_count(); ++k) {
    margin_offset_[static_cast<std::size_t>(k)] = offset;
    offset += static_cast<std::size_t>(schema.observed()[static_cast<std::size_t>(k)].levels);
  }
  margin_offset_.back() = offset;
  margin_counts_.assign(offset * ratios_.size(), 0);
  margin_totals_.assign(offset, 0);
  strata_.init(arms());
}

void AllocationLedger::record(const ObservedProfile& profile, int arm) {
  if (arm < 1 || arm > arms()) throw std::invalid_argument("arm out of range");
  if (profile.count() != schema_->observed_count()) throw std::invalid_argument("profile arity mismatch");
  const auto a = static_cast<std::size_t>(arm - 1);
  const auto m = static_cast<std::size_t>(arms());
  ++total_;
  ++overall_[a];
  for (int k = 0; k < profile.count(); ++k) {
    const std::size_t cell = margin_offset_[static_cast<std::size_t>(k)] + static_cast<std::size_t>(profile.level(k) - 1);
    ++margin_totals_[cell];
    ++margin_counts_[cell * m + a];
  }
  std::int64_t* row = strata_.row(schema_->observed_index(profile.levels()));
  ++row[0];
  ++row[arm];
}

std::int64_t AllocationLedger::scaled_overall(int arm) const {
  return q_ * overall_[static_cast<std::size_t>(arm - 1)] - scaled_ratio(arm) * total_;
}

std::int64_t AllocationLedger::scaled_margin(int covariate, int level, int arm) const {
  const std::size_t cell = margin_offset_[static_cast<std::size_t>(covariate)] + static_cast<std::size_t>(level - 1);
  return q_ * margin_counts_[cell * static_cast<std::size_t>(arms()) + static_cast<std::size_t>(arm - 1)] -
         scaled_ratio(arm) * margin_totals_[cell];
}

std::int64_t AllocationLedger::scaled_stratum(std::int64_t stratum_index, int arm) const {
  const std::int64_t* row = strata_.find(stratum_index);
  if (!row) return 0;
  return q_ * row[arm] - scaled_ratio(arm) * row[0];
}

std::int64_t AllocationLedger::scaled_imbalance(const Scope& scope, int arm) const {
  if (arm < 1 || arm > arms()) throw std::invalid_argument("arm out of range");
  switch (scope.kind()) {
    case ScopeKind::Overall:
      return scaled_overall(arm);
    case ScopeKind::ObsMargin:
      return scaled_margin(scope.covariate(), scope.level(), arm);
    case ScopeKind::ObsStratum:
      return scaled_stratum(scope.obs_index(), arm);
    default:
      throw std::invalid_argument("allocation ledger tracks observed scopes only");
  }
}

Rational AllocationLedger::imbalance(const Scope& scope, int arm) const {
  return Rational(scaled_imbalance(scope, arm), q_);
}

AuditLedger::AuditLedger(const CovariateSchema& schema, std::vector<Rational> ratios)
    : schema_(&schema), ratios_(std::move(ratios)) {
  validate_ratios(ratios_, false);
  overall_.assign(ratios_.size() + 1, 0);
  for (auto* map : {&obs_margins_, &obs_strata_, &unobs_margins_, &unobs_strata_, &joint_margins_, &joint_strata_})
    map->init(arms());
  for (const auto* block : {&schema.observed(), &schema.unobserved()})
    for (const auto& cov : *block) max_levels_ = std::max<std::int64_t>(max_levels_, cov.levels);
}

void AuditLedger::record(const PatientProfile& profile, int arm) {
  if (arm < 1 || arm > arms()) throw std::invalid_argument("arm out of range");
  validate_profile(*schema_, profile);
  ++total_;
  ++overall_[0];
  ++overall_[static_cast<std::size_t>(arm)];
  auto bump = [arm](std::int64_t* row) {
    ++row[0];
    ++row[arm];
  };
  for (std::size_t k = 0; k < profile.observed.size(); ++k)
    bump(obs_margins_.row(static_cast<std::int64_t>(k) * max_levels_ + profile.observed[k] - 1));
  const std::int64_t s = schema_->observed_index(profile.observed);
  bump(obs_strata_.row(s));
  const int q = schema_->unobserved_count();
  if (q == 0) return;
  for (std::size_t j = 0; j < profile.unobserved.size(); ++j) {
    const std::int64_t margin_key = static_cast<std::int64_t>(j) * max_levels_ + profile.unobserved[j] - 1;
    bump(unobs_margins_.row(margin_key));
    bump(joint_margins_.row((s * q + static_cast<std::int64_t>(j)) * max_levels_ + profile.unobserved[j] - 1));
  }
  const std::int64_t r = schema_->unobserved_index(profile.unobserved);
  bump(unobs_strata_.row(r));
  bump(joint_strata_.row(s * schema_->unobserved_strata() + r));
}

const std::int64_t* AuditLedger::locate(const Scope& scope) const {
  switch (scope.kind()) {
    case ScopeKind::Overall:
      return overall_.data();
    case ScopeKind::ObsMargin:
      return obs_margins_.find(static_cast<std::int64_t>(scope.covariate()) * max_levels_ + scope.level() - 1);
    case ScopeKind::ObsStratum:
      return obs_strata_.find(scope.obs_index());
    case ScopeKind::UnobsMargin:
      return unobs_margins_.find(static_cast<std::int64_t>(scope.covariate()) * max_levels_ + scope.level() - 1);
    case ScopeKind::UnobsStratum:
      return unobs_strata_.find(scope.unobs_index());
    case ScopeKind::JointStratumMargin:
      return joint_margins_.find(
          (scope.obs_index() * schema_->unobserved_count() + scope.covariate()) * max_levels_ + scope.level() - 1);
    case ScopeKind::JointStratumStratum:
      return joint_strata_.find(scope.obs_index() * schema_->unobserved_strata() + scope.unobs_index());
  }
  return nullptr;
}

std::int64_t AuditLedger::count(const Scope& scope) const {
  const std::int64_t* row = locate(scope);
  return row ? row[0] : 0;
}

std::int64_t AuditLedger::arm_count(const Scope& scope, int arm) const {
  if (arm < 1 || arm > arms()) throw std::invalid_argument("arm out of range");
  const std::int64_t* row = locate(scope);
  return row ? row[arm] : 0;
}

Rational AuditLedger::imbalance(const Scope& scope, int arm) const {
  return Rational(arm_count(scope, arm)) - ratios_[static_cast<std::size_t>(arm - 1)] * Rational(count(scope));
}

}  // namespace covbal
