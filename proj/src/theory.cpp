#include "covbal/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace covbal {

namespace {

void check_rho(double rho_g) {
  if (!(rho_g > 0.0 && rho_g < 1.0)) throw std::invalid_argument("arm ratio must lie in (0,1)");
}

double plogp(double p) { return p > 0 ? -p * std::log(p) : 0.0; }

}  // namespace

JointPmf::JointPmf(CovariateSchema schema, std::vector<double> cells)
    : schema_(std::move(schema)), cells_(std::move(cells)) {
  const auto expected = static_cast<std::size_t>(schema_.observed_strata() * schema_.unobserved_strata());
  if (cells_.size() != expected) throw std::invalid_argument("joint pmf has wrong cell count");
  double mass = 0;
  for (auto& p : cells_) {
    if (std::isnan(p)) throw std::invalid_argument("joint pmf cell is NaN");
    if (p < 0) {
      if (p < -1e-12) throw std::invalid_argument("joint pmf cell is negative");
      p = 0;
    }
    mass += p;
  }
  if (std::fabs(mass - 1.0) > 1e-9) throw std::invalid_argument("joint pmf mass must be 1");
  const auto ls = schema_.observed_strata();
  const auto lr = schema_.unobserved_strata();
  stratum_prob_.assign(static_cast<std::size_t>(ls), 0.0);
  unobs_prob_.assign(static_cast<std::size_t>(lr), 0.0);
  for (std::int64_t s = 0; s < ls; ++s)
    for (std::int64_t r = 0; r < lr; ++r) {
      const double p = cell(s, r);
      stratum_prob_[static_cast<std::size_t>(s)] += p;
      unobs_prob_[static_cast<std::size_t>(r)] += p;
    }
}

double JointPmf::obs_margin_prob(int covariate, int level) const {
  double acc = 0;
  std::vector<int> levels(static_cast<std::size_t>(schema_.observed_count()));
  for (std::int64_t s = 0; s < schema_.observed_strata(); ++s) {
    schema_.decode_observed(s, levels);
    if (levels[static_cast<std::size_t>(covariate)] == level) acc += stratum_prob(s);
  }
  return acc;
}

double JointPmf::unobs_margin_prob(int covariate, int level) const {
  double acc = 0;
  std::vector<int> levels(static_cast<std::size_t>(schema_.unobserved_count()));
  for (std::int64_t r = 0; r < schema_.unobserved_strata(); ++r) {
    schema_.decode_unobserved(r, levels);
    if (levels[static_cast<std::size_t>(covariate)] == level) acc += unobs_stratum_prob(r);
  }
  return acc;
}

double JointPmf::scope_prob(const Scope& scope) const {
  switch (scope.kind()) {
    case ScopeKind::Overall:
      return 1.0;
    case ScopeKind::ObsMargin:
      return obs_margin_prob(scope.covariate(), scope.level());
    case ScopeKind::ObsStratum:
      return stratum_prob(scope.obs_index());
    case ScopeKind::UnobsMargin:
      return unobs_margin_prob(scope.covariate(), scope.level());
    case ScopeKind::UnobsStratum:
      return unobs_stratum_prob(scope.unobs_index());
    case ScopeKind::JointStratumMargin: {
      double acc = 0;
      std::vector<int> levels(static_cast<std::size_t>(schema_.unobserved_count()));
      for (std::int64_t r = 0; r < schema_.unobserved_strata(); ++r) {
        schema_.decode_unobserved(r, levels);
        if (levels[static_cast<std::size_t>(scope.covariate())] == scope.level()) acc += cell(scope.obs_index(), r);
      }
      return acc;
    }
    case ScopeKind::JointStratumStratum:
      return cell(scope.obs_index(), scope.unobs_index());
  }
  return 0;
}

double JointPmf::cond_margin(std::int64_t s, int covariate, int level) const {
  const double ps = stratum_prob(s);
  if (ps <= 0) throw std::domain_error("conditional on a zero-probability stratum");
  double acc = 0;
  std::vector<int> levels(static_cast<std::size_t>(schema_.unobserved_count()));
  for (std::int64_t r = 0; r < schema_.unobserved_strata(); ++r) {
    schema_.decode_unobserved(r, levels);
    if (levels[static_cast<std::size_t>(covariate)] == level) acc += cell(s, r);
  }
  return acc / ps;
}

double JointPmf::cond_stratum(std::int64_t s, std::int64_t r) const {
  const double ps = stratum_prob(s);
  if (ps <= 0) throw std::domain_error("conditional on a zero-probability stratum");
  return cell(s, r) / ps;
}

JointPmf JointPmf::regroup_observed(std::span<const int> keep) const {
  if (keep.empty()) throw std::invalid_argument("regroup needs at least one observed covariate");
  std::vector<Covariate> kept;
  kept.reserve(keep.size());
  std::vector<bool> seen(static_cast<std::size_t>(schema_.observed_count()), false);
  for (int k : keep) {
    if (k < 0 || k >= schema_.observed_count()) throw std::invalid_argument("regroup position out of range");
    if (seen[static_cast<std::size_t>(k)]) throw std::invalid_argument("regroup positions must be distinct");
    seen[static_cast<std::size_t>(k)] = true;
    kept.push_back(schema_.observed()[static_cast<std::size_t>(k)]);
  }
  CovariateSchema reduced(std::move(kept), schema_.unobserved());
  const auto lr = schema_.unobserved_strata();
  std::vector<double> cells(static_cast<std::size_t>(reduced.observed_strata() * lr), 0.0);
  std::vector<int> levels(static_cast<std::size_t>(schema_.observed_count()));
  std::vector<int> sub(keep.size());
  for (std::int64_t s = 0; s < schema_.observed_strata(); ++s) {
    schema_.decode_observed(s, levels);
    for (std::size_t i = 0; i < keep.size(); ++i) sub[i] = levels[static_cast<std::size_t>(keep[i])];
    const std::int64_t s2 = reduced.observed_index(sub);
    for (std::int64_t r = 0; r < lr; ++r) cells[static_cast<std::size_t>(s2 * lr + r)] += cell(s, r);
  }
  return JointPmf(std::move(reduced), std::move(cells));
}

namespace {

// Accumulates p_s * c (1 - c) over strata, where c is the probability of the
// scope's unobserved event conditional on the stratum. Singleton-stratum
// scopes demand a positive-probability stratum; sums skip empty strata.
double within_stratum_sum(const JointPmf& joint, const Scope& scope) {
  const auto& schema = joint.schema();
  switch (scope.kind()) {
    case ScopeKind::JointStratumMargin: {
      const double ps = joint.stratum_prob(scope.obs_index());
      if (ps <= 0) throw std::domain_error("scope stratum has zero probability");
      const double c = joint.cond_margin(scope.obs_index(), scope.covariate(), scope.level());
      return ps * c * (1 - c);
    }
    case ScopeKind::JointStratumStratum: {
      const double ps = joint.stratum_prob(scope.obs_index());
      if (ps <= 0) throw std::domain_error("scope stratum has zero probability");
      const double c = joint.cond_stratum(scope.obs_index(), scope.unobs_index());
      return ps * c * (1 - c);
    }
    case ScopeKind::UnobsMargin: {
      double acc = 0;
      std::vector<int> levels(static_cast<std::size_t>(schema.unobserved_count()));
      for (std::int64_t s = 0; s < schema.observed_strata(); ++s) {
        const double ps = joint.stratum_prob(s);
        if (ps <= 0) continue;
        double mass = 0;
        for (std::int64_t r = 0; r < schema.unobserved_strata(); ++r) {
          schema.decode_unobserved(r, levels);
          if (levels[static_cast<std::size_t>(scope.covariate())] == scope.level()) mass += joint.cell(s, r);
        }
        const double c = mass / ps;
        acc += ps * c * (1 - c);
      }
      return acc;
    }
    case ScopeKind::UnobsStratum: {
      double acc = 0;
      for (std::int64_t s = 0; s < schema.observed_strata(); ++s) {
        const double ps = joint.stratum_prob(s);
        if (ps <= 0) continue;
        const double c = joint.cell(s, scope.unobs_index()) / ps;
        acc += ps * c * (1 - c);
      }
      return acc;
    }
    default:
      throw std::invalid_argument("scope must involve the unobserved block");
  }
}

}  // namespace

double balanced_variance(const JointPmf& joint, double rho_g, const Scope& scope) {
  check_rho(rho_g);
  return rho_g * (1 - rho_g) * within_stratum_sum(joint, scope);
}

double cr_variance(const JointPmf& joint, double rho_g, const Scope& scope) {
  check_rho(rho_g);
  return rho_g * (1 - rho_g) * joint.scope_prob(scope);
}

double block_remainder_large(double rho_g, std::int64_t block_size) {
  check_rho(rho_g);
  if (block_size < 1) throw std::invalid_argument("block size must be positive");
  return rho_g * (1 - rho_g) * static_cast<double>(block_size + 1) / 6.0;
}

double block_remainder_small(double rho_g, std::int64_t n, double stratum_prob, std::int64_t block_size) {
  check_rho(rho_g);
  if (block_size < 1) throw std::invalid_argument("block size must be positive");
  if (n < 1) throw std::invalid_argument("n must be positive");
  const double np = static_cast<double>(n) * stratum_prob;
  return rho_g * (1 - rho_g) * np * (1.0 - stratum_prob * static_cast<double>(n - 1) / static_cast<double>(block_size));
}

StrPbVariance strpb_variance(const JointPmf& joint, double rho_g, const Scope& scope, BlockRegime regime,
                             std::int64_t n, const BlockSizes& blocks) {
  check_rho(rho_g);
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (blocks.uniform < 1 && blocks.per_stratum.empty()) throw std::invalid_argument("block sizes missing");
  const auto& schema = joint.schema();

  bool mismatch = false;
  auto remainder = [&](std::int64_t s) {
    const std::int64_t b = blocks.at(s);
    if (b < 1) throw std::invalid_argument("block size must be positive");
    const double np = static_cast<double>(n) * joint.stratum_prob(s);
    if (regime == BlockRegime::LargeStrata) {
      if (np < static_cast<double>(b)) mismatch = true;
      return block_remainder_large(rho_g, b);
    }
    if (np > static_cast<double>(b)) mismatch = true;
    return block_remainder_small(rho_g, n, joint.stratum_prob(s), b);
  };

  // Conditional share of the scope's unobserved event inside stratum s.
  auto cond_share = [&](std::int64_t s) -> double {
    switch (scope.kind()) {
      case ScopeKind::JointStratumMargin:
        return joint.cond_margin(s, scope.covariate(), scope.level());
      case ScopeKind::JointStratumStratum:
        return joint.cond_stratum(s, scope.unobs_index());
      case ScopeKind::UnobsMargin:
        return joint.cond_margin(s, scope.covariate(), scope.level());
      case ScopeKind::UnobsStratum:
        return joint.cond_stratum(s, scope.unobs_index());
      default:
        throw std::invalid_argument("scope must involve the unobserved block");
    }
  };

  double block_part = 0;
  if (scope.kind() == ScopeKind::JointStratumMargin || scope.kind() == ScopeKind::JointStratumStratum) {
    if (joint.stratum_prob(scope.obs_index()) <= 0) throw std::domain_error("scope stratum has zero probability");
    const double c = cond_share(scope.obs_index());
    block_part = c * c * remainder(scope.obs_index());
  } else {
    for (std::int64_t s = 0; s < schema.observed_strata(); ++s) {
      if (joint.stratum_prob(s) <= 0) continue;
      const double c = cond_share(s);
      block_part += c * c * remainder(s);
    }
  }
  const double floor = balanced_variance(joint, rho_g, scope);
  return StrPbVariance{block_part / static_cast<double>(n) + floor, mismatch};
}

double shannon_entropy(std::span<const double> pmf) {
  double h = 0;
  for (double p : pmf) {
    if (std::isnan(p)) throw std::invalid_argument("entropy: NaN mass");
    if (p < -1e-12) throw std::invalid_argument("entropy: negative mass");
    h += plogp(p);
  }
  return h;
}

namespace {

// H of the target's conditional distribution inside stratum s, times p_s,
// accumulated over strata.
double conditional_entropy_impl(const JointPmf& joint, UnobsTarget target) {
  const auto& schema = joint.schema();
  if (schema.unobserved_count() == 0) throw std::invalid_argument("schema has no unobserved block");
  if (target && (*target < 0 || *target >= schema.unobserved_count()))
    throw std::invalid_argument("unobserved target out of range");
  const std::int64_t lr = schema.unobserved_strata();
  std::vector<int> levels(static_cast<std::size_t>(schema.unobserved_count()));
  double acc = 0;
  std::vector<double> margin;
  if (target) margin.resize(static_cast<std::size_t>(schema.unobserved()[static_cast<std::size_t>(*target)].levels));
  for (std::int64_t s = 0; s < schema.observed_strata(); ++s) {
    const double ps = joint.stratum_prob(s);
    if (ps <= 0) continue;
    double h = 0;
    if (target) {
      std::fill(margin.begin(), margin.end(), 0.0);
      for (std::int64_t r = 0; r < lr; ++r) {
        schema.decode_unobserved(r, levels);
        margin[static_cast<std::size_t>(levels[static_cast<std::size_t>(*target)] - 1)] += joint.cell(s, r);
      }
      for (double mass : margin) h += plogp(mass / ps);
    } else {
      for (std::int64_t r = 0; r < lr; ++r) h += plogp(joint.cell(s, r) / ps);
    }
    acc += ps * h;
  }
  return acc;
}

double target_entropy(const JointPmf& joint, UnobsTarget target) {
  const auto& schema = joint.schema();
  if (target) {
    const int levels = schema.unobserved()[static_cast<std::size_t>(*target)].levels;
    std::vector<double> margin(static_cast<std::size_t>(levels));
    for (int lv = 1; lv <= levels; ++lv)
      margin[static_cast<std::size_t>(lv - 1)] = joint.unobs_margin_prob(*target, lv);
    return shannon_entropy(margin);
  }
  std::vector<double> pr(static_cast<std::size_t>(schema.unobserved_strata()));
  for (std::int64_t r = 0; r < schema.unobserved_strata(); ++r)
    pr[static_cast<std::size_t>(r)] = joint.unobs_stratum_prob(r);
  return shannon_entropy(pr);
}

}  // namespace

double conditional_entropy(const JointPmf& joint, UnobsTarget target) {
  return conditional_entropy_impl(joint, target);
}

double mutual_information(const JointPmf& joint, UnobsTarget target) {
  return target_entropy(joint, target) - conditional_entropy_impl(joint, target);
}

double weighted_conditional_entropy(const JointPmf& joint, double rho_g, UnobsTarget target) {
  check_rho(rho_g);
  return rho_g * (1 - rho_g) * conditional_entropy_impl(joint, target);
}

double variance_sum_unweighted(const JointPmf& joint, UnobsTarget target) {
  const auto& schema = joint.schema();
  if (schema.unobserved_count() == 0) throw std::invalid_argument("schema has no unobserved block");
  double acc = 0;
  if (target) {
    if (*target < 0 || *target >= schema.unobserved_count())
      throw std::invalid_argument("unobserved target out of range");
    const int levels = schema.unobserved()[static_cast<std::size_t>(*target)].levels;
    for (int lv = 1; lv <= levels; ++lv) {
      Scope scope = Scope::unobs_margin(schema, *target, lv);
      acc += within_stratum_sum(joint, scope);
    }
    return acc;
  }
  std::vector<int> levels(static_cast<std::size_t>(schema.unobserved_count()));
  for (std::int64_t r = 0; r < schema.unobserved_strata(); ++r) {
    schema.decode_unobserved(r, levels);
    Scope scope = Scope::unobs_stratum(schema, levels);
    acc += within_stratum_sum(joint, scope);
  }
  return acc;
}

double variance_sum(const JointPmf& joint, double rho_g, UnobsTarget target) {
  check_rho(rho_g);
  return rho_g * (1 - rho_g) * variance_sum_unweighted(joint, target);
}

EntropyBounds entropy_bounds(double h_unobserved, double h_observed, double h_joint) {
  if (std::isnan(h_unobserved) || std::isnan(h_observed) || std::isnan(h_joint))
    throw std::invalid_argument("entropy_bounds: NaN input");
  if (h_unobserved < 0 || h_observed < 0 || h_joint < 0)
    throw std::invalid_argument("entropy_bounds: entropies must be nonnegative");
  EntropyBounds b;
  b.lower = std::max(0.0, h_unobserved - h_observed);
  b.upper = h_joint - h_observed;
  if (b.lower > b.upper + 1e-12)
    throw std::domain_error("entropy_bounds: infeasible marginals (lower bound exceeds upper bound)");
  return b;
}

}  // namespace covbal
