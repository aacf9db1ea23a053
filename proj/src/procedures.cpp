#include "covbal/procedures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace covbal {

namespace {

std::vector<std::int64_t> cumulative_numerators(std::span<const Rational> probs, std::int64_t q) {
  std::vector<std::int64_t> cum(probs.size());
  std::int64_t acc = 0;
  for (std::size_t g = 0; g < probs.size(); ++g) {
    acc += probs[g].num() * (q / probs[g].den());
    cum[g] = acc;
  }
  if (cum.back() != q) throw std::logic_error("probability grid does not close");
  return cum;
}

int draw_on_grid(const std::vector<std::int64_t>& cumulative, std::int64_t q, SplitMix64& rng) {
  const auto k = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(q)));
  for (std::size_t g = 0; g < cumulative.size(); ++g)
    if (k < cumulative[g]) return static_cast<int>(g) + 1;
  return static_cast<int>(cumulative.size());
}

// Exact draw when the common denominator fits a sane integer grid, double
// cumulative otherwise (reachable only with pathological user rationals).
int sample_probs(const std::vector<Rational>& probs, SplitMix64& rng) {
  try {
    const std::int64_t c = common_denominator(probs.data(), probs.size());
    return draw_on_grid(cumulative_numerators(probs, c), c, rng);
  } catch (const std::overflow_error&) {
    const double u = rng.next_double();
    double acc = 0;
    for (std::size_t g = 0; g < probs.size(); ++g) {
      acc += probs[g].value();
      if (u < acc) return static_cast<int>(g) + 1;
    }
    return static_cast<int>(probs.size());
  }
}

std::vector<int> resolve_used(const CovariateSchema& schema, std::vector<int> used) {
  if (used.empty()) {
    used.resize(static_cast<std::size_t>(schema.observed_count()));
    std::iota(used.begin(), used.end(), 0);
    return used;
  }
  std::vector<bool> seen(static_cast<std::size_t>(schema.observed_count()), false);
  for (int k : used) {
    if (k < 0 || k >= schema.observed_count())
      throw std::invalid_argument("used covariate position out of range");
    if (seen[static_cast<std::size_t>(k)]) throw std::invalid_argument("used covariate positions must be distinct");
    seen[static_cast<std::size_t>(k)] = true;
  }
  return used;
}

CovariateSchema reduce_schema(const CovariateSchema& schema, const std::vector<int>& used) {
  std::vector<Covariate> kept;
  kept.reserve(used.size());
  for (int k : used) kept.push_back(schema.observed()[static_cast<std::size_t>(k)]);
  return CovariateSchema(std::move(kept), {});
}

/* Shared rank-to-probability mapping: order holds arm indices sorted by key
 * descending; arms with equal keys share the mean of the biased values their
 * ranks span. */
template <typename Key>
std::vector<Rational> probs_from_keys(const std::vector<Key>& keys, const BiasedProbabilities& biased) {
  const auto m = keys.size();
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return keys[static_cast<std::size_t>(a)] > keys[static_cast<std::size_t>(b)]; });
  std::vector<Rational> probs(m);
  std::size_t i = 0;
  while (i < m) {
    std::size_t j = i;
    while (j + 1 < m && keys[static_cast<std::size_t>(order[j + 1])] == keys[static_cast<std::size_t>(order[i])]) ++j;
    Rational share(0);
    for (std::size_t t = i; t <= j; ++t) share += biased.values()[t];
    share /= Rational(static_cast<std::int64_t>(j - i + 1));
    for (std::size_t t = i; t <= j; ++t) probs[static_cast<std::size_t>(order[t])] = share;
    i = j + 1;
  }
  return probs;
}

}  // namespace

std::int64_t period(std::span<const Rational> ratios) {
  validate_ratios(ratios, true);
  return common_denominator(ratios.data(), ratios.size());
}

int assign_cr(std::span<const Rational> ratios, SplitMix64& rng) {
  validate_ratios(ratios, false);
  const std::int64_t q = common_denominator(ratios.data(), ratios.size());
  return draw_on_grid(cumulative_numerators(ratios, q), q, rng);
}

BiasedProbabilities::BiasedProbabilities(std::vector<Rational> values) : values_(std::move(values)) {
  if (values_.size() < 2) throw std::invalid_argument("biased probabilities need at least two arms");
  Rational sum(0);
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (values_[k] <= Rational(0) || values_[k] >= Rational(1))
      throw std::invalid_argument("biased probabilities must lie strictly inside (0,1)");
    if (k > 0 && values_[k] < values_[k - 1])
      throw std::invalid_argument("biased probabilities must be sorted nondecreasing");
    sum += values_[k];
  }
  if (sum != Rational(1)) throw std::invalid_argument("biased probabilities must sum to 1 exactly");
}

void BiasedProbabilities::check_compatible(std::span<const Rational> ratios) const {
  if (ratios.size() != values_.size())
    throw std::invalid_argument("biased probabilities and ratios disagree on arm count");
  std::vector<Rational> sorted(ratios.begin(), ratios.end());
  std::sort(sorted.begin(), sorted.end());
  Rational prev;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const Rational gap = values_[k] - sorted[k];
    if (k > 0 && gap < prev)
      throw std::invalid_argument("biased probabilities must correct toward the ratios (gaps nondecreasing)");
    prev = gap;
  }
  if (values_.front() >= sorted.front() || values_.back() <= sorted.back())
    throw std::invalid_argument(
        "biased probabilities must under-serve the most imbalanced arm and over-serve the least");
}

CarWeights::CarWeights(Rational overall, std::vector<Rational> margins, Rational stratum)
    : overall_(std::move(overall)), margins_(std::move(margins)), stratum_(std::move(stratum)) {
  Rational sum = overall_ + stratum_;
  if (overall_ < Rational(0) || stratum_ < Rational(0))
    throw std::invalid_argument("imbalance weights must be nonnegative");
  for (const auto& w : margins_) {
    if (w < Rational(0)) throw std::invalid_argument("imbalance weights must be nonnegative");
    sum += w;
  }
  if (sum != Rational(1))
    throw std::invalid_argument("imbalance weights must satisfy w_o + sum w_m + w_s = 1 exactly");
}

std::vector<double> car_allocation_probs(std::span<const double> potential, const BiasedProbabilities& biased) {
  if (static_cast<int>(potential.size()) != biased.size())
    throw std::invalid_argument("potential imbalance vector and biased probabilities disagree on arm count");
  std::vector<double> keys(potential.begin(), potential.end());
  for (double v : keys)
    if (std::isnan(v)) throw std::invalid_argument("potential imbalance is NaN");
  auto probs = probs_from_keys(keys, biased);
  std::vector<double> out(probs.size());
  for (std::size_t g = 0; g < probs.size(); ++g) out[g] = probs[g].value();
  return out;
}

CrState::CrState(std::vector<Rational> ratios) : ratios_(std::move(ratios)) {
  validate_ratios(ratios_, false);
  q_ = common_denominator(ratios_.data(), ratios_.size());
  cumulative_ = cumulative_numerators(ratios_, q_);
}

int CrState::assign(const ObservedProfile&, SplitMix64& rng) { return draw_on_grid(cumulative_, q_, rng); }

StrPbState::StrPbState(const CovariateSchema& schema, std::vector<Rational> ratios, int block_multiple,
                       std::unordered_map<std::int64_t, int> stratum_multiples, std::vector<int> used_covariates)
    : used_(resolve_used(schema, std::move(used_covariates))),
      reduced_(reduce_schema(schema, used_)),
      ratios_(std::move(ratios)),
      default_multiple_(block_multiple),
      multiples_(std::move(stratum_multiples)) {
  validate_ratios(ratios_, true);
  if (block_multiple < 1) throw std::invalid_argument("block multiple must be a positive integer");
  for (const auto& [s, c] : multiples_) {
    if (s < 0 || s >= reduced_.observed_strata()) throw std::invalid_argument("block override stratum out of range");
    if (c < 1) throw std::invalid_argument("block multiple must be a positive integer");
  }
  q_ = common_denominator(ratios_.data(), ratios_.size());
  scaled_.reserve(ratios_.size());
  for (const auto& r : ratios_) scaled_.push_back(r.num() * (q_ / r.den()));
  buf_.resize(used_.size());
}

int StrPbState::assign(const ObservedProfile& profile, SplitMix64& rng) {
  for (std::size_t i = 0; i < used_.size(); ++i) buf_[i] = profile.level(used_[i]);
  const std::int64_t s = reduced_.observed_index(buf_);
  Block& block = blocks_[s];
  if (block.pos == block.order.size()) {
    auto it = multiples_.find(s);
    const int multiple = it == multiples_.end() ? default_multiple_ : it->second;
    block.order.clear();
    for (std::size_t g = 0; g < ratios_.size(); ++g)
      block.order.insert(block.order.end(), static_cast<std::size_t>(multiple * scaled_[g]), static_cast<int>(g) + 1);
    for (std::size_t i = block.order.size(); i-- > 1;)
      std::swap(block.order[i], block.order[rng.next_below(i + 1)]);
    block.pos = 0;
  }
  return block.order[block.pos++];
}

CarState::CarState(const CovariateSchema& schema, std::vector<Rational> ratios, CarWeights weights,
                   BiasedProbabilities biased, std::vector<int> used_covariates)
    : used_(resolve_used(schema, std::move(used_covariates))),
      reduced_(reduce_schema(schema, used_)),
      weights_(std::move(weights)),
      biased_(std::move(biased)),
      ledger_(reduced_, ratios) {
  validate_ratios(ratios, true);
  if (weights_.margins().size() != used_.size())
    throw std::invalid_argument("one margin weight is required per covariate the procedure uses");
  if (biased_.size() != static_cast<int>(ratios.size()))
    throw std::invalid_argument("biased probabilities and ratios disagree on arm count");
  biased_.check_compatible(ratios);
  std::vector<Rational> ws;
  ws.reserve(used_.size() + 2);
  ws.push_back(weights_.overall());
  for (const auto& w : weights_.margins()) ws.push_back(w);
  ws.push_back(weights_.stratum());
  wq_ = common_denominator(ws.data(), ws.size());
  a_overall_ = weights_.overall().num() * (wq_ / weights_.overall().den());
  a_stratum_ = weights_.stratum().num() * (wq_ / weights_.stratum().den());
  a_margin_.reserve(used_.size());
  for (const auto& w : weights_.margins()) a_margin_.push_back(w.num() * (wq_ / w.den()));
  buf_.resize(used_.size());
}

void CarState::reduce(const ObservedProfile& profile, std::vector<int>& out) const {
  for (std::size_t i = 0; i < used_.size(); ++i) out[i] = profile.level(used_[i]);
}

std::vector<std::int64_t> CarState::rank_keys(std::span<const int> levels) const {
  const std::int64_t s = reduced_.observed_index(levels);
  const int m = ledger_.arms();
  std::vector<std::int64_t> keys(static_cast<std::size_t>(m));
  for (int g = 1; g <= m; ++g) {
    std::int64_t key = a_overall_ * ledger_.scaled_overall(g);
    for (std::size_t k = 0; k < used_.size(); ++k)
      key += a_margin_[k] * ledger_.scaled_margin(static_cast<int>(k), levels[k], g);
    key += a_stratum_ * ledger_.scaled_stratum(s, g);
    key -= wq_ * ledger_.scaled_ratio(g);
    keys[static_cast<std::size_t>(g - 1)] = key;
  }
  return keys;
}

int CarState::assign(const ObservedProfile& profile, SplitMix64& rng) {
  reduce(profile, buf_);
  int arm;
  if (ledger_.total() == 0) {
    arm = assign_cr(ledger_.ratios(), rng);
  } else {
    arm = sample_probs(probs_from_keys(rank_keys(buf_), biased_), rng);
  }
  ledger_.record(ObservedProfile(buf_), arm);
  return arm;
}

double CarState::potential_imbalance(const ObservedProfile& profile, int candidate_arm) const {
  const int m = ledger_.arms();
  if (candidate_arm < 1 || candidate_arm > m) throw std::invalid_argument("candidate arm out of range");
  reduce(profile, buf_);
  const std::int64_t s = reduced_.observed_index(buf_);
  const double q = static_cast<double>(ledger_.scale());
  double total = 0;
  auto add_scope = [&](double weight, auto&& scaled_d) {
    if (weight == 0) return;
    double sum = 0;
    for (int g = 1; g <= m; ++g) {
      const double d = static_cast<double>(scaled_d(g)) / q;
      const double delta = (g == candidate_arm ? 1.0 : 0.0) - ledger_.ratios()[static_cast<std::size_t>(g - 1)].value();
      sum += (d + delta) * (d + delta);
    }
    total += weight * sum;
  };
  add_scope(weights_.overall().value(), [&](int g) { return ledger_.scaled_overall(g); });
  for (std::size_t k = 0; k < used_.size(); ++k)
    add_scope(weights_.margins()[k].value(),
              [&](int g) { return ledger_.scaled_margin(static_cast<int>(k), buf_[k], g); });
  add_scope(weights_.stratum().value(), [&](int g) { return ledger_.scaled_stratum(s, g); });
  return total;
}

std::vector<double> CarState::allocation_probabilities(const ObservedProfile& profile) const {
  const int m = ledger_.arms();
  std::vector<double> out(static_cast<std::size_t>(m));
  if (ledger_.total() == 0) {
    for (int g = 0; g < m; ++g) out[static_cast<std::size_t>(g)] = ledger_.ratios()[static_cast<std::size_t>(g)].value();
    return out;
  }
  reduce(profile, buf_);
  auto probs = probs_from_keys(rank_keys(buf_), biased_);
  for (int g = 0; g < m; ++g) out[static_cast<std::size_t>(g)] = probs[static_cast<std::size_t>(g)].value();
  return out;
}

std::unique_ptr<ProcedureState> make_procedure_state(const ProcedureSpec& spec, const CovariateSchema& schema) {
  switch (spec.kind) {
    case ProcedureKind::CompleteRandomization:
      return std::make_unique<CrState>(spec.ratios);
    case ProcedureKind::StratifiedBlocks:
      return std::make_unique<StrPbState>(schema, spec.ratios, spec.block_multiple, spec.stratum_multiples,
                                          spec.used_covariates);
    case ProcedureKind::CovariateAdaptive:
      if (!spec.weights || !spec.biased)
        throw std::invalid_argument("covariate-adaptive procedure needs weights and biased probabilities");
      return std::make_unique<CarState>(schema, spec.ratios, *spec.weights, *spec.biased, spec.used_covariates);
  }
  throw std::invalid_argument("unknown procedure kind");
}

}  // namespace covbal
