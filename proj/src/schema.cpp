#include "covbal/schema.hpp"

#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace covbal {

namespace {

std::vector<std::int64_t> build_strides(const std::vector<Covariate>& block, std::int64_t& total) {
  std::vector<std::int64_t> stride(block.size(), 1);
  total = 1;
  for (std::size_t k = block.size(); k-- > 0;) {
    stride[k] = total;
    if (total > std::numeric_limits<std::int64_t>::max() / block[k].levels)
      throw std::invalid_argument("schema stratum count overflows");
    total *= block[k].levels;
  }
  return stride;
}

std::int64_t encode(const std::vector<Covariate>& block, const std::vector<std::int64_t>& stride,
                    std::span<const int> levels, const char* what) {
  if (levels.size() != block.size()) throw std::invalid_argument(std::string(what) + ": wrong number of levels");
  std::int64_t index = 0;
  for (std::size_t k = 0; k < block.size(); ++k) {
    if (levels[k] < 1 || levels[k] > block[k].levels)
      throw std::invalid_argument(std::string(what) + ": level out of range for " + block[k].name);
    index += (levels[k] - 1) * stride[k];
  }
  return index;
}

void decode(const std::vector<Covariate>& block, const std::vector<std::int64_t>& stride, std::int64_t strata,
            std::int64_t index, std::span<int> out) {
  if (index < 0 || index >= strata) throw std::invalid_argument("stratum index out of range");
  if (out.size() != block.size()) throw std::invalid_argument("decode: wrong output arity");
  for (std::size_t k = 0; k < block.size(); ++k) {
    out[k] = static_cast<int>(index / stride[k]) + 1;
    index %= stride[k];
  }
}

}  // namespace

CovariateSchema::CovariateSchema(std::vector<Covariate> observed, std::vector<Covariate> unobserved)
    : observed_(std::move(observed)), unobserved_(std::move(unobserved)) {
  if (observed_.empty()) throw std::invalid_argument("schema requires a nonempty observed block");
  std::unordered_set<std::string> names;
  for (const auto* block : {&observed_, &unobserved_}) {
    for (const auto& cov : *block) {
      if (cov.levels < 2) throw std::invalid_argument("covariate " + cov.name + " needs at least 2 levels");
      if (!names.insert(cov.name).second) throw std::invalid_argument("duplicate covariate name " + cov.name);
    }
  }
  obs_stride_ = build_strides(observed_, obs_strata_);
  unobs_stride_ = build_strides(unobserved_, unobs_strata_);
}

std::int64_t CovariateSchema::observed_index(std::span<const int> levels) const {
  return encode(observed_, obs_stride_, levels, "observed stratum");
}

std::int64_t CovariateSchema::unobserved_index(std::span<const int> levels) const {
  return encode(unobserved_, unobs_stride_, levels, "unobserved stratum");
}

void CovariateSchema::decode_observed(std::int64_t index, std::span<int> levels_out) const {
  decode(observed_, obs_stride_, obs_strata_, index, levels_out);
}

void CovariateSchema::decode_unobserved(std::int64_t index, std::span<int> levels_out) const {
  decode(unobserved_, unobs_stride_, unobs_strata_, index, levels_out);
}

int CovariateSchema::observed_position(std::string_view name) const {
  for (std::size_t k = 0; k < observed_.size(); ++k)
    if (observed_[k].name == name) return static_cast<int>(k);
  return -1;
}

int CovariateSchema::unobserved_position(std::string_view name) const {
  for (std::size_t j = 0; j < unobserved_.size(); ++j)
    if (unobserved_[j].name == name) return static_cast<int>(j);
  return -1;
}

void validate_profile(const CovariateSchema& schema, const PatientProfile& profile) {
  (void)schema.observed_index(profile.observed);
  if (schema.unobserved_count() > 0 || !profile.unobserved.empty())
    (void)schema.unobserved_index(profile.unobserved);
}

namespace {

void check_margin(const std::vector<Covariate>& block, int covariate, int level, const char* what) {
  if (covariate < 0 || covariate >= static_cast<int>(block.size()))
    throw std::invalid_argument(std::string(what) + ": covariate position out of range");
  if (level < 1 || level > block[static_cast<std::size_t>(covariate)].levels)
    throw std::invalid_argument(std::string(what) + ": level out of range");
}

}  // namespace

Scope Scope::overall() { return Scope{}; }

Scope Scope::obs_margin(const CovariateSchema& schema, int covariate, int level) {
  check_margin(schema.observed(), covariate, level, "obs_margin");
  Scope s;
  s.kind_ = ScopeKind::ObsMargin;
  s.covariate_ = covariate;
  s.level_ = level;
  return s;
}

Scope Scope::obs_stratum(const CovariateSchema& schema, std::span<const int> levels) {
  Scope s;
  s.kind_ = ScopeKind::ObsStratum;
  s.obs_index_ = schema.observed_index(levels);
  return s;
}

Scope Scope::unobs_margin(const CovariateSchema& schema, int covariate, int level) {
  check_margin(schema.unobserved(), covariate, level, "unobs_margin");
  Scope s;
  s.kind_ = ScopeKind::UnobsMargin;
  s.covariate_ = covariate;
  s.level_ = level;
  return s;
}

Scope Scope::unobs_stratum(const CovariateSchema& schema, std::span<const int> levels) {
  Scope s;
  s.kind_ = ScopeKind::UnobsStratum;
  s.unobs_index_ = schema.unobserved_index(levels);
  return s;
}

Scope Scope::joint_stratum_margin(const CovariateSchema& schema, std::span<const int> stratum, int covariate,
                                  int level) {
  check_margin(schema.unobserved(), covariate, level, "joint_stratum_margin");
  Scope s;
  s.kind_ = ScopeKind::JointStratumMargin;
  s.obs_index_ = schema.observed_index(stratum);
  s.covariate_ = covariate;
  s.level_ = level;
  return s;
}

Scope Scope::joint_stratum_stratum(const CovariateSchema& schema, std::span<const int> stratum,
                                   std::span<const int> levels) {
  Scope s;
  s.kind_ = ScopeKind::JointStratumStratum;
  s.obs_index_ = schema.observed_index(stratum);
  s.unobs_index_ = schema.unobserved_index(levels);
  return s;
}

bool Scope::contains(const CovariateSchema& schema, const PatientProfile& profile) const {
  switch (kind_) {
    case ScopeKind::Overall:
      return true;
    case ScopeKind::ObsMargin:
      return profile.observed[static_cast<std::size_t>(covariate_)] == level_;
    case ScopeKind::ObsStratum:
      return schema.observed_index(profile.observed) == obs_index_;
    case ScopeKind::UnobsMargin:
      return profile.unobserved[static_cast<std::size_t>(covariate_)] == level_;
    case ScopeKind::UnobsStratum:
      return schema.unobserved_index(profile.unobserved) == unobs_index_;
    case ScopeKind::JointStratumMargin:
      return schema.observed_index(profile.observed) == obs_index_ &&
             profile.unobserved[static_cast<std::size_t>(covariate_)] == level_;
    case ScopeKind::JointStratumStratum:
      return schema.observed_index(profile.observed) == obs_index_ &&
             schema.unobserved_index(profile.unobserved) == unobs_index_;
  }
  return false;
}

namespace {

std::string levels_label(const CovariateSchema& schema, std::int64_t index, bool observed) {
  std::vector<int> levels(static_cast<std::size_t>(observed ? schema.observed_count() : schema.unobserved_count()));
  if (observed)
    schema.decode_observed(index, levels);
  else
    schema.decode_unobserved(index, levels);
  std::string out = "(";
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (k) out += ",";
    out += std::to_string(levels[k]);
  }
  return out + ")";
}

}  // namespace

std::string Scope::label(const CovariateSchema& schema) const {
  switch (kind_) {
    case ScopeKind::Overall:
      return "overall";
    case ScopeKind::ObsMargin:
      return schema.observed()[static_cast<std::size_t>(covariate_)].name + "=" + std::to_string(level_);
    case ScopeKind::ObsStratum:
      return "s=" + levels_label(schema, obs_index_, true);
    case ScopeKind::UnobsMargin:
      return schema.unobserved()[static_cast<std::size_t>(covariate_)].name + "=" + std::to_string(level_);
    case ScopeKind::UnobsStratum:
      return "r=" + levels_label(schema, unobs_index_, false);
    case ScopeKind::JointStratumMargin:
      return "s=" + levels_label(schema, obs_index_, true) + "," +
             schema.unobserved()[static_cast<std::size_t>(covariate_)].name + "=" + std::to_string(level_);
    case ScopeKind::JointStratumStratum:
      return "s=" + levels_label(schema, obs_index_, true) + ",r=" + levels_label(schema, unobs_index_, false);
  }
  return "?";
}

}  // namespace covbal
