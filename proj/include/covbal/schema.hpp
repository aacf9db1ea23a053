#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace covbal {

struct Covariate {
  std::string name;
  int levels = 0;
};

/* Observed and unobserved covariate blocks. Levels are 1-based (a binary
 * covariate coded 0/1 on paper is stored as levels 1/2). Strata are the
 * cross-classifications of a block; they are addressed by a 0-based linear
 * index in mixed radix over the block's level counts. */
class CovariateSchema {
 public:
  CovariateSchema() = default;
  // Observed block must be nonempty; names unique across both blocks; every
  // level count >= 2.
  CovariateSchema(std::vector<Covariate> observed, std::vector<Covariate> unobserved);

  const std::vector<Covariate>& observed() const { return observed_; }
  const std::vector<Covariate>& unobserved() const { return unobserved_; }
  int observed_count() const { return static_cast<int>(observed_.size()); }
  int unobserved_count() const { return static_cast<int>(unobserved_.size()); }
  std::int64_t observed_strata() const { return obs_strata_; }
  std::int64_t unobserved_strata() const { return unobs_strata_; }

  std::int64_t observed_index(std::span<const int> levels) const;
  std::int64_t unobserved_index(std::span<const int> levels) const;
  void decode_observed(std::int64_t index, std::span<int> levels_out) const;
  void decode_unobserved(std::int64_t index, std::span<int> levels_out) const;

  // -1 when the name is absent. Searches observed then unobserved.
  int observed_position(std::string_view name) const;
  int unobserved_position(std::string_view name) const;

 private:
  std::vector<Covariate> observed_;
  std::vector<Covariate> unobserved_;
  std::vector<std::int64_t> obs_stride_;
  std::vector<std::int64_t> unobs_stride_;
  std::int64_t obs_strata_ = 1;
  std::int64_t unobs_strata_ = 1;
};

/* Read-only window onto the observed half of a profile. Randomization
 * procedures accept only this type, so unobserved covariates are blinded
 * structurally rather than by convention. */
class ObservedProfile {
 public:
  explicit ObservedProfile(std::span<const int> levels) : levels_(levels) {}
  int level(int covariate) const { return levels_[static_cast<std::size_t>(covariate)]; }
  int count() const { return static_cast<int>(levels_.size()); }
  std::span<const int> levels() const { return levels_; }

 private:
  std::span<const int> levels_;
};

struct PatientProfile {
  std::vector<int> observed;
  std::vector<int> unobserved;

  ObservedProfile observed_view() const { return ObservedProfile(observed); }
};

// Throws std::invalid_argument when a level is out of range or a block has
// the wrong arity for the schema.
void validate_profile(const CovariateSchema& schema, const PatientProfile& profile);

enum class ScopeKind : std::uint8_t {
  Overall,
  ObsMargin,            // one observed covariate at one level
  ObsStratum,           // full observed stratum
  UnobsMargin,          // one unobserved covariate at one level
  UnobsStratum,         // full unobserved stratum
  JointStratumMargin,   // observed stratum crossed with one unobserved margin
  JointStratumStratum,  // observed stratum crossed with unobserved stratum
};

/* A subset of patients over which imbalance is tracked. Construction
 * validates indices against the schema; factories take 0-based covariate
 * positions and 1-based levels. */
class Scope {
 public:
  static Scope overall();
  static Scope obs_margin(const CovariateSchema& schema, int covariate, int level);
  static Scope obs_stratum(const CovariateSchema& schema, std::span<const int> levels);
  static Scope unobs_margin(const CovariateSchema& schema, int covariate, int level);
  static Scope unobs_stratum(const CovariateSchema& schema, std::span<const int> levels);
  static Scope joint_stratum_margin(const CovariateSchema& schema, std::span<const int> stratum, int covariate,
                                    int level);
  static Scope joint_stratum_stratum(const CovariateSchema& schema, std::span<const int> stratum,
                                     std::span<const int> levels);

  ScopeKind kind() const { return kind_; }
  int covariate() const { return covariate_; }
  int level() const { return level_; }
  std::int64_t obs_index() const { return obs_index_; }
  std::int64_t unobs_index() const { return unobs_index_; }

  bool contains(const CovariateSchema& schema, const PatientProfile& profile) const;
  std::string label(const CovariateSchema& schema) const;

  friend bool operator==(const Scope&, const Scope&) = default;

 private:
  ScopeKind kind_ = ScopeKind::Overall;
  int covariate_ = -1;
  int level_ = -1;
  std::int64_t obs_index_ = -1;
  std::int64_t unobs_index_ = -1;
};

}  // namespace covbal
