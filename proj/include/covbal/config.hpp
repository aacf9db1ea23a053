#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "covbal/montecarlo.hpp"
#include "covbal/scenarios.hpp"

namespace covbal {

// Validation failure while reading a run configuration; `path()` points at
// the offending element ("procedures[2].weights.stratum").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// One scenario of a parameter sweep: the population model plus the swept
// coordinate ("delta=1/16" -> 0.0625). Single-scenario configs hold one
// point with an empty label.
struct SweepPoint {
  std::string label;
  double value = 0;
  std::shared_ptr<const PopulationModel> model;
};

struct EntropySettings {
  UnobsTarget target;            // one unobserved margin by position, or full block
  Rational ratio = Rational(1, 2);  // arm ratio for the weighted quantities
};

struct RecommendSettings {
  int subset_size = 0;
  UnobsTarget target;
  std::int64_t patients = 0;     // study size for the block-regime annotation
  std::int64_t block_size = 4;
  std::vector<int> candidates;   // observed positions to draw subsets from; empty = all
};

/* A fully validated run description. Which sections must be present depends
 * on the command: simulate/theory need procedures, metrics and sizes;
 * entropy needs only the scenario; recommend needs its own section. */
struct RunConfig {
  std::string name;
  std::string sweep;             // swept parameter name; empty for one scenario
  std::vector<SweepPoint> points;
  std::vector<ProcedureSpec> procedures;
  std::vector<Metric> metrics;
  std::int64_t patients = 0;
  std::int64_t replicates = 0;
  std::uint64_t seed = 1;
  EntropySettings entropy;
  std::optional<RecommendSettings> recommend;
};

// Parses and validates a JSON run configuration. Relative file paths inside
// the config resolve against the config file's directory. Throws ConfigError
// with an element path on any violation.
RunConfig load_run_config(const std::string& path);

}  // namespace covbal
