#include "covbal/montecarlo.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace covbal {

Moments summarize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("cannot summarize an empty sample");
  Moments m;
  m.count = values.size();
  double sum = 0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(m.count);
  if (m.count == 1) {
    m.sd = m.se_mean = m.se_sd = std::numeric_limits<double>::quiet_NaN();
    return m;
  }
  double ss = 0;
  for (double v : values) {
    const double d = v - m.mean;
    ss += d * d;
  }
  m.sd = std::sqrt(ss / static_cast<double>(m.count - 1));
  m.se_mean = m.sd / std::sqrt(static_cast<double>(m.count));
  m.se_sd = m.sd / std::sqrt(2.0 * static_cast<double>(m.count - 1));
  return m;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("COVBAL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

// Metric matcher against precomputed stratum indices; avoids re-deriving
// mixed-radix indices per metric inside the patient loop.
struct CompiledMetric {
  ScopeKind kind;
  int covariate = -1;
  int level = 0;
  std::int64_t obs_index = -1;
  std::int64_t unobs_index = -1;
  int arm = 1;
  Rational rho;
  std::int64_t events = 0;
  std::int64_t hits = 0;

  bool matches(const PatientProfile& profile, std::int64_t s, std::int64_t r) const {
    switch (kind) {
      case ScopeKind::Overall:
        return true;
      case ScopeKind::ObsMargin:
        return profile.observed[static_cast<std::size_t>(covariate)] == level;
      case ScopeKind::ObsStratum:
        return s == obs_index;
      case ScopeKind::UnobsMargin:
        return profile.unobserved[static_cast<std::size_t>(covariate)] == level;
      case ScopeKind::UnobsStratum:
        return r == unobs_index;
      case ScopeKind::JointStratumMargin:
        return s == obs_index && profile.unobserved[static_cast<std::size_t>(covariate)] == level;
      case ScopeKind::JointStratumStratum:
        return s == obs_index && r == unobs_index;
    }
    return false;
  }
};

bool needs_obs_index(ScopeKind kind) {
  return kind == ScopeKind::ObsStratum || kind == ScopeKind::JointStratumMargin ||
         kind == ScopeKind::JointStratumStratum;
}

bool needs_unobs_index(ScopeKind kind) {
  return kind == ScopeKind::UnobsStratum || kind == ScopeKind::JointStratumStratum;
}

}  // namespace

std::vector<double> run_replicate(const PopulationModel& model, const ProcedureSpec& procedure, std::int64_t patients,
                                  std::span<const Metric> metrics, std::uint64_t master_seed,
                                  std::int64_t replicate_index) {
  if (patients < 1) throw std::invalid_argument("patients must be positive");
  if (patients > model.max_draws())
    throw std::invalid_argument("scenario supplies at most " + std::to_string(model.max_draws()) +
                                " patients per replicate, requested " + std::to_string(patients));
  const int arms = static_cast<int>(procedure.ratios.size());
  std::vector<CompiledMetric> compiled;
  compiled.reserve(metrics.size());
  bool need_s = false, need_r = false;
  for (const auto& metric : metrics) {
    if (metric.arm < 1 || metric.arm > arms)
      throw std::invalid_argument("metric '" + metric.id + "' tracks arm " + std::to_string(metric.arm) +
                                  " but the procedure has " + std::to_string(arms) + " arms");
    CompiledMetric c;
    c.kind = metric.scope.kind();
    c.covariate = metric.scope.covariate();
    c.level = metric.scope.level();
    c.obs_index = metric.scope.obs_index();
    c.unobs_index = metric.scope.unobs_index();
    c.arm = metric.arm;
    c.rho = procedure.ratios[static_cast<std::size_t>(metric.arm - 1)];
    need_s = need_s || needs_obs_index(c.kind);
    need_r = need_r || needs_unobs_index(c.kind);
    compiled.push_back(std::move(c));
  }

  const CovariateSchema& schema = model.schema();
  auto state = make_procedure_state(procedure, schema);
  auto sampler = model.sampler();
  SplitMix64 patient_rng(replicate_seed(master_seed, static_cast<std::uint64_t>(replicate_index), 0));
  SplitMix64 treatment_rng(replicate_seed(master_seed, static_cast<std::uint64_t>(replicate_index), 1));

  PatientProfile profile;
  for (std::int64_t i = 0; i < patients; ++i) {
    sampler->next(profile, patient_rng);
    const int arm = state->assign(profile.observed_view(), treatment_rng);
    const std::int64_t s = need_s ? schema.observed_index(profile.observed) : -1;
    const std::int64_t r = need_r ? schema.unobserved_index(profile.unobserved) : -1;
    for (auto& c : compiled) {
      if (!c.matches(profile, s, r)) continue;
      ++c.events;
      if (arm == c.arm) ++c.hits;
    }
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(patients));
  std::vector<double> out;
  out.reserve(compiled.size());
  for (const auto& c : compiled) {
    const Rational d = Rational(c.hits) - c.rho * Rational(c.events);
    out.push_back(d.value() * scale);
  }
  return out;
}

namespace {

bool unobserved_scope(ScopeKind kind) {
  return kind == ScopeKind::UnobsMargin || kind == ScopeKind::UnobsStratum ||
         kind == ScopeKind::JointStratumMargin || kind == ScopeKind::JointStratumStratum;
}

/* Remaps a metric scope onto the covariates a subset procedure actually
 * stratifies on. Scopes touching only the unobserved block (and Overall)
 * carry over unchanged; an observed margin survives when its covariate is
 * kept; stratum-anchored observed scopes do not survive regrouping. */
std::optional<Scope> remap_scope(const Scope& scope, const CovariateSchema& reduced, std::span<const int> used) {
  switch (scope.kind()) {
    case ScopeKind::Overall:
    case ScopeKind::UnobsMargin:
    case ScopeKind::UnobsStratum:
      return scope;
    case ScopeKind::ObsMargin:
      for (std::size_t i = 0; i < used.size(); ++i)
        if (used[i] == scope.covariate()) return Scope::obs_margin(reduced, static_cast<int>(i), scope.level());
      return std::nullopt;
    default:
      return std::nullopt;
  }
}

TheoryPrediction attach_theory(const JointPmf& full_joint, const JointPmf& proc_joint, const ProcedureSpec& spec,
                               const Metric& metric, std::int64_t patients) {
  const double rho = spec.ratios[static_cast<std::size_t>(metric.arm - 1)].value();
  TheoryPrediction none;
  try {
    if (spec.kind == ProcedureKind::CompleteRandomization)
      return {"cr", std::sqrt(cr_variance(full_joint, rho, metric.scope))};

    std::optional<Scope> scope = metric.scope;
    if (!spec.used_covariates.empty())
      scope = remap_scope(metric.scope, proc_joint.schema(), spec.used_covariates);
    if (!scope || !unobserved_scope(scope->kind())) return none;

    if (spec.kind == ProcedureKind::StratifiedBlocks) {
      BlockSizes blocks;
      blocks.uniform = static_cast<std::int64_t>(spec.block_multiple) * period(spec.ratios);
      for (const auto& [stratum, multiple] : spec.stratum_multiples)
        blocks.per_stratum[stratum] = static_cast<std::int64_t>(multiple) * period(spec.ratios);
      for (BlockRegime regime : {BlockRegime::LargeStrata, BlockRegime::SmallStrata}) {
        const StrPbVariance v = strpb_variance(proc_joint, rho, *scope, regime, patients, blocks);
        if (!v.regime_mismatch)
          return {regime == BlockRegime::LargeStrata ? "strpb-large" : "strpb-small", std::sqrt(v.value)};
      }
      return none;
    }
    if (spec.kind == ProcedureKind::CovariateAdaptive && spec.weights && spec.weights->stratum_positive())
      return {"balanced", std::sqrt(balanced_variance(proc_joint, rho, *scope))};
  } catch (const std::domain_error&) {
    return none;  // zero-probability stratum in the scope: no finite prediction
  }
  return none;
}

}  // namespace

TheoryPrediction predict_sd(const JointPmf& joint, const ProcedureSpec& procedure, const Metric& metric,
                            std::int64_t patients) {
  std::optional<JointPmf> regrouped;
  if (!procedure.used_covariates.empty() && procedure.kind != ProcedureKind::CompleteRandomization)
    regrouped = joint.regroup_observed(procedure.used_covariates);
  return attach_theory(joint, regrouped ? *regrouped : joint, procedure, metric, patients);
}

StudySummary run_study(const StudyConfig& config) {
  if (!config.model) throw std::invalid_argument("study needs a population model");
  if (config.procedures.empty()) throw std::invalid_argument("study needs at least one procedure");
  if (config.metrics.empty()) throw std::invalid_argument("study needs at least one metric");
  if (config.replicates < 1) throw std::invalid_argument("replicates must be positive");
  if (config.patients < 1) throw std::invalid_argument("patients must be positive");

  const std::size_t procedures = config.procedures.size();
  const std::size_t metrics = config.metrics.size();
  const std::size_t replicates = static_cast<std::size_t>(config.replicates);
  std::vector<std::vector<double>> results(procedures * metrics, std::vector<double>(replicates));

  std::atomic<std::int64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::int64_t error_replicate = -1;
  std::mutex error_mutex;

  auto work = [&] {
    try {
      while (!failed.load(std::memory_order_relaxed)) {
        const std::int64_t rep = next.fetch_add(1, std::memory_order_relaxed);
        if (rep >= config.replicates) break;
        for (std::size_t p = 0; p < procedures; ++p) {
          const std::vector<double> vals =
              run_replicate(*config.model, config.procedures[p], config.patients, config.metrics, config.seed, rep);
          for (std::size_t m = 0; m < metrics; ++m)
            results[p * metrics + m][static_cast<std::size_t>(rep)] = vals[m];
        }
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!failed.exchange(true)) {
        error = std::current_exception();
        error_replicate = next.load() - 1;
      }
    }
  };

  const int threads = static_cast<int>(std::min<std::int64_t>(resolve_threads(config.threads), config.replicates));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) {
    try {
      std::rethrow_exception(error);
    } catch (const std::exception& e) {
      throw std::runtime_error("replicate " + std::to_string(error_replicate) + " failed: " + e.what());
    }
  }

  StudySummary summary;
  summary.rows.reserve(procedures * metrics);
  const JointPmf& joint = config.model->joint();
  for (std::size_t p = 0; p < procedures; ++p) {
    const ProcedureSpec& spec = config.procedures[p];
    std::optional<JointPmf> regrouped;
    if (!spec.used_covariates.empty() && spec.kind != ProcedureKind::CompleteRandomization)
      regrouped = joint.regroup_observed(spec.used_covariates);
    const JointPmf& proc_joint = regrouped ? *regrouped : joint;
    for (std::size_t m = 0; m < metrics; ++m) {
      SummaryRow row;
      row.procedure = spec.name;
      row.metric = config.metrics[m].id;
      row.arm = config.metrics[m].arm;
      row.moments = summarize(results[p * metrics + m]);
      const TheoryPrediction theory = attach_theory(joint, proc_joint, spec, config.metrics[m], config.patients);
      row.theory_ref = theory.ref;
      row.theory_value = theory.value;
      summary.rows.push_back(std::move(row));
    }
  }
  return summary;
}

VarianceTrend estimate_variance_trend(StudyConfig config, std::span<const std::int64_t> sizes) {
  if (config.procedures.size() != 1 || config.metrics.size() != 1)
    throw std::invalid_argument("variance trend expects exactly one procedure and one metric");
  if (sizes.size() < 2) throw std::invalid_argument("variance trend needs at least two study sizes");
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) throw std::invalid_argument("study sizes must be strictly increasing");

  VarianceTrend trend;
  trend.points.reserve(sizes.size());
  for (std::int64_t n : sizes) {
    config.patients = n;
    const StudySummary summary = run_study(config);
    const double sd = summary.rows.front().moments.sd;
    trend.points.push_back({n, sd * sd});
  }
  trend.plateau = trend.points.back().variance;
  bool decreasing = trend.points.size() > 1;
  for (std::size_t i = 1; i < trend.points.size(); ++i)
    if (trend.points[i].variance >= trend.points[i - 1].variance) decreasing = false;
  trend.decays_to_zero = decreasing && trend.points.back().variance < 0.25 * trend.points.front().variance;
  return trend;
}

}  // namespace covbal
