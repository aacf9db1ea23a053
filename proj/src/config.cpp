#include "covbal/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string_view>

#include "json.hpp"

namespace covbal {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& message) { throw ConfigError(path, message); }

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

std::string index_path(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

const Json& require(const Json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(path, std::string("missing required key '") + key + "'");
  return *it;
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || item.key() == a;
    if (!known) fail(join(path, item.key()), "unknown key");
  }
}

std::string as_string(const Json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

std::int64_t as_int(const Json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<std::int64_t>();
}

std::int64_t as_positive_int(const Json& v, const std::string& path) {
  const std::int64_t n = as_int(v, path);
  if (n < 1) fail(path, "expected a positive integer");
  return n;
}

double as_number(const Json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

Rational as_rational(const Json& v, const std::string& path) {
  if (v.is_number_integer()) return Rational(v.get<std::int64_t>());
  if (v.is_string()) {
    try {
      return Rational::parse(v.get<std::string>());
    } catch (const std::exception& e) {
      fail(path, e.what());
    }
  }
  fail(path, "expected an exact value: an integer or a \"num/den\" / decimal string");
}

std::vector<Rational> rational_list(const Json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "expected a nonempty array");
  std::vector<Rational> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_rational(v[i], index_path(path, i)));
  return out;
}

std::vector<int> levels_array(const Json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "expected a nonempty array of 1-based levels");
  std::vector<int> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(static_cast<int>(as_positive_int(v[i], index_path(path, i))));
  return out;
}

int resolve_observed(const Json& v, const CovariateSchema& schema, const std::string& path) {
  if (v.is_string()) {
    const std::string name = v.get<std::string>();
    const int p = schema.observed_position(name);
    if (p < 0) fail(path, "unknown observed covariate '" + name + "'");
    return p;
  }
  if (v.is_number_integer()) {
    const std::int64_t k = v.get<std::int64_t>();
    if (k < 1 || k > schema.observed_count()) fail(path, "observed covariate index out of range (1-based)");
    return static_cast<int>(k - 1);
  }
  fail(path, "expected a covariate name or a 1-based index");
}

int resolve_unobserved(const Json& v, const CovariateSchema& schema, const std::string& path) {
  if (v.is_string()) {
    const std::string name = v.get<std::string>();
    const int p = schema.unobserved_position(name);
    if (p < 0) fail(path, "unknown unobserved covariate '" + name + "'");
    return p;
  }
  if (v.is_number_integer()) {
    const std::int64_t k = v.get<std::int64_t>();
    if (k < 1 || k > schema.unobserved_count()) fail(path, "unobserved covariate index out of range (1-based)");
    return static_cast<int>(k - 1);
  }
  fail(path, "expected a covariate name or a 1-based index");
}

std::string trimmed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<std::string> string_list(const Json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "expected a nonempty array of names");
  std::vector<std::string> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_string(v[i], index_path(path, i)));
  return out;
}

void build_scenario(const Json& v, const std::filesystem::path& base_dir, RunConfig& cfg) {
  const std::string path = "scenario";
  const std::string type = as_string(require(v, "type", path), join(path, "type"));
  try {
    if (type == "delta") {
      reject_unknown(v, {"type", "delta"}, path);
      cfg.sweep = "delta";
      const Json& d = require(v, "delta", path);
      const Json values = d.is_array() ? d : Json::array({d});
      if (values.empty()) fail(join(path, "delta"), "expected at least one value");
      for (std::size_t i = 0; i < values.size(); ++i) {
        const std::string vp = d.is_array() ? index_path(join(path, "delta"), i) : join(path, "delta");
        const Rational delta = as_rational(values[i], vp);
        cfg.points.push_back({"delta=" + delta.str(), delta.value(), delta_model(delta)});
      }
    } else if (type == "threshold") {
      reject_unknown(v, {"type", "sigma1", "sigma2"}, path);
      cfg.sweep = "sigma1";
      const double sigma2 = v.contains("sigma2") ? as_number(v.at("sigma2"), join(path, "sigma2")) : 1.0;
      const Json& s1 = require(v, "sigma1", path);
      const Json values = s1.is_array() ? s1 : Json::array({s1});
      if (values.empty()) fail(join(path, "sigma1"), "expected at least one value");
      for (std::size_t i = 0; i < values.size(); ++i) {
        const std::string vp = s1.is_array() ? index_path(join(path, "sigma1"), i) : join(path, "sigma1");
        const double sigma1 = as_number(values[i], vp);
        cfg.points.push_back({"sigma1=" + trimmed(sigma1), sigma1, threshold_model(sigma1, sigma2)});
      }
    } else if (type == "tabular") {
      reject_unknown(v, {"type", "observed", "unobserved", "cells"}, path);
      auto block = [&](const char* key) {
        const Json& list = require(v, key, path);
        const std::string bp = join(path, key);
        if (!list.is_array()) fail(bp, "expected an array of {name, levels}");
        std::vector<Covariate> out;
        for (std::size_t i = 0; i < list.size(); ++i) {
          const Json& c = list[i];
          const std::string cp = index_path(bp, i);
          reject_unknown(c, {"name", "levels"}, cp);
          out.push_back({as_string(require(c, "name", cp), join(cp, "name")),
                         static_cast<int>(as_positive_int(require(c, "levels", cp), join(cp, "levels")))});
        }
        return out;
      };
      CovariateSchema schema(block("observed"), block("unobserved"));
      const Json& cells = require(v, "cells", path);
      const std::string cp = join(path, "cells");
      if (!cells.is_array()) fail(cp, "expected an array of probabilities");
      const auto expected = static_cast<std::size_t>(schema.observed_strata() * schema.unobserved_strata());
      if (cells.size() != expected)
        fail(cp, "expected " + std::to_string(expected) + " cells, got " + std::to_string(cells.size()));
      std::vector<double> mass;
      mass.reserve(cells.size());
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const Json& c = cells[i];
        mass.push_back(c.is_string() ? as_rational(c, index_path(cp, i)).value() : as_number(c, index_path(cp, i)));
      }
      cfg.points.push_back({"", 0.0, tabular_model(JointPmf(std::move(schema), std::move(mass)))});
    } else if (type == "cohort") {
      reject_unknown(v, {"type", "csv", "recode", "observed", "unobserved", "arrivals"}, path);
      const std::string csv = (base_dir / as_string(require(v, "csv", path), join(path, "csv"))).string();
      const std::string recode = (base_dir / as_string(require(v, "recode", path), join(path, "recode"))).string();
      auto observed = string_list(require(v, "observed", path), join(path, "observed"));
      auto unobserved = string_list(require(v, "unobserved", path), join(path, "unobserved"));
      ArrivalPolicy policy = ArrivalPolicy::Permutation;
      if (v.contains("arrivals")) {
        const std::string a = as_string(v.at("arrivals"), join(path, "arrivals"));
        if (a == "bootstrap")
          policy = ArrivalPolicy::Bootstrap;
        else if (a != "permutation")
          fail(join(path, "arrivals"), "expected \"permutation\" or \"bootstrap\"");
      }
      Cohort cohort = load_cohort(csv, recode);
      cfg.points.push_back({"", 0.0, cohort_model(std::move(cohort), observed, unobserved, policy)});
    } else {
      fail(join(path, "type"), "unknown scenario type '" + type + "' (delta, threshold, tabular, cohort)");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    fail(path, e.what());
  }
}

bool same_schema(const CovariateSchema& a, const CovariateSchema& b) {
  auto same_block = [](std::span<const Covariate> x, std::span<const Covariate> y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i].name != y[i].name || x[i].levels != y[i].levels) return false;
    return true;
  };
  return same_block(a.observed(), b.observed()) && same_block(a.unobserved(), b.unobserved());
}

std::vector<int> parse_used_covariates(const Json& v, const CovariateSchema& schema, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "expected a nonempty array of observed covariates");
  std::vector<int> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(resolve_observed(v[i], schema, index_path(path, i)));
  return out;
}

// Mirrors the stratification a subset procedure uses, so block-size
// overrides can be addressed by their stratum levels.
CovariateSchema reduced_schema(const CovariateSchema& schema, std::span<const int> used) {
  if (used.empty()) return CovariateSchema(std::vector<Covariate>(schema.observed().begin(), schema.observed().end()), {});
  std::vector<Covariate> obs;
  obs.reserve(used.size());
  for (int k : used) obs.push_back(schema.observed()[static_cast<std::size_t>(k)]);
  return CovariateSchema(std::move(obs), {});
}

ProcedureSpec parse_procedure(const Json& v, const CovariateSchema& schema, const std::string& path) {
  reject_unknown(v, {"type", "name", "ratios", "block_multiple", "stratum_multiples", "weights", "biased", "covariates"},
                 path);
  const std::string type = as_string(require(v, "type", path), join(path, "type"));
  ProcedureSpec spec;
  if (type == "cr")
    spec.kind = ProcedureKind::CompleteRandomization;
  else if (type == "strpb")
    spec.kind = ProcedureKind::StratifiedBlocks;
  else if (type == "car")
    spec.kind = ProcedureKind::CovariateAdaptive;
  else
    fail(join(path, "type"), "unknown procedure type '" + type + "' (cr, strpb, car)");
  spec.name = v.contains("name") ? as_string(v.at("name"), join(path, "name")) : type;
  spec.ratios = rational_list(require(v, "ratios", path), join(path, "ratios"));

  if (v.contains("covariates")) {
    if (spec.kind == ProcedureKind::CompleteRandomization)
      fail(join(path, "covariates"), "complete randomization does not stratify on covariates");
    spec.used_covariates = parse_used_covariates(v.at("covariates"), schema, join(path, "covariates"));
  }

  auto forbid = [&](const char* key, const char* why) {
    if (v.contains(key)) fail(join(path, key), why);
  };
  if (spec.kind != ProcedureKind::StratifiedBlocks) {
    forbid("block_multiple", "only block procedures take block sizes");
    forbid("stratum_multiples", "only block procedures take block sizes");
  }
  if (spec.kind != ProcedureKind::CovariateAdaptive) {
    forbid("weights", "only covariate-adaptive procedures take weights");
    forbid("biased", "only covariate-adaptive procedures take biased probabilities");
  }

  if (spec.kind == ProcedureKind::StratifiedBlocks) {
    if (v.contains("block_multiple"))
      spec.block_multiple = static_cast<int>(as_positive_int(v.at("block_multiple"), join(path, "block_multiple")));
    if (v.contains("stratum_multiples")) {
      const Json& list = v.at("stratum_multiples");
      const std::string mp = join(path, "stratum_multiples");
      if (!list.is_array()) fail(mp, "expected an array of {levels, multiple}");
      const CovariateSchema reduced = reduced_schema(schema, spec.used_covariates);
      for (std::size_t i = 0; i < list.size(); ++i) {
        const Json& entry = list[i];
        const std::string ep = index_path(mp, i);
        reject_unknown(entry, {"levels", "multiple"}, ep);
        const std::vector<int> levels = levels_array(require(entry, "levels", ep), join(ep, "levels"));
        std::int64_t stratum = 0;
        try {
          stratum = reduced.observed_index(levels);
        } catch (const std::exception& e) {
          fail(join(ep, "levels"), e.what());
        }
        spec.stratum_multiples[stratum] =
            static_cast<int>(as_positive_int(require(entry, "multiple", ep), join(ep, "multiple")));
      }
    }
  }

  if (spec.kind == ProcedureKind::CovariateAdaptive) {
    const Json& w = require(v, "weights", path);
    const std::string wp = join(path, "weights");
    reject_unknown(w, {"overall", "margins", "stratum"}, wp);
    try {
      spec.weights.emplace(as_rational(require(w, "overall", wp), join(wp, "overall")),
                           rational_list(require(w, "margins", wp), join(wp, "margins")),
                           as_rational(require(w, "stratum", wp), join(wp, "stratum")));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail(wp, std::string(e.what()) + " (w_o + sum w_m + w_s = 1, every weight nonnegative)");
    }
    try {
      spec.biased.emplace(rational_list(require(v, "biased", path), join(path, "biased")));
      spec.biased->check_compatible(spec.ratios);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail(join(path, "biased"), e.what());
    }
  }

  // One dry construction catches everything else (ratio sums, arm counts,
  // margin-weight arity, subset positions) before any replicate runs.
  try {
    make_procedure_state(spec, schema);
  } catch (const std::exception& e) {
    fail(path, e.what());
  }
  return spec;
}

Metric parse_metric(const Json& v, const CovariateSchema& schema, int arms, const std::string& path) {
  reject_unknown(v, {"scope", "arm", "id"}, path);
  const Json& s = require(v, "scope", path);
  const std::string sp = join(path, "scope");
  const std::string kind = as_string(require(s, "kind", sp), join(sp, "kind"));
  Metric metric;
  try {
    if (kind == "overall") {
      reject_unknown(s, {"kind"}, sp);
      metric.scope = Scope::overall();
    } else if (kind == "obs_margin") {
      reject_unknown(s, {"kind", "covariate", "level"}, sp);
      metric.scope = Scope::obs_margin(schema, resolve_observed(require(s, "covariate", sp), schema, join(sp, "covariate")),
                                       static_cast<int>(as_positive_int(require(s, "level", sp), join(sp, "level"))));
    } else if (kind == "obs_stratum") {
      reject_unknown(s, {"kind", "levels"}, sp);
      metric.scope = Scope::obs_stratum(schema, levels_array(require(s, "levels", sp), join(sp, "levels")));
    } else if (kind == "unobs_margin") {
      reject_unknown(s, {"kind", "covariate", "level"}, sp);
      metric.scope =
          Scope::unobs_margin(schema, resolve_unobserved(require(s, "covariate", sp), schema, join(sp, "covariate")),
                              static_cast<int>(as_positive_int(require(s, "level", sp), join(sp, "level"))));
    } else if (kind == "unobs_stratum") {
      reject_unknown(s, {"kind", "levels"}, sp);
      metric.scope = Scope::unobs_stratum(schema, levels_array(require(s, "levels", sp), join(sp, "levels")));
    } else if (kind == "joint_stratum_margin") {
      reject_unknown(s, {"kind", "stratum", "covariate", "level"}, sp);
      metric.scope = Scope::joint_stratum_margin(
          schema, levels_array(require(s, "stratum", sp), join(sp, "stratum")),
          resolve_unobserved(require(s, "covariate", sp), schema, join(sp, "covariate")),
          static_cast<int>(as_positive_int(require(s, "level", sp), join(sp, "level"))));
    } else if (kind == "joint_stratum_stratum") {
      reject_unknown(s, {"kind", "stratum", "levels"}, sp);
      metric.scope = Scope::joint_stratum_stratum(schema, levels_array(require(s, "stratum", sp), join(sp, "stratum")),
                                                  levels_array(require(s, "levels", sp), join(sp, "levels")));
    } else {
      fail(join(sp, "kind"), "unknown scope kind '" + kind + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    fail(sp, e.what());
  }
  if (v.contains("arm")) {
    const std::int64_t arm = as_positive_int(v.at("arm"), join(path, "arm"));
    if (arm > arms) fail(join(path, "arm"), "arm exceeds the procedures' arm count");
    metric.arm = static_cast<int>(arm);
  }
  metric.id = v.contains("id") ? as_string(v.at("id"), join(path, "id")) : metric.scope.label(schema);
  return metric;
}

UnobsTarget parse_target(const Json& v, const CovariateSchema& schema, const std::string& path) {
  if (v.is_null()) return std::nullopt;
  return resolve_unobserved(v, schema, path);
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path);
  Json root;
  try {
    root = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("", std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(root,
                 {"name", "scenario", "procedures", "metrics", "patients", "replicates", "seed", "entropy", "recommend"},
                 "");

  RunConfig cfg;
  if (root.contains("name")) cfg.name = as_string(root.at("name"), "name");
  build_scenario(require(root, "scenario", ""), std::filesystem::path(path).parent_path(), cfg);
  const CovariateSchema& schema = cfg.points.front().model->schema();
  for (std::size_t i = 1; i < cfg.points.size(); ++i)
    if (!same_schema(schema, cfg.points[i].model->schema()))
      fail("scenario", "every sweep point must share one covariate schema");

  if (root.contains("patients")) cfg.patients = as_positive_int(root.at("patients"), "patients");
  if (root.contains("replicates")) cfg.replicates = as_positive_int(root.at("replicates"), "replicates");
  if (root.contains("seed")) {
    const Json& s = root.at("seed");
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<std::int64_t>() < 0))
      fail("seed", "expected a nonnegative integer");
    cfg.seed = s.get<std::uint64_t>();
  }

  if (root.contains("procedures")) {
    const Json& list = root.at("procedures");
    if (!list.is_array() || list.empty()) fail("procedures", "expected a nonempty array");
    for (std::size_t i = 0; i < list.size(); ++i)
      cfg.procedures.push_back(parse_procedure(list[i], schema, index_path("procedures", i)));
    for (std::size_t i = 1; i < cfg.procedures.size(); ++i)
      if (cfg.procedures[i].ratios.size() != cfg.procedures.front().ratios.size())
        fail(index_path("procedures", i) + ".ratios", "every procedure must target the same arm count");
  }

  if (root.contains("metrics")) {
    const Json& list = root.at("metrics");
    if (!list.is_array() || list.empty()) fail("metrics", "expected a nonempty array");
    const int arms = cfg.procedures.empty() ? INT32_MAX : static_cast<int>(cfg.procedures.front().ratios.size());
    for (std::size_t i = 0; i < list.size(); ++i)
      cfg.metrics.push_back(parse_metric(list[i], schema, arms, index_path("metrics", i)));
  }

  if (root.contains("entropy")) {
    const Json& e = root.at("entropy");
    reject_unknown(e, {"target", "ratio"}, "entropy");
    if (e.contains("target")) cfg.entropy.target = parse_target(e.at("target"), schema, "entropy.target");
    if (e.contains("ratio")) {
      cfg.entropy.ratio = as_rational(e.at("ratio"), "entropy.ratio");
      if (cfg.entropy.ratio <= Rational(0) || cfg.entropy.ratio >= Rational(1))
        fail("entropy.ratio", "arm ratio must lie strictly inside (0,1)");
    }
  }

  if (root.contains("recommend")) {
    const Json& r = root.at("recommend");
    reject_unknown(r, {"subset_size", "target", "patients", "block_size", "candidates"}, "recommend");
    RecommendSettings rec;
    rec.subset_size = static_cast<int>(as_positive_int(require(r, "subset_size", "recommend"), "recommend.subset_size"));
    if (r.contains("target")) rec.target = parse_target(r.at("target"), schema, "recommend.target");
    rec.patients = r.contains("patients") ? as_positive_int(r.at("patients"), "recommend.patients") : cfg.patients;
    if (rec.patients < 1) fail("recommend.patients", "a study size is required for the block-regime annotation");
    if (r.contains("block_size")) rec.block_size = as_positive_int(r.at("block_size"), "recommend.block_size");
    if (r.contains("candidates"))
      rec.candidates = parse_used_covariates(r.at("candidates"), schema, "recommend.candidates");
    const std::size_t pool = rec.candidates.empty() ? static_cast<std::size_t>(schema.observed_count())
                                                    : rec.candidates.size();
    if (static_cast<std::size_t>(rec.subset_size) > pool)
      fail("recommend.subset_size", "subset size exceeds the candidate covariate count");
    cfg.recommend = std::move(rec);
  }

  return cfg;
}

}  // namespace covbal
