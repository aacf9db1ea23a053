#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "covbal/config.hpp"
#include "covbal/csv.hpp"
#include "covbal/montecarlo.hpp"
#include "covbal/plot.hpp"
#include "covbal/report.hpp"
#include "covbal/theory.hpp"

namespace {

using namespace covbal;

struct CommonArgs {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  int threads = 0;
  std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_run_flags) {
  cmd->add_option("--config", args.config, "run configuration (JSON)")->required();
  cmd->add_option("--out", args.out, "output file for the summary");
  cmd->add_option("--format", args.format, "summary file format")->check(CLI::IsMember({"csv", "json"}));
  if (with_run_flags) {
    cmd->add_option("--seed", args.seed, "master seed override")->each([&](const std::string&) { args.seed_set = true; });
    cmd->add_option("--threads", args.threads, "worker threads (default: COVBAL_THREADS or hardware)");
  }
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file " + path);
  out << content;
  if (!out) throw std::runtime_error("failed writing output file " + path);
}

template <typename WriteCsv, typename WriteJson>
void emit(const CommonArgs& args, WriteCsv write_csv_fn, WriteJson write_json_fn) {
  if (args.out.empty()) return;
  std::ostringstream buffer;
  if (args.format == "json")
    write_json_fn(buffer);
  else
    write_csv_fn(buffer);
  write_text_file(args.out, buffer.str());
}

RunConfig load_for_run(const CommonArgs& args, bool need_procedures, bool need_replicates) {
  RunConfig cfg = load_run_config(args.config);
  if (args.seed_set) cfg.seed = args.seed;
  if (need_procedures) {
    if (cfg.procedures.empty()) throw ConfigError("procedures", "this command needs at least one procedure");
    if (cfg.metrics.empty()) throw ConfigError("metrics", "this command needs at least one metric");
    if (cfg.patients < 1) throw ConfigError("patients", "this command needs a positive study size");
  }
  if (need_replicates && cfg.replicates < 1)
    throw ConfigError("replicates", "this command needs a positive replicate count");
  return cfg;
}

int cmd_simulate(const CommonArgs& args) {
  const RunConfig cfg = load_for_run(args, true, true);
  Report report;
  for (const auto& point : cfg.points) {
    StudyConfig sc;
    sc.model = point.model;
    sc.procedures = cfg.procedures;
    sc.metrics = cfg.metrics;
    sc.patients = cfg.patients;
    sc.replicates = cfg.replicates;
    sc.seed = cfg.seed;
    sc.threads = args.threads;
    const StudySummary summary = run_study(sc);
    for (const auto& row : summary.rows) {
      ReportRow r;
      r.sweep = cfg.sweep;
      r.sweep_label = point.label;
      r.sweep_value = point.value;
      r.procedure = row.procedure;
      r.metric = row.metric;
      r.group = row.arm;
      r.has_sim = true;
      r.mean = row.moments.mean;
      r.sd = row.moments.sd;
      r.se_mean = row.moments.se_mean;
      r.theory_ref = row.theory_ref;
      r.theory_value = row.theory_value;
      report.rows.push_back(std::move(r));
    }
  }
  if (!cfg.name.empty()) std::cout << cfg.name << "\n\n";
  print_mean_sd_grid(std::cout, report);
  emit(args, [&](std::ostream& o) { write_report_csv(o, report); }, [&](std::ostream& o) { write_report_json(o, report); });
  return 0;
}

int cmd_theory(const CommonArgs& args) {
  const RunConfig cfg = load_for_run(args, true, false);
  Report report;
  for (const auto& point : cfg.points) {
    const JointPmf& joint = point.model->joint();
    for (const auto& spec : cfg.procedures) {
      for (const auto& metric : cfg.metrics) {
        const TheoryPrediction theory = predict_sd(joint, spec, metric, cfg.patients);
        ReportRow r;
        r.sweep = cfg.sweep;
        r.sweep_label = point.label;
        r.sweep_value = point.value;
        r.procedure = spec.name;
        r.metric = metric.id;
        r.group = metric.arm;
        r.theory_ref = theory.ref;
        r.theory_value = theory.value;
        report.rows.push_back(std::move(r));
      }
    }
  }
  if (!cfg.name.empty()) std::cout << cfg.name << "\n\n";
  print_theory_grid(std::cout, report);
  emit(args, [&](std::ostream& o) { write_report_csv(o, report); }, [&](std::ostream& o) { write_report_json(o, report); });
  return 0;
}

int cmd_entropy(const CommonArgs& args) {
  const RunConfig cfg = load_run_config(args.config);
  const CovariateSchema& schema = cfg.points.front().model->schema();
  const UnobsTarget target = cfg.entropy.target;
  const double rho = cfg.entropy.ratio.value();
  const std::string t = target ? schema.unobserved()[static_cast<std::size_t>(*target)].name : "U";

  std::vector<EntropyRow> rows;
  for (const auto& point : cfg.points) {
    const JointPmf& joint = point.model->joint();
    std::vector<double> strata(static_cast<std::size_t>(schema.observed_strata()));
    for (std::int64_t s = 0; s < schema.observed_strata(); ++s)
      strata[static_cast<std::size_t>(s)] = joint.stratum_prob(s);
    const double h_x = shannon_entropy(strata);

    std::vector<double> marginal;
    if (target) {
      const int levels = schema.unobserved()[static_cast<std::size_t>(*target)].levels;
      for (int level = 1; level <= levels; ++level) marginal.push_back(joint.unobs_margin_prob(*target, level));
    } else {
      for (std::int64_t r = 0; r < schema.unobserved_strata(); ++r) marginal.push_back(joint.unobs_stratum_prob(r));
    }
    const double h_target = shannon_entropy(marginal);
    const double h_cond = conditional_entropy(joint, target);
    const EntropyBounds bounds = entropy_bounds(h_target, h_x, h_x + h_cond);

    auto push = [&](const std::string& quantity, double value) {
      rows.push_back({cfg.sweep, point.label, point.value, quantity, value});
    };
    push("H(X)", h_x);
    push("H(" + t + ")", h_target);
    push("H(" + t + "|X)", h_cond);
    push("I(" + t + ";X)", mutual_information(joint, target));
    push("SV(" + t + "|X)", variance_sum_unweighted(joint, target));
    push("SVg(" + t + "|X)", variance_sum(joint, rho, target));
    push("Hg(" + t + "|X)", weighted_conditional_entropy(joint, rho, target));
    push("lower(" + t + "|X)", bounds.lower);
    push("upper(" + t + "|X)", bounds.upper);
  }
  if (!cfg.name.empty()) std::cout << cfg.name << "\n\n";
  print_entropy_table(std::cout, rows);
  emit(args, [&](std::ostream& o) { write_entropy_csv(o, rows); }, [&](std::ostream& o) { write_entropy_json(o, rows); });
  return 0;
}

// Next k-combination of 0..n-1 in lexicographic order; false when done.
bool next_combination(std::vector<int>& pick, int n) {
  const int k = static_cast<int>(pick.size());
  for (int i = k - 1; i >= 0; --i) {
    if (pick[static_cast<std::size_t>(i)] < n - k + i) {
      ++pick[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < k; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
      return true;
    }
  }
  return false;
}

int cmd_recommend(const CommonArgs& args) {
  const RunConfig cfg = load_run_config(args.config);
  if (!cfg.recommend) throw ConfigError("recommend", "this command needs a recommend section");
  if (cfg.points.size() != 1) throw ConfigError("scenario", "covariate ranking expects a single-scenario config");
  const RecommendSettings& rec = *cfg.recommend;
  const JointPmf& joint = cfg.points.front().model->joint();
  const CovariateSchema& schema = joint.schema();

  std::vector<int> candidates = rec.candidates;
  if (candidates.empty())
    for (int k = 0; k < schema.observed_count(); ++k) candidates.push_back(k);

  std::vector<RecommendRow> rows;
  std::vector<int> pick(static_cast<std::size_t>(rec.subset_size));
  for (int i = 0; i < rec.subset_size; ++i) pick[static_cast<std::size_t>(i)] = i;
  do {
    std::vector<int> subset;
    std::string label;
    for (int i : pick) {
      subset.push_back(candidates[static_cast<std::size_t>(i)]);
      if (!label.empty()) label += "+";
      label += schema.observed()[static_cast<std::size_t>(candidates[static_cast<std::size_t>(i)])].name;
    }
    const JointPmf sub = joint.regroup_observed(subset);
    std::vector<double> strata(static_cast<std::size_t>(sub.schema().observed_strata()));
    for (std::int64_t s = 0; s < sub.schema().observed_strata(); ++s)
      strata[static_cast<std::size_t>(s)] = sub.stratum_prob(s);

    RecommendRow row;
    row.subset = label;
    row.h_x = shannon_entropy(strata);
    row.h_cond = conditional_entropy(sub, rec.target);
    row.sv = variance_sum_unweighted(sub, rec.target);
    row.strata = sub.schema().observed_strata();
    bool all_large = true, all_small = true;
    for (std::int64_t s = 0; s < sub.schema().observed_strata(); ++s) {
      const double np = static_cast<double>(rec.patients) * sub.stratum_prob(s);
      if (np <= 0) continue;
      if (np < static_cast<double>(rec.block_size)) all_large = false;
      if (np > static_cast<double>(rec.block_size)) all_small = false;
    }
    row.regime = all_large ? "large" : all_small ? "small" : "mixed";
    rows.push_back(std::move(row));
  } while (next_combination(pick, static_cast<int>(candidates.size())));

  std::sort(rows.begin(), rows.end(), [](const RecommendRow& a, const RecommendRow& b) {
    if (a.h_cond != b.h_cond) return a.h_cond < b.h_cond;
    if (a.h_x != b.h_x) return a.h_x > b.h_x;
    return a.subset < b.subset;
  });
  if (!cfg.name.empty()) std::cout << cfg.name << "\n\n";
  print_recommend_table(std::cout, rows);
  emit(args, [&](std::ostream& o) { write_recommend_csv(o, rows); },
       [&](std::ostream& o) { write_recommend_json(o, rows); });
  return 0;
}

int cmd_plot(const std::string& in, const std::string& kind, const std::string& out, std::string title) {
  const CsvTable table = read_csv_file(in);
  if (title.empty()) title = std::filesystem::path(in).stem().string();
  const std::string svg = plot_from_summary(table, kind, title);
  write_text_file(out, svg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-arm randomization balance: simulation, closed-form variances, entropy diagnostics"};
  app.require_subcommand(1);

  CommonArgs sim_args, theory_args, entropy_args, recommend_args;
  CLI::App* simulate = app.add_subcommand("simulate", "run the Monte Carlo study in a config");
  add_common(simulate, sim_args, true);
  CLI::App* theory = app.add_subcommand("theory", "evaluate the closed-form variance formulas in a config");
  add_common(theory, theory_args, false);
  CLI::App* entropy = app.add_subcommand("entropy", "entropy and variance-sum diagnostics for a scenario");
  add_common(entropy, entropy_args, false);
  CLI::App* recommend = app.add_subcommand("recommend", "rank observed covariate subsets for stratification");
  add_common(recommend, recommend_args, false);

  std::string plot_in, plot_kind = "sd", plot_out, plot_title;
  CLI::App* plot = app.add_subcommand("plot", "render a summary CSV as an SVG line chart");
  plot->add_option("--in", plot_in, "summary CSV produced by simulate or entropy")->required();
  plot->add_option("--kind", plot_kind, "what to plot")->check(CLI::IsMember({"sd", "entropy"}));
  plot->add_option("--out", plot_out, "SVG file to write")->required();
  plot->add_option("--title", plot_title, "chart title (default: input file stem)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim_args);
    if (theory->parsed()) return cmd_theory(theory_args);
    if (entropy->parsed()) return cmd_entropy(entropy_args);
    if (recommend->parsed()) return cmd_recommend(recommend_args);
    if (plot->parsed()) return cmd_plot(plot_in, plot_kind, plot_out, plot_title);
  } catch (const covbal::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
