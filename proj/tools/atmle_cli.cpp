// Command-line front end: simulate / match / estimate / diagnose.
// Exit codes: 0 ok, 2 config error, 3 runtime error, 4 statistical
// precondition violation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "atmle/config.hpp"
#include "atmle/diagnostics.hpp"
#include "atmle/estimators.hpp"
#include "atmle/io.hpp"
#include "atmle/matching.hpp"
#include "atmle/simulation.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

int exit_code_for(const atmle::Error& e) {
  switch (e.kind()) {
    case atmle::ErrorKind::config: return 2;
    case atmle::ErrorKind::precondition: return 4;
    case atmle::ErrorKind::runtime: return 3;
  }
  return 3;
}

struct SimulateArgs {
  std::string config_path;
  std::string out_dir;
  int workers = -1;  // -1 = take from config
};

int cmd_simulate(const SimulateArgs& args) {
  atmle::ExperimentConfig config =
      atmle::parse_experiment_config(atmle::read_text_file(args.config_path));
  if (args.workers >= 0) config.workers = args.workers;

  fs::create_directories(args.out_dir);
  atmle::write_text_file((fs::path(args.out_dir) / "resolved_config.json").string(),
                         atmle::resolved_experiment_config(config));

  const atmle::ExperimentResult result = atmle::run_experiment(config);
  atmle::write_text_file((fs::path(args.out_dir) / "metrics.csv").string(),
                         atmle::emit_metrics(result.rows, atmle::MetricsFormat::csv));

  std::ostringstream md;
  md << "# Simulation metrics\n\n";
  md << atmle::emit_metrics(result.rows, atmle::MetricsFormat::markdown);
  if (!result.source_stats.empty()) {
    md << "\n## Mean selected externals by source\n\n";
    md << "| strategy | external_n | s1 | s2 | s3 | s4 | s5 | frac(s1>s5) |\n";
    md << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& [key, s] : result.source_stats) {
      md << "| " << key.first << " | " << key.second << " |";
      char buf[32];
      for (double c : s.mean_counts) {
        std::snprintf(buf, sizeof(buf), " %.1f |", c);
        md << buf;
      }
      std::snprintf(buf, sizeof(buf), " %.3f |", s.frac_first_exceeds_last);
      md << buf << "\n";
    }
  }
  if (result.failed_cells > 0) {
    md << "\n## Failures\n\n" << result.failed_cells << " cell(s) failed and were "
       << "excluded from aggregation:\n\n";
    for (const auto& f : result.failures) md << "- " << f << "\n";
  }
  atmle::write_text_file((fs::path(args.out_dir) / "metrics.md").string(), md.str());

  std::cout << atmle::emit_metrics(result.rows, atmle::MetricsFormat::markdown);
  if (result.failed_cells > 0) {
    std::cerr << result.failed_cells << " cell(s) failed; see metrics.md\n";
  }
  return 0;
}

struct MatchArgs {
  std::string input, output;
  double r = 0.5;
  int k = 1, m = 0;
  int target_n = -1;
  std::string policy = "best_distance";
  std::string scale = "logit";
  double caliper = -1.0;
  uint64_t seed = 1;
};

void append_balance(std::ostringstream& os, const std::string& label,
                    const atmle::BalanceReport& rep) {
  os << label << ":\n";
  if (rep.separation) {
    os << "  logistic refit separated; coefficients unavailable\n";
  } else {
    os << "  max |coef| = " << rep.max_abs_coef << "\n";
    for (long j = 0; j < rep.coefficients.size(); ++j) {
      os << "  " << rep.names[size_t(j)] << ": coef=" << rep.coefficients[j]
         << " smd=" << rep.smd[j] << "\n";
    }
  }
}

int cmd_match(const MatchArgs& args) {
  const atmle::Cohort pool = atmle::read_cohort_csv(args.input, args.r);
  const auto [trial_rows, external_rows] = atmle::split_by_study(pool);
  (void)external_rows;

  atmle::Design design =
      atmle::expand_basis(pool.covariates, atmle::BasisSpec::main_terms());
  const atmle::CoefficientFit qfit = atmle::fit_logistic(
      design.X, pool.study.cast<double>(), Eigen::VectorXd(), design.info.names);
  Eigen::VectorXd score =
      (design.X * qfit.beta).unaryExpr([](double eta) { return atmle::expit(eta); });

  atmle::MatchSpec spec;
  spec.k = args.k;
  spec.m = args.m;
  spec.scale =
      args.scale == "probability" ? atmle::ScoreScale::probability : atmle::ScoreScale::logit;
  if (args.caliper > 0) spec.caliper = args.caliper;

  atmle::MatchResult result = atmle::match_trial_enrollment(pool, score, spec);
  if (args.m > 0) {
    result = atmle::match_propensity(pool, result, args.m);
  }
  if (args.target_n >= 0) {
    const atmle::TrimPolicy policy = args.policy == "random"
                                         ? atmle::TrimPolicy::random
                                         : atmle::TrimPolicy::best_distance;
    result = atmle::trim_to_size(pool, result, args.target_n, policy, args.seed);
  }

  std::vector<int> rows = trial_rows;
  rows.insert(rows.end(), result.selected_external.begin(),
              result.selected_external.end());
  std::sort(rows.begin(), rows.end());
  atmle::write_cohort_csv(atmle::subset_cohort(pool, rows), args.output);

  std::ostringstream os;
  os << "selected externals: " << result.selected_external.size() << "\n";
  append_balance(os, "balance before (S ~ W, full pool)", result.balance_before);
  append_balance(os, "balance after (S ~ W, matched sample)", result.balance_after);
  if (result.treatment_balance_before) {
    append_balance(os, "treatment balance before (A ~ W, stage-1 externals)",
                   *result.treatment_balance_before);
  }
  if (result.treatment_balance_after) {
    append_balance(os, "treatment balance after (A ~ W, final externals)",
                   *result.treatment_balance_after);
  }
  for (const auto& w : result.warnings) os << "warning: " << w << "\n";
  atmle::write_text_file(args.output + ".balance.txt", os.str());
  std::cout << os.str();
  return 0;
}

struct EstimateArgs {
  std::string input, output, estimator = "atmle";
  double r = -1.0;
  std::string basis = "main-terms";
  int knots = 3, depth = 1;
  std::string effect_treatment = "main";
  double alpha = 0.05;
  uint64_t seed = 1;
};

ojson estimate_json(const atmle::Estimate& e) {
  return ojson{{"point", e.point},   {"se", e.se},
               {"ci_lo", e.ci_lo},   {"ci_hi", e.ci_hi},
               {"p_value", e.p_value}, {"n", e.n},
               {"degenerate", e.degenerate}};
}

int cmd_estimate(const EstimateArgs& args) {
  if (!(args.r > 0.0 && args.r < 1.0)) {
    throw atmle::ConfigError("--r must be given strictly inside (0,1)");
  }
  const atmle::Cohort cohort = atmle::read_cohort_csv(args.input, args.r);

  atmle::EstimatorOptions opts;
  opts.alpha = args.alpha;
  opts.fit.seed = args.seed;
  atmle::TreatmentTerms effect_t = atmle::TreatmentTerms::main_effect;
  if (args.effect_treatment == "none") effect_t = atmle::TreatmentTerms::none;
  if (args.effect_treatment == "interactions") {
    effect_t = atmle::TreatmentTerms::interactions;
  }
  if (args.basis == "hal0") {
    opts.outcome_basis = atmle::BasisSpec::hal0(args.knots, args.depth);
    opts.cate_basis = atmle::BasisSpec::hal0(args.knots, args.depth);
    opts.effect_basis = atmle::BasisSpec::hal0(args.knots, args.depth, effect_t);
    opts.qbar_basis =
        atmle::BasisSpec::hal0(args.knots, args.depth, atmle::TreatmentTerms::interactions);
  } else if (args.basis == "main-terms") {
    opts.effect_basis = atmle::BasisSpec::main_terms(effect_t);
  } else {
    throw atmle::ConfigError("unknown --basis '" + args.basis + "'");
  }

  ojson doc;
  doc["estimator"] = args.estimator;
  doc["n"] = cohort.rows();
  doc["randomization_prob"] = args.r;
  doc["alpha"] = args.alpha;
  if (args.estimator == "atmle") {
    const atmle::ATMLEResult res = atmle::estimate_atmle(cohort, opts);
    doc.update(estimate_json(res.combined));
    doc["pooled"] = estimate_json(res.pooled.estimate);
    doc["bias"] = estimate_json(res.bias.estimate);
    doc["diagnostics"] = {{"propensity_min", res.propensity_min},
                          {"propensity_max", res.propensity_max},
                          {"clipped_rows", res.clipped_rows}};
  } else if (args.estimator == "tmle-rct") {
    doc.update(estimate_json(
        atmle::estimate_tmle_rct(cohort, opts.qbar_basis, opts.fit, opts.alpha)));
  } else if (args.estimator == "aipw") {
    doc.update(estimate_json(atmle::estimate_aipw(cohort, opts)));
  } else {
    throw atmle::ConfigError("unknown --estimator '" + args.estimator +
                             "' (expected atmle, tmle-rct, or aipw)");
  }
  atmle::write_text_file(args.output, doc.dump(2) + "\n");
  std::cout << doc.dump(2) << "\n";
  return 0;
}

struct DiagnoseArgs {
  std::string scenario;
  std::vector<double> eps;  // empty -> scenario default
  long mc_n = 100000;
  uint64_t seed = 7;
};

int cmd_diagnose(const DiagnoseArgs& args) {
  auto print_mc = [](const std::string& label, const atmle::McValue& v) {
    std::printf("%-28s % .6e  (mc se %.2e, n=%ld)\n", label.c_str(), v.value, v.se, v.n);
  };
  if (args.scenario == "true-g") {
    print_mc("pooled remainder", atmle::scenario_true_g(args.mc_n, args.seed));
  } else if (args.scenario == "true-pi") {
    print_mc("bias remainder", atmle::scenario_true_pi(args.mc_n, args.seed));
  } else if (args.scenario == "g-perturb" || args.scenario == "pi-perturb") {
    const bool g_side = args.scenario == "g-perturb";
    std::vector<double> eps = args.eps;
    if (eps.empty()) {
      eps = g_side ? atmle::default_g_perturb_eps() : atmle::default_pi_perturb_eps();
    }
    const atmle::PerturbationSweep sweep =
        g_side ? atmle::scenario_g_perturb(eps, args.mc_n, args.seed)
               : atmle::scenario_pi_perturb(eps, args.mc_n, args.seed);
    for (const auto& p : sweep.points) {
      print_mc("remainder @ eps=" + std::to_string(p.eps), p.remainder);
    }
    std::printf("log-log slope: %.4f\n", sweep.loglog_slope);
  } else if (args.scenario == "constant-scores") {
    const auto results = atmle::scenario_constant_scores(10, args.mc_n, args.seed);
    int idx = 0;
    for (const auto& r : results) {
      print_mc("oracle bias, basis " + std::to_string(++idx), r.combined);
    }
  } else if (args.scenario == "oracle-ladder") {
    const auto rungs = atmle::scenario_oracle_ladder(args.mc_n, args.seed);
    std::printf("%-8s %-12s %-12s %-14s %-10s\n", "weight", "adj_r2", "weighted_mse",
                "oracle_bias", "mc_se");
    for (const auto& r : rungs) {
      std::printf("%-8.2f %-12.4f %-12.4e % -14.4e %-10.2e\n", r.truth_weight,
                  r.adjusted_r2, r.weighted_mse, r.oracle_bias, r.mc_se);
    }
  } else {
    throw atmle::ConfigError(
        "unknown --scenario (expected true-g, true-pi, g-perturb, pi-perturb, "
        "constant-scores, or oracle-ladder)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid trial + external data estimation toolkit"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "Run the replication experiment");
  simulate->add_option("--config", sim.config_path, "JSON config path")->required();
  simulate->add_option("--out", sim.out_dir, "output directory")->required();
  simulate->add_option("--workers", sim.workers, "parallel replicate workers");

  MatchArgs match;
  CLI::App* cmatch = app.add_subcommand("match", "Two-step outcome-blind matching");
  cmatch->add_option("--input", match.input, "pooled cohort CSV")->required();
  cmatch->add_option("--out", match.output, "matched cohort CSV")->required();
  cmatch->add_option("--r", match.r, "trial randomization probability");
  cmatch->add_option("--k", match.k, "externals per trial unit");
  cmatch->add_option("--m", match.m, "controls per external treated unit (0 skips)");
  cmatch->add_option("--target-n", match.target_n, "trim selected externals to this size");
  cmatch->add_option("--policy", match.policy, "trim policy: best_distance|random");
  cmatch->add_option("--scale", match.scale, "matching scale: logit|probability");
  cmatch->add_option("--caliper", match.caliper, "max score distance per match");
  cmatch->add_option("--seed", match.seed, "seed for random trimming");

  EstimateArgs est;
  CLI::App* cest = app.add_subcommand("estimate", "Estimate a treatment effect");
  cest->add_option("--input", est.input, "cohort CSV")->required();
  cest->add_option("--out", est.output, "result JSON path")->required();
  cest->add_option("--estimator", est.estimator, "atmle|tmle-rct|aipw");
  cest->add_option("--r", est.r, "trial randomization probability")->required();
  cest->add_option("--basis", est.basis, "main-terms|hal0");
  cest->add_option("--knots", est.knots, "hal0 knots per covariate");
  cest->add_option("--depth", est.depth, "hal0 interaction depth");
  cest->add_option("--effect-treatment", est.effect_treatment,
                   "treatment terms in the enrollment-effect basis: none|main|interactions");
  cest->add_option("--alpha", est.alpha, "two-sided level");
  cest->add_option("--seed", est.seed, "cross-validation seed");

  DiagnoseArgs diag;
  CLI::App* cdiag = app.add_subcommand("diagnose", "Remainder and oracle-bias checks");
  cdiag->add_option("--scenario", diag.scenario, "scenario name")->required();
  cdiag->add_option("--eps", diag.eps, "perturbation sizes")->delimiter(',');
  cdiag->add_option("--mc-n", diag.mc_n, "Monte Carlo draws");
  cdiag->add_option("--seed", diag.seed, "Monte Carlo seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*simulate) return cmd_simulate(sim);
    if (*cmatch) return cmd_match(match);
    if (*cest) return cmd_estimate(est);
    if (*cdiag) return cmd_diagnose(diag);
  } catch (const atmle::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
