#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <vector>

#include "atmle/balance.hpp"
#include "atmle/basis.hpp"
#include "atmle/nuisance.hpp"
#include "atmle/rng.hpp"

namespace atmle {

// A fully known data-generating truth used by the Monte Carlo evaluators.
// Qbar0(W,a) is derived from the identity theta + (a - g) tau_A.
struct TruthSpec {
  std::function<double(const Eigen::RowVectorXd&)> enrollment;            // q0
  std::function<double(const Eigen::RowVectorXd&)> external_propensity;   // e0
  std::function<double(const Eigen::RowVectorXd&)> outcome_mean;          // theta0
  std::function<double(const Eigen::RowVectorXd&)> cate;                  // tau_A0
  std::function<double(const Eigen::RowVectorXd&, int)> enrollment_effect;  // tau_S0
  std::function<Eigen::RowVectorXd(Rng&)> sampler;
  double randomization_prob = 0.5;
  int dim = 3;

  double propensity(const Eigen::RowVectorXd& w) const {
    return compose_scores(enrollment(w), external_propensity(w), randomization_prob, 1)
        .propensity;
  }
  double enrollment_given_treatment(const Eigen::RowVectorXd& w, int a) const {
    return compose_scores(enrollment(w), external_propensity(w), randomization_prob, a)
        .enrollment_given_treatment;
  }
  double outcome_mean_wa(const Eigen::RowVectorXd& w, int a) const {
    return outcome_mean(w) + (double(a) - propensity(w)) * cate(w);
  }
};

// Working-model basis as plain callables, so diagnostics can use bases
// richer than the expansion schemes (random polynomials, deformed bases).
struct FunctionBasis {
  int size = 0;
  std::function<Eigen::VectorXd(const Eigen::RowVectorXd&, int)> eval;
  static FunctionBasis from_design(const DesignInfo& info);
};

struct McValue {
  double value = 0.0;
  double se = 0.0;
  long n = 0;
  long clip_events = 0;  // score hit a denominator guard during evaluation
};

// Population projection coefficients of the true effects onto a working
// basis: weights g0(1-g0) for the CATE model and Pi0(1-Pi0) for the
// enrollment-effect model.
Eigen::VectorXd project_cate_truth(const TruthSpec& truth, const FunctionBasis& basis,
                                   long mc_n, uint64_t seed);
Eigen::VectorXd project_effect_truth(const TruthSpec& truth, const FunctionBasis& basis,
                                     long mc_n, uint64_t seed);

// The "P side" fed to the remainder evaluators; null members fall back to
// the corresponding truth component (and a missing beta to the population
// projection), which makes "all true" and single-component perturbations
// easy to express.
struct PooledModel {
  std::function<double(const Eigen::RowVectorXd&)> propensity;    // g_P
  std::function<double(const Eigen::RowVectorXd&)> outcome_mean;  // theta_P
  std::optional<Eigen::VectorXd> beta;                            // tau_{A,beta_P}
};

struct BiasModel {
  std::function<double(const Eigen::RowVectorXd&)> propensity;  // g_P
  std::function<double(const Eigen::RowVectorXd&, int)> enrollment_given_treatment;
  std::function<double(const Eigen::RowVectorXd&, int)> outcome_mean_wa;  // Qbar_P
  std::optional<Eigen::VectorXd> beta;                                    // tau_{S,beta_P}
};

// Monte Carlo evaluation of the exact second-order remainder of the
// pooled-ATE projection estimand at (P, P0). Identically zero when the
// model propensity equals the truth.
McValue exact_remainder_pooled(const PooledModel& model, const TruthSpec& truth,
                               const FunctionBasis& basis, long mc_n, uint64_t seed);

// Monte Carlo evaluation of the exact remainder of the bias projection
// estimand. Identically zero when both composed scores equal the truth.
McValue exact_remainder_bias(const BiasModel& model, const TruthSpec& truth,
                             const FunctionBasis& basis, long mc_n, uint64_t seed);

struct OracleBias {
  McValue pooled;     // E[tau_{A,beta0} - tau_A0]
  McValue bias_part;  // E[Pi0(0|W,0) dS(W,0) - Pi0(0|W,1) dS(W,1)]
  McValue combined;   // pooled - bias_part
  double cate_weighted_mse = 0.0;
  double effect_weighted_mse = 0.0;
  double cate_weighted_var = 0.0;
  double effect_weighted_var = 0.0;
};

// Difference between the projection estimand (at the population projection
// beta0) and the nonparametrically defined estimand.
OracleBias oracle_bias_mc(const TruthSpec& truth, const FunctionBasis& cate_basis,
                          const FunctionBasis& effect_basis, long mc_n, uint64_t seed);

// Built-in smooth truth on W ~ N(0, I3); with constant_scores the two
// composed scores do not depend on W.
TruthSpec make_synthetic_truth(bool constant_scores);

// Scenario drivers shared by the CLI and the verification suite.
McValue scenario_true_g(long mc_n, uint64_t seed);
McValue scenario_true_pi(long mc_n, uint64_t seed);

struct PerturbationPoint {
  double eps = 0.0;
  McValue remainder;
};
struct PerturbationSweep {
  std::vector<PerturbationPoint> points;
  double loglog_slope = 0.0;
};
PerturbationSweep scenario_g_perturb(const std::vector<double>& eps, long mc_n,
                                     uint64_t seed);
PerturbationSweep scenario_pi_perturb(const std::vector<double>& eps, long mc_n,
                                      uint64_t seed);

// Default perturbation grids. The score-membership side uses smaller sizes:
// its leading quadratic coefficient itself moves with eps, so the clean
// quadratic regime sits at finer perturbations.
std::vector<double> default_g_perturb_eps();
std::vector<double> default_pi_perturb_eps();

// Theorem check under constant scores: oracle bias across random
// intercept-containing bases (the enrollment-effect bases always carry the
// per-arm constants {1, A}).
std::vector<OracleBias> scenario_constant_scores(int n_bases, long mc_n, uint64_t seed);

struct LadderRung {
  double truth_weight = 0.0;    // weight of the basis-omitted direction in the truth
  double adjusted_r2 = 0.0;     // 1 - wMSE / wVar
  double weighted_mse = 0.0;
  double oracle_bias = 0.0;     // combined
  double mc_se = 0.0;
};
// Misspecification ladder: the enrollment-effect basis omits W3 while the
// true W3 weight grows rung by rung (common random numbers across rungs).
std::vector<LadderRung> scenario_oracle_ladder(long mc_n, uint64_t seed);

double loglog_slope(const std::vector<PerturbationPoint>& points);

}  // namespace atmle
