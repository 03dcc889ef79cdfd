#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>

#include "atmle/basis.hpp"
#include "atmle/cohort.hpp"
#include "atmle/solvers.hpp"
#include "atmle/stats.hpp"

namespace atmle {

struct FitOptions {
  int cv_folds = 5;
  int n_lambda = 50;
  double lambda_min_ratio = 1e-4;
  LambdaRule lambda_rule = LambdaRule::one_se;  // projection working models
  std::vector<double> lambda_grid;              // nonempty overrides the auto grid
  uint64_t seed = 1;
};

// Marginal treatment probability and study-membership probability implied by
// the two one-dimensional scores:
//   g(1|W)      = r*q + e*(1-q)
//   Pi(1|W,a)   = P(A=a|S=1)q / (P(A=a|S=1)q + P(A=a|S=0)(1-q))
// with P(A=1|S=1,W) = r and P(A=1|S=0,W) = e.
struct ComposedScores {
  double propensity;                   // g(1|W)
  double enrollment_given_treatment;   // Pi(1|W,a)
};

ComposedScores compose_scores(double q, double e, double r, int a);

// Fitted logistic score with its frozen design, evaluable on new rows.
struct FittedScore {
  DesignInfo design;
  CoefficientFit fit;
  double prob(const Eigen::Ref<const Eigen::RowVectorXd>& w, int a = 0) const {
    return expit(expand_row(design, w, a) * fit.beta);
  }
};

// Fitted linear regression with its frozen design.
struct FittedRegression {
  DesignInfo design;
  CoefficientFit fit;
  double value(const Eigen::Ref<const Eigen::RowVectorXd>& w, int a = 0) const {
    return expand_row(design, w, a) * fit.beta;
  }
};

// Pooled outcome regression theta(W) = E(Y|W) by cross-validated weighted
// lasso with relaxed refit.
FittedRegression fit_theta(const Cohort& cohort, const BasisSpec& basis,
                           const FitOptions& options);

struct NuisanceOptions {
  BasisSpec score_basis = BasisSpec::main_terms();
  BasisSpec outcome_basis = BasisSpec::main_terms();
  FitOptions fit;
  double prob_clip = 0.005;   // fitted scores clipped to [clip, 1-clip]
  int cross_fit_folds = 0;    // 0 = none
  // Oracle hooks: supplied functions pass through verbatim (no clipping).
  std::function<double(const Eigen::RowVectorXd&)> oracle_enrollment;
  std::function<double(const Eigen::RowVectorXd&)> oracle_external_propensity;
  std::function<double(const Eigen::RowVectorXd&)> oracle_outcome_mean;
};

// Per-row nuisance caches for one cohort. The CATE working model is filled
// in by the pooled projection (two-phase construction), after which the
// marginal outcome regression Qbar(W,a) = theta(W) + (a - g(1|W)) tau_A(W)
// becomes available.
struct NuisanceBundle {
  Eigen::VectorXd enrollment;                  // q-hat
  Eigen::VectorXd external_propensity;         // e-hat (identically 0 allowed)
  double randomization_prob = 0.5;
  Eigen::VectorXd propensity;                  // g-hat(1|W_i)
  Eigen::MatrixXd enrollment_given_treatment;  // n x 2, Pi-hat(1|W_i, a)
  Eigen::VectorXd outcome_mean;                // theta-hat(W_i)
  Eigen::VectorXd cate;                        // tau_A-hat(W_i)
  bool has_cate = false;
  bool external_has_treated = false;
  double prob_clip = 0.005;
  std::vector<int> clipped_rows;               // rows where a score hit the clip
  std::optional<FittedScore> enrollment_model;
  std::optional<FittedScore> propensity_model;
  std::optional<FittedRegression> outcome_model;

  double outcome_mean_wa(long i, int a) const {
    if (!has_cate) throw PreconditionError("Qbar requested before the CATE fit");
    return outcome_mean[i] + (double(a) - propensity[i]) * cate[i];
  }
  // Probability as used in a denominator (clip guard).
  double denom(double p) const { return clamp_prob(p, prob_clip, 1.0 - prob_clip); }
};

// Fits q-hat on the pooled rows, e-hat on the external rows (identically 0
// when the external arm has no treated patients), composes g-hat and Pi-hat
// pointwise, and fits theta-hat.
NuisanceBundle build_nuisance_bundle(const Cohort& cohort, const NuisanceOptions& options);

}  // namespace atmle
