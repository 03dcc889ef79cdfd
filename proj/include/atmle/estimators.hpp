#pragma once

#include <Eigen/Core>

#include "atmle/cohort.hpp"
#include "atmle/nuisance.hpp"

namespace atmle {

// Point estimate with influence-curve based Wald inference.
struct Estimate {
  double point = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p_value = 1.0;
  Eigen::VectorXd eic;
  long n = 0;
  bool degenerate = false;  // zero-variance influence values
};

// se = sample_sd(eic)/sqrt(n); CI = point +- z_{1-alpha/2} se; two-sided
// p-value against 0.
Estimate wald_inference(double point, const Eigen::VectorXd& eic, double alpha = 0.05);

// A fitted working-model projection: coefficients after the relaxed refit,
// the per-row working-model values, the information matrix on the selected
// columns, and the basis means entering the score component of the EIC.
struct ProjectionFit {
  DesignInfo design;
  CoefficientFit fit;
  Eigen::VectorXd basis_means;   // pooled: mean phi_j; bias: mean Pi(0|.,0)phi_j(.,0)-Pi(0|.,1)phi_j(.,1)
  Eigen::MatrixXd information;   // I-tilde or I on selected columns (jittered)
  double condition_number = 0.0;
};

struct ProjectionEstimate {
  Estimate estimate;
  ProjectionFit fit;
};

struct EstimatorOptions {
  BasisSpec score_basis = BasisSpec::main_terms();
  BasisSpec outcome_basis = BasisSpec::main_terms();
  BasisSpec cate_basis = BasisSpec::main_terms();
  BasisSpec effect_basis = BasisSpec::main_terms(TreatmentTerms::main_effect);
  BasisSpec qbar_basis = BasisSpec::main_terms(TreatmentTerms::interactions);
  FitOptions fit;
  double prob_clip = 0.005;
  int cross_fit_folds = 0;
  double alpha = 0.05;
  std::function<double(const Eigen::RowVectorXd&)> oracle_enrollment;
  std::function<double(const Eigen::RowVectorXd&)> oracle_external_propensity;
  std::function<double(const Eigen::RowVectorXd&)> oracle_outcome_mean;

  NuisanceOptions nuisance_options() const {
    NuisanceOptions n;
    n.score_basis = score_basis;
    n.outcome_basis = outcome_basis;
    n.fit = fit;
    n.prob_clip = prob_clip;
    n.cross_fit_folds = cross_fit_folds;
    n.oracle_enrollment = oracle_enrollment;
    n.oracle_external_propensity = oracle_external_propensity;
    n.oracle_outcome_mean = oracle_outcome_mean;
    return n;
  }
};

// Pooled-ATE projection: fits the CATE working model by the R-loss
// (pseudo-response Y - theta on columns (A - g)phi(W), relaxed refit),
// then one-step corrects the plug-in mean of tau_A and reports Wald
// inference from the corrected EIC. Writes the fitted CATE into the bundle.
ProjectionEstimate estimate_pooled_projection(const Cohort& cohort, NuisanceBundle& bundle,
                                              const BasisSpec& basis,
                                              const FitOptions& fit_options,
                                              double alpha = 0.05);

// Bias projection: fits the enrollment-effect working model by the R-loss
// (pseudo-response Y - Qbar on columns (S - Pi)phi(W,A)), evaluates the
// plug-in mean of Pi(0|W,0)tau_S(W,0) - Pi(0|W,1)tau_S(W,1), and one-step
// corrects with the Pi-residual and score components of the EIC.
ProjectionEstimate estimate_bias_projection(const Cohort& cohort,
                                            const NuisanceBundle& bundle,
                                            const BasisSpec& basis,
                                            const FitOptions& fit_options,
                                            double alpha = 0.05);

struct ATMLEResult {
  ProjectionEstimate pooled;
  ProjectionEstimate bias;
  Estimate combined;  // point = pooled - bias, EIC differenced rowwise
  NuisanceBundle bundle;
  double propensity_min = 0.0, propensity_max = 0.0;
  long clipped_rows = 0;
};

// Full data-integration estimate: pooled-ATE projection minus bias
// projection with differenced EIC.
ATMLEResult estimate_atmle(const Cohort& cohort, const EstimatorOptions& options = {});

// ATE from trial data alone with the known randomization probability.
Estimate estimate_tmle_rct(const Cohort& rct, const BasisSpec& qbar_basis,
                           const FitOptions& fit_options, double alpha = 0.05);

// Augmented inverse probability weighting from explicit per-row regression
// and propensity values.
Estimate estimate_aipw_values(const Cohort& cohort, const Eigen::VectorXd& qbar_at0,
                              const Eigen::VectorXd& qbar_at1,
                              const Eigen::VectorXd& propensity, double alpha = 0.05,
                              double prob_clip = 0.005);

// Convenience AIPW: fits the outcome regression by lasso on phi(W,A) and the
// propensity from the known randomization probability (trial rows) composed
// with a fitted external propensity when external rows are present.
Estimate estimate_aipw(const Cohort& cohort, const EstimatorOptions& options = {});

}  // namespace atmle
