#include "atmle/estimators.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "atmle/rng.hpp"

namespace atmle {

Estimate wald_inference(double point, const Eigen::VectorXd& eic, double alpha) {
  if (eic.size() == 0) throw PreconditionError("empty influence vector");
  if (!(alpha > 0.0 && alpha < 1.0)) throw PreconditionError("alpha must lie in (0,1)");
  Estimate e;
  e.point = point;
  e.eic = eic;
  e.n = eic.size();
  e.se = sample_sd(eic) / std::sqrt(double(e.n));
  e.degenerate = e.se == 0.0;
  const double z = normal_quantile(1.0 - alpha / 2.0);
  e.ci_lo = point - z * e.se;
  e.ci_hi = point + z * e.se;
  if (e.degenerate) {
    e.p_value = point == 0.0 ? 1.0 : 0.0;
  } else {
    e.p_value = std::erfc(std::abs(point / e.se) / std::sqrt(2.0));
  }
  return e;
}

namespace {

LassoOptions working_model_options(const FitOptions& fo, uint64_t tag) {
  LassoOptions lo;
  lo.cv_folds = fo.cv_folds;
  lo.n_lambda = fo.n_lambda;
  lo.lambda_min_ratio = fo.lambda_min_ratio;
  lo.lambda_rule = fo.lambda_rule;
  lo.lambda_grid = fo.lambda_grid;
  lo.seed = derive_seed(fo.seed, tag);
  lo.unpenalized = {0};  // working-model intercept
  return lo;
}

// Outcome regressions stay at the plain CV minimum: pruning them only
// inflates the working-model pseudo-response, and for the trial-only
// estimator post-selection noise costs coverage.
LassoOptions outcome_model_options(const FitOptions& fo, uint64_t tag) {
  LassoOptions lo = working_model_options(fo, tag);
  lo.lambda_rule = LambdaRule::cv_min;
  return lo;
}

// Invert the weighted basis Gram matrix restricted to the selected columns,
// with a small ridge jitter; reports the condition number and refuses
// past 1e10.
Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& info, double& cond,
                                const std::string& what) {
  Eigen::MatrixXd jittered = info;
  jittered.diagonal().array() += 1e-10;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jittered);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  cond = (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(lo > 0.0) || cond > 1e10) {
    throw SingularInformationError("singular " + what +
                                   " information matrix (condition number " +
                                   std::to_string(cond) +
                                   "); reduce the working-model basis");
  }
  return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

ProjectionEstimate estimate_pooled_projection(const Cohort& cohort, NuisanceBundle& bundle,
                                              const BasisSpec& basis,
                                              const FitOptions& fit_options, double alpha) {
  const long n = cohort.rows();
  if (bundle.propensity.size() != n || bundle.outcome_mean.size() != n) {
    throw PreconditionError("nuisance bundle does not match the cohort");
  }
  if (basis.treatment != TreatmentTerms::none) {
    throw PreconditionError("the CATE working model is a function of W only");
  }

  Design phi = expand_basis(cohort.covariates, basis);
  const Eigen::VectorXd a_centered =
      cohort.treatment.cast<double>() - bundle.propensity;

  Eigen::MatrixXd design = a_centered.asDiagonal() * phi.X;
  const Eigen::VectorXd pseudo = cohort.outcome - bundle.outcome_mean;

  CoefficientFit fit =
      fit_weighted_lasso(design, pseudo, Eigen::VectorXd(),
                         working_model_options(fit_options, 0x74617541), phi.info.names);

  const Eigen::VectorXd tau = phi.X * fit.beta;
  bundle.cate = tau;
  bundle.has_cate = true;

  const int k = int(fit.selected.size());
  Eigen::MatrixXd phi_sel(n, k);
  for (int j = 0; j < k; ++j) phi_sel.col(j) = phi.X.col(fit.selected[size_t(j)]);

  // I-tilde = E g(1-g) phi phi' on the selected columns
  const Eigen::VectorXd gw =
      bundle.propensity.array() * (1.0 - bundle.propensity.array());
  ProjectionFit proj;
  proj.design = phi.info;
  proj.information = phi_sel.transpose() * gw.asDiagonal() * phi_sel / double(n);
  const Eigen::MatrixXd info_inv =
      checked_inverse(proj.information, proj.condition_number, "CATE");
  proj.basis_means = phi_sel.colwise().mean();
  proj.fit = std::move(fit);

  // score component: D_beta = (A-g) Itilde^{-1} phi (Y - theta - (A-g) tau)
  const Eigen::VectorXd resid = pseudo - a_centered.cwiseProduct(tau);
  const Eigen::VectorXd weights_vec = info_inv * proj.basis_means;  // k
  const Eigen::VectorXd score_part =
      (phi_sel * weights_vec).cwiseProduct(a_centered).cwiseProduct(resid);

  const double plug_in = tau.mean();
  const double point = plug_in + score_part.mean();
  const Eigen::VectorXd eic = tau.array() - point + score_part.array();

  ProjectionEstimate out;
  out.estimate = wald_inference(point, eic, alpha);
  out.fit = std::move(proj);
  return out;
}

ProjectionEstimate estimate_bias_projection(const Cohort& cohort,
                                            const NuisanceBundle& bundle,
                                            const BasisSpec& basis,
                                            const FitOptions& fit_options, double alpha) {
  const long n = cohort.rows();
  if (bundle.propensity.size() != n) {
    throw PreconditionError("nuisance bundle does not match the cohort");
  }

  // Degenerate case Pi(0|.,.) = 0: no external mass, the estimand and its
  // gradient vanish and the working model is left at zero.
  bool no_external_mass = true;
  for (long i = 0; i < n && no_external_mass; ++i) {
    if (bundle.enrollment_given_treatment(i, 0) < 1.0 ||
        bundle.enrollment_given_treatment(i, 1) < 1.0) {
      no_external_mass = false;
    }
  }
  if (no_external_mass) {
    ProjectionEstimate out;
    out.estimate = wald_inference(0.0, Eigen::VectorXd::Zero(n), alpha);
    return out;
  }

  Design phi = expand_basis(cohort.covariates, cohort.treatment, basis);
  const Eigen::MatrixXd phi0 = expand_with_fixed_a(phi.info, cohort.covariates, 0);
  const Eigen::MatrixXd phi1 = expand_with_fixed_a(phi.info, cohort.covariates, 1);

  Eigen::VectorXd pi_obs(n), s_centered(n), pseudo(n);
  for (long i = 0; i < n; ++i) {
    pi_obs[i] = bundle.enrollment_given_treatment(i, cohort.treatment[i]);
    s_centered[i] = double(cohort.study[i]) - pi_obs[i];
    pseudo[i] = cohort.outcome[i] - bundle.outcome_mean_wa(i, cohort.treatment[i]);
  }

  Eigen::MatrixXd design = s_centered.asDiagonal() * phi.X;
  CoefficientFit fit =
      fit_weighted_lasso(design, pseudo, Eigen::VectorXd(),
                         working_model_options(fit_options, 0x74617553), phi.info.names);

  const Eigen::VectorXd tau0 = phi0 * fit.beta;  // tau_S(W, 0)
  const Eigen::VectorXd tau1 = phi1 * fit.beta;  // tau_S(W, 1)
  Eigen::VectorXd tau_obs(n);
  for (long i = 0; i < n; ++i) tau_obs[i] = cohort.treatment[i] ? tau1[i] : tau0[i];

  const int k = int(fit.selected.size());
  Eigen::MatrixXd phi_sel(n, k), phi0_sel(n, k), phi1_sel(n, k);
  for (int j = 0; j < k; ++j) {
    const int c = fit.selected[size_t(j)];
    phi_sel.col(j) = phi.X.col(c);
    phi0_sel.col(j) = phi0.col(c);
    phi1_sel.col(j) = phi1.col(c);
  }

  // I = E Pi(1-Pi) phi phi' at the observed treatment
  const Eigen::VectorXd pw = pi_obs.array() * (1.0 - pi_obs.array());
  ProjectionFit proj;
  proj.design = phi.info;
  proj.information = phi_sel.transpose() * pw.asDiagonal() * phi_sel / double(n);
  const Eigen::MatrixXd info_inv =
      checked_inverse(proj.information, proj.condition_number, "enrollment-effect");

  // prefactor means: E[Pi(0|W,0)phi_j(W,0) - Pi(0|W,1)phi_j(W,1)]
  const Eigen::VectorXd pi0_at0 =
      1.0 - bundle.enrollment_given_treatment.col(0).array();
  const Eigen::VectorXd pi0_at1 =
      1.0 - bundle.enrollment_given_treatment.col(1).array();
  proj.basis_means =
      ((pi0_at0.asDiagonal() * phi0_sel) - (pi0_at1.asDiagonal() * phi1_sel))
          .colwise()
          .mean();
  proj.fit = std::move(fit);

  // plug-in and the three EIC components
  const Eigen::VectorXd pw_part =
      pi0_at0.cwiseProduct(tau0) - pi0_at1.cwiseProduct(tau1);
  const double plug_in = pw_part.mean();

  Eigen::VectorXd pi_part(n);
  for (long i = 0; i < n; ++i) {
    const double g = bundle.propensity[i];
    const double h = cohort.treatment[i]
                         ? tau1[i] / bundle.denom(g)
                         : -tau0[i] / bundle.denom(1.0 - g);
    pi_part[i] = h * s_centered[i];
  }

  const Eigen::VectorXd resid = pseudo - s_centered.cwiseProduct(tau_obs);
  const Eigen::VectorXd weights_vec = info_inv * proj.basis_means;
  const Eigen::VectorXd score_part =
      (phi_sel * weights_vec).cwiseProduct(s_centered).cwiseProduct(resid);

  const double point = plug_in + pi_part.mean() + score_part.mean();
  const Eigen::VectorXd eic = pw_part.array() - point + pi_part.array() + score_part.array();

  ProjectionEstimate out;
  out.estimate = wald_inference(point, eic, alpha);
  out.fit = std::move(proj);
  return out;
}

ATMLEResult estimate_atmle(const Cohort& cohort, const EstimatorOptions& options) {
  const auto [trial_rows, external_rows] = split_by_study(cohort);
  if (trial_rows.empty()) {
    throw PreconditionError("data-integration estimate requires trial rows");
  }
  if (external_rows.empty() && !options.oracle_enrollment) {
    throw PreconditionError(
        "external group required: the bias projection is undefined on trial-only data");
  }

  NuisanceBundle bundle = build_nuisance_bundle(cohort, options.nuisance_options());

  ATMLEResult result;
  result.pooled = estimate_pooled_projection(cohort, bundle, options.cate_basis,
                                             options.fit, options.alpha);
  result.bias = estimate_bias_projection(cohort, bundle, options.effect_basis,
                                         options.fit, options.alpha);
  const double point = result.pooled.estimate.point - result.bias.estimate.point;
  const Eigen::VectorXd eic = result.pooled.estimate.eic - result.bias.estimate.eic;
  result.combined = wald_inference(point, eic, options.alpha);
  result.propensity_min = bundle.propensity.minCoeff();
  result.propensity_max = bundle.propensity.maxCoeff();
  result.clipped_rows = long(bundle.clipped_rows.size());
  result.bundle = std::move(bundle);
  return result;
}

Estimate estimate_tmle_rct(const Cohort& rct, const BasisSpec& qbar_basis,
                           const FitOptions& fit_options, double alpha) {
  const long n = rct.rows();
  if ((rct.study.array() != 1).any()) {
    throw PreconditionError("trial-only estimator received external rows");
  }
  const long treated = rct.treatment.sum();
  if (treated == 0 || treated == n) {
    throw PreconditionError("trial-only estimator requires both treatment arms");
  }
  const double r = rct.randomization_prob;

  Design phi = expand_basis(rct.covariates, rct.treatment, qbar_basis);
  CoefficientFit fit =
      fit_weighted_lasso(phi.X, rct.outcome, Eigen::VectorXd(),
                         outcome_model_options(fit_options, 0x71626172), phi.info.names);
  const Eigen::VectorXd q_obs = phi.X * fit.beta;
  const Eigen::VectorXd q0 = expand_with_fixed_a(phi.info, rct.covariates, 0) * fit.beta;
  const Eigen::VectorXd q1 = expand_with_fixed_a(phi.info, rct.covariates, 1) * fit.beta;

  Eigen::VectorXd resid_part(n);
  for (long i = 0; i < n; ++i) {
    const double h = rct.treatment[i] ? 1.0 / r : -1.0 / (1.0 - r);
    resid_part[i] = h * (rct.outcome[i] - q_obs[i]);
  }
  const double plug_in = (q1 - q0).mean();
  const double point = plug_in + resid_part.mean();
  const Eigen::VectorXd eic = (q1 - q0).array() - point + resid_part.array();
  return wald_inference(point, eic, alpha);
}

Estimate estimate_aipw_values(const Cohort& cohort, const Eigen::VectorXd& qbar_at0,
                              const Eigen::VectorXd& qbar_at1,
                              const Eigen::VectorXd& propensity, double alpha,
                              double prob_clip) {
  const long n = cohort.rows();
  if (qbar_at0.size() != n || qbar_at1.size() != n || propensity.size() != n) {
    throw PreconditionError("AIPW inputs do not match the cohort");
  }
  Eigen::VectorXd values(n);
  for (long i = 0; i < n; ++i) {
    const double p = propensity[i];
    if (!(p >= prob_clip && p <= 1.0 - prob_clip)) {
      throw PositivityError("fitted propensity " + std::to_string(p) + " at row " +
                            std::to_string(i) + " lies outside the clipped range [" +
                            std::to_string(prob_clip) + ", " +
                            std::to_string(1.0 - prob_clip) + "]");
    }
    const double qa = cohort.treatment[i] ? qbar_at1[i] : qbar_at0[i];
    const double h = cohort.treatment[i] ? 1.0 / p : -1.0 / (1.0 - p);
    values[i] = qbar_at1[i] - qbar_at0[i] + h * (cohort.outcome[i] - qa);
  }
  const double point = values.mean();
  const Eigen::VectorXd eic = values.array() - point;
  return wald_inference(point, eic, alpha);
}

Estimate estimate_aipw(const Cohort& cohort, const EstimatorOptions& options) {
  const long n = cohort.rows();
  const auto [trial_rows, external_rows] = split_by_study(cohort);

  Design phi = expand_basis(cohort.covariates, cohort.treatment, options.qbar_basis);
  CoefficientFit fit =
      fit_weighted_lasso(phi.X, cohort.outcome, Eigen::VectorXd(),
                         outcome_model_options(options.fit, 0x61697077), phi.info.names);
  const Eigen::VectorXd q0 = expand_with_fixed_a(phi.info, cohort.covariates, 0) * fit.beta;
  const Eigen::VectorXd q1 = expand_with_fixed_a(phi.info, cohort.covariates, 1) * fit.beta;

  Eigen::VectorXd p(n);
  if (external_rows.empty()) {
    p.setConstant(cohort.randomization_prob);
  } else {
    NuisanceOptions no = options.nuisance_options();
    NuisanceBundle bundle = build_nuisance_bundle(cohort, no);
    p = bundle.propensity.cwiseMax(options.prob_clip).cwiseMin(1.0 - options.prob_clip);
  }
  return estimate_aipw_values(cohort, q0, q1, p, options.alpha, options.prob_clip);
}

}  // namespace atmle
