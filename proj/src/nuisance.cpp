#include "atmle/nuisance.hpp"

#include <numeric>

#include "atmle/rng.hpp"

namespace atmle {

ComposedScores compose_scores(double q, double e, double r, int a) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw PreconditionError("enrollment score must lie in (0,1], got " + std::to_string(q));
  }
  if (!(e >= 0.0 && e < 1.0)) {
    throw PreconditionError("external propensity must lie in [0,1), got " +
                            std::to_string(e));
  }
  if (!(r > 0.0 && r < 1.0)) {
    throw PreconditionError("randomization probability must lie in (0,1), got " +
                            std::to_string(r));
  }
  if (a != 0 && a != 1) throw PreconditionError("treatment level must be 0/1");

  const double trial_arm = a == 1 ? r : 1.0 - r;    // P(A=a|S=1,W)
  const double external_arm = a == 1 ? e : 1.0 - e; // P(A=a|S=0,W)
  const double num = trial_arm * q;
  const double den = trial_arm * q + external_arm * (1.0 - q);
  if (!(den > 0.0) || !std::isfinite(den)) {
    throw PositivityError("no one in the pooled population has A=" + std::to_string(a) +
                          " at this covariate value (q=" + std::to_string(q) +
                          ", e=" + std::to_string(e) + ")");
  }
  return {r * q + e * (1.0 - q), num / den};
}

FittedRegression fit_theta(const Cohort& cohort, const BasisSpec& basis,
                           const FitOptions& options) {
  Design design = expand_basis(cohort.covariates, basis);
  if (cohort.rows() < design.info.cols()) {
    throw PreconditionError("theta regression needs at least as many rows as columns (" +
                            std::to_string(cohort.rows()) + " < " +
                            std::to_string(design.info.cols()) + ")");
  }
  LassoOptions lo;
  lo.cv_folds = options.cv_folds;
  lo.n_lambda = options.n_lambda;
  lo.lambda_min_ratio = options.lambda_min_ratio;
  lo.lambda_rule = LambdaRule::cv_min;  // dense outcome regression
  lo.lambda_grid = options.lambda_grid;
  lo.seed = derive_seed(options.seed, 0x7468);
  CoefficientFit fit = fit_weighted_lasso(design.X, cohort.outcome, Eigen::VectorXd(), lo,
                                          design.info.names);
  return {design.info, std::move(fit)};
}

namespace {

std::vector<int> fold_assignment(long n, int folds, uint64_t seed) {
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> fold(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) fold[size_t(order[size_t(i)])] = int(i % folds);
  return fold;
}

FittedScore fit_score(const Eigen::MatrixXd& W, const Eigen::VectorXd& label,
                      const BasisSpec& basis, const Eigen::VectorXd& weights) {
  Design design = expand_basis(W, basis);
  CoefficientFit fit = fit_logistic(design.X, label, weights, design.info.names);
  return {design.info, std::move(fit)};
}

}  // namespace

NuisanceBundle build_nuisance_bundle(const Cohort& cohort, const NuisanceOptions& options) {
  const long n = cohort.rows();
  NuisanceBundle b;
  b.randomization_prob = cohort.randomization_prob;
  b.prob_clip = options.prob_clip;
  b.enrollment.resize(n);
  b.external_propensity.resize(n);
  b.propensity.resize(n);
  b.enrollment_given_treatment.resize(n, 2);
  b.outcome_mean.resize(n);

  const auto [trial_rows, external_rows] = split_by_study(cohort);
  b.external_has_treated = false;
  for (int i : external_rows) {
    if (cohort.treatment[i] == 1) b.external_has_treated = true;
  }

  const double lo = options.prob_clip, hi = 1.0 - options.prob_clip;
  const Eigen::VectorXd study = cohort.study.cast<double>();
  const Eigen::VectorXd treatment = cohort.treatment.cast<double>();

  // --- q-hat ---
  if (options.oracle_enrollment) {
    for (long i = 0; i < n; ++i) {
      b.enrollment[i] = options.oracle_enrollment(cohort.covariates.row(i));
    }
  } else {
    if (trial_rows.empty() || external_rows.empty()) {
      throw PreconditionError(
          "both study groups are required to fit the enrollment score");
    }
    if (options.cross_fit_folds >= 2) {
      const auto fold =
          fold_assignment(n, options.cross_fit_folds, derive_seed(options.fit.seed, 0xcf01));
      for (int f = 0; f < options.cross_fit_folds; ++f) {
        Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
        for (long i = 0; i < n; ++i) {
          if (fold[size_t(i)] == f) w[i] = 0.0;
        }
        FittedScore model = fit_score(cohort.covariates, study, options.score_basis, w);
        for (long i = 0; i < n; ++i) {
          if (fold[size_t(i)] == f) {
            b.enrollment[i] = model.prob(cohort.covariates.row(i));
          }
        }
      }
      b.enrollment_model =
          fit_score(cohort.covariates, study, options.score_basis, Eigen::VectorXd());
    } else {
      b.enrollment_model =
          fit_score(cohort.covariates, study, options.score_basis, Eigen::VectorXd());
      for (long i = 0; i < n; ++i) {
        b.enrollment[i] = b.enrollment_model->prob(cohort.covariates.row(i));
      }
    }
    for (long i = 0; i < n; ++i) {
      const double clipped = clamp_prob(b.enrollment[i], lo, hi);
      if (clipped != b.enrollment[i]) b.clipped_rows.push_back(int(i));
      b.enrollment[i] = clipped;
    }
  }

  // --- e-hat ---
  if (options.oracle_external_propensity) {
    for (long i = 0; i < n; ++i) {
      b.external_propensity[i] = options.oracle_external_propensity(cohort.covariates.row(i));
    }
    b.external_has_treated = (b.external_propensity.array() > 0).any();
  } else if (!b.external_has_treated) {
    b.external_propensity.setZero();  // external controls only
  } else {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    for (int i : external_rows) w[i] = 1.0;
    b.propensity_model = fit_score(cohort.covariates, treatment, options.score_basis, w);
    if (options.cross_fit_folds >= 2) {
      const auto fold =
          fold_assignment(n, options.cross_fit_folds, derive_seed(options.fit.seed, 0xcf02));
      for (int f = 0; f < options.cross_fit_folds; ++f) {
        Eigen::VectorXd wf = w;
        for (long i = 0; i < n; ++i) {
          if (fold[size_t(i)] == f) wf[i] = 0.0;
        }
        bool treated_in_train = false;
        for (int i : external_rows) {
          if (fold[size_t(i)] != f && cohort.treatment[i] == 1) treated_in_train = true;
        }
        const FittedScore model =
            treated_in_train ? fit_score(cohort.covariates, treatment, options.score_basis, wf)
                             : *b.propensity_model;
        for (long i = 0; i < n; ++i) {
          if (fold[size_t(i)] == f) {
            b.external_propensity[i] = model.prob(cohort.covariates.row(i));
          }
        }
      }
    } else {
      for (long i = 0; i < n; ++i) {
        b.external_propensity[i] = b.propensity_model->prob(cohort.covariates.row(i));
      }
    }
    for (long i = 0; i < n; ++i) {
      const double clipped = clamp_prob(b.external_propensity[i], lo, hi);
      if (clipped != b.external_propensity[i]) b.clipped_rows.push_back(int(i));
      b.external_propensity[i] = clipped;
    }
  }

  // --- compose g-hat and Pi-hat pointwise ---
  for (long i = 0; i < n; ++i) {
    try {
      const auto s0 = compose_scores(b.enrollment[i], b.external_propensity[i],
                                     b.randomization_prob, 0);
      const auto s1 = compose_scores(b.enrollment[i], b.external_propensity[i],
                                     b.randomization_prob, 1);
      b.propensity[i] = s1.propensity;
      b.enrollment_given_treatment(i, 0) = s0.enrollment_given_treatment;
      b.enrollment_given_treatment(i, 1) = s1.enrollment_given_treatment;
    } catch (const PositivityError& err) {
      throw PositivityError(std::string(err.what()) + " (row " + std::to_string(i) + ")");
    }
  }

  // --- theta-hat ---
  if (options.oracle_outcome_mean) {
    for (long i = 0; i < n; ++i) {
      b.outcome_mean[i] = options.oracle_outcome_mean(cohort.covariates.row(i));
    }
  } else if (options.cross_fit_folds >= 2) {
    const auto fold =
        fold_assignment(n, options.cross_fit_folds, derive_seed(options.fit.seed, 0xcf03));
    Design design = expand_basis(cohort.covariates, options.outcome_basis);
    for (int f = 0; f < options.cross_fit_folds; ++f) {
      Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
      for (long i = 0; i < n; ++i) {
        if (fold[size_t(i)] == f) w[i] = 0.0;
      }
      LassoOptions fit_opts;
      fit_opts.cv_folds = options.fit.cv_folds;
      fit_opts.n_lambda = options.fit.n_lambda;
      fit_opts.lambda_min_ratio = options.fit.lambda_min_ratio;
      fit_opts.lambda_rule = LambdaRule::cv_min;
      fit_opts.seed = derive_seed(options.fit.seed, 0x7468 + uint64_t(f));
      CoefficientFit fit =
          fit_weighted_lasso(design.X, cohort.outcome, w, fit_opts, design.info.names);
      for (long i = 0; i < n; ++i) {
        if (fold[size_t(i)] == f) b.outcome_mean[i] = design.X.row(i) * fit.beta;
      }
    }
    b.outcome_model = fit_theta(cohort, options.outcome_basis, options.fit);
  } else {
    b.outcome_model = fit_theta(cohort, options.outcome_basis, options.fit);
    const Eigen::MatrixXd X =
        expand_with(b.outcome_model->design, cohort.covariates, Eigen::VectorXi());
    b.outcome_mean = X * b.outcome_model->fit.beta;
  }

  return b;
}

}  // namespace atmle
