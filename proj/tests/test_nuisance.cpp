#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "atmle/nuisance.hpp"
#include "atmle/rng.hpp"
#include "atmle/simulation.hpp"

using namespace atmle;

TEST_CASE("score composition: no external data") {
  const auto s0 = compose_scores(1.0, 0.0, 0.3, 0);
  const auto s1 = compose_scores(1.0, 0.0, 0.3, 1);
  CHECK(s1.propensity == doctest::Approx(0.3));
  CHECK(s0.enrollment_given_treatment == doctest::Approx(1.0));
  CHECK(s1.enrollment_given_treatment == doctest::Approx(1.0));
}

TEST_CASE("score composition: external controls only, arithmetic case") {
  // q=0.5, r=0.5, e=0
  const auto s0 = compose_scores(0.5, 0.0, 0.5, 0);
  const auto s1 = compose_scores(0.5, 0.0, 0.5, 1);
  CHECK(s0.propensity == doctest::Approx(0.25));
  CHECK(s0.enrollment_given_treatment == doctest::Approx(1.0 / 3.0));
  CHECK(s1.enrollment_given_treatment == doctest::Approx(1.0));
}

TEST_CASE("score composition: constant-score design target") {
  // q=1/31, r=e=0.5: the 1:(k=30) matched design
  const auto s0 = compose_scores(1.0 / 31.0, 0.5, 0.5, 0);
  const auto s1 = compose_scores(1.0 / 31.0, 0.5, 0.5, 1);
  CHECK(s1.propensity == doctest::Approx(0.5));
  CHECK(s0.enrollment_given_treatment == doctest::Approx(1.0 / 31.0));
  CHECK(s1.enrollment_given_treatment == doctest::Approx(1.0 / 31.0));
}

TEST_CASE("external-controls identity: g = r q, and g = q/2 at r = 1/2") {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const double q = 0.05 + 0.9 * rng.uniform();
    const auto s1 = compose_scores(q, 0.0, 0.5, 1);
    CHECK(s1.propensity == doctest::Approx(0.5 * q).epsilon(1e-15));
    CHECK(s1.enrollment_given_treatment == doctest::Approx(1.0));
    const double r = 0.1 + 0.8 * rng.uniform();
    CHECK(compose_scores(q, 0.0, r, 1).propensity == doctest::Approx(r * q).epsilon(1e-15));
  }
}

TEST_CASE("score composition rejects invalid inputs") {
  CHECK_THROWS_AS(compose_scores(0.0, 0.2, 0.5, 1), PreconditionError);
  CHECK_THROWS_AS(compose_scores(0.5, 1.0, 0.5, 1), PreconditionError);
  CHECK_THROWS_AS(compose_scores(0.5, 0.2, 1.0, 1), PreconditionError);
  CHECK_THROWS_AS(compose_scores(std::nan(""), 0.2, 0.5, 1), PreconditionError);
}

namespace {

Cohort tiny_pooled_cohort(long n, uint64_t seed, double treat_prob = 0.5) {
  Rng rng(seed);
  Cohort c;
  c.study.resize(n);
  c.covariates.resize(n, 2);
  c.treatment.resize(n);
  c.outcome.resize(n);
  c.randomization_prob = 0.5;
  for (long i = 0; i < n; ++i) {
    c.study[i] = rng.bernoulli(0.4);
    c.covariates(i, 0) = rng.normal();
    c.covariates(i, 1) = rng.normal();
    c.treatment[i] = rng.bernoulli(treat_prob);
    c.outcome[i] = 1.0 + 0.5 * c.treatment[i];
  }
  return validate_cohort(std::move(c));
}

}  // namespace

TEST_CASE("theta fit on a constant outcome is the constant") {
  Cohort c = tiny_pooled_cohort(50, 2);
  c.outcome.setConstant(3.25);
  const FittedRegression theta = fit_theta(c, BasisSpec::main_terms(), FitOptions{});
  for (long i = 0; i < c.rows(); ++i) {
    CHECK(theta.value(c.covariates.row(i)) == doctest::Approx(3.25).epsilon(1e-10));
  }
}

TEST_CASE("theta marginalizes treatment out: Y = 1 + A/2 independent of W") {
  const long n = 100000;
  const Cohort c = tiny_pooled_cohort(n, 11);
  FitOptions fo;
  // unpenalized least squares per the stated example
  Design d = expand_basis(c.covariates, BasisSpec::main_terms());
  LassoOptions lo;
  lo.lambda_grid = {0.0};
  const CoefficientFit fit = fit_weighted_lasso(d.X, c.outcome, Eigen::VectorXd(), lo);
  // E(Y|W) = 1.25; three MC standard errors of the mean
  const double mc_se = 0.25 / std::sqrt(double(n));
  Rng rng(12);
  for (int t = 0; t < 5; ++t) {
    Eigen::RowVectorXd w(2);
    w << rng.normal(), rng.normal();
    const double pred = expand_row(d.info, w, 0) * fit.beta;
    CHECK(std::abs(pred - 1.25) <= 3.0 * mc_se * 4.0);
  }
}

TEST_CASE("theta on the synthetic pooled generator has out-of-sample R2 above 0.5") {
  DGPConfig dgp;
  dgp.n_rct = 400;
  dgp.source_sizes = {400, 400, 400, 400, 400};
  dgp.seed = 99;
  const Cohort pool = generate_pool(dgp);
  // manual 5-fold CV of fit_theta predictions
  const long n = pool.rows();
  Eigen::VectorXd pred(n);
  for (int f = 0; f < 5; ++f) {
    std::vector<int> train, test;
    for (long i = 0; i < n; ++i) ((i % 5 == f) ? test : train).push_back(int(i));
    const FittedRegression theta =
        fit_theta(subset_cohort(pool, train), BasisSpec::main_terms(), FitOptions{});
    for (int i : test) pred[i] = theta.value(pool.covariates.row(i));
  }
  const double sst = (pool.outcome.array() - pool.outcome.mean()).square().sum();
  const double sse = (pool.outcome - pred).squaredNorm();
  CHECK(1.0 - sse / sst > 0.5);
}

TEST_CASE("oracle bundle passes user scores through verbatim") {
  const Cohort c = tiny_pooled_cohort(40, 21);
  NuisanceOptions opts;
  opts.oracle_enrollment = [](const Eigen::RowVectorXd& w) {
    return expit(0.3 * w[0]);
  };
  opts.oracle_external_propensity = [](const Eigen::RowVectorXd&) { return 0.25; };
  opts.oracle_outcome_mean = [](const Eigen::RowVectorXd& w) { return 2.0 + w[1]; };
  const NuisanceBundle b = build_nuisance_bundle(c, opts);
  for (long i = 0; i < c.rows(); ++i) {
    CHECK(b.enrollment[i] == expit(0.3 * c.covariates(i, 0)));
    CHECK(b.external_propensity[i] == 0.25);
    CHECK(b.outcome_mean[i] == 2.0 + c.covariates(i, 1));
    const auto composed =
        compose_scores(b.enrollment[i], 0.25, c.randomization_prob, 1);
    CHECK(b.propensity[i] == composed.propensity);
  }
}

TEST_CASE("external-controls-only cohort: e identically zero, Pi(1|W,1)=1") {
  Rng rng(31);
  Cohort c;
  const long n = 300;
  c.study.resize(n);
  c.covariates.resize(n, 2);
  c.treatment.resize(n);
  c.outcome.resize(n);
  c.randomization_prob = 0.5;
  for (long i = 0; i < n; ++i) {
    c.study[i] = rng.bernoulli(0.5);
    c.covariates(i, 0) = rng.normal();
    c.covariates(i, 1) = rng.normal();
    c.treatment[i] = c.study[i] == 1 ? rng.bernoulli(0.5) : 0;  // no treated externals
    c.outcome[i] = rng.normal();
  }
  const NuisanceBundle b = build_nuisance_bundle(validate_cohort(std::move(c)), {});
  CHECK(!b.external_has_treated);
  CHECK(b.external_propensity.isZero());
  CHECK((b.enrollment_given_treatment.col(1).array() == 1.0).all());
  // g = r q exactly
  for (long i = 0; i < b.propensity.size(); ++i) {
    CHECK(b.propensity[i] == doctest::Approx(0.5 * b.enrollment[i]).epsilon(1e-14));
  }
}

TEST_CASE("bundle on the synthetic pool keeps the propensity interior") {
  DGPConfig dgp;
  dgp.n_rct = 400;
  dgp.source_sizes = {920, 920, 920, 920, 920};
  dgp.seed = 5150;
  const Cohort pool = generate_pool(dgp);
  const NuisanceBundle b = build_nuisance_bundle(pool, {});
  CHECK(b.propensity.minCoeff() > 0.01);
  CHECK(b.propensity.maxCoeff() < 0.99);
}

TEST_CASE("cross-fitted bundle stays close to the full-sample bundle") {
  DGPConfig dgp;
  dgp.n_rct = 200;
  dgp.source_sizes = {200, 200, 200, 200, 200};
  dgp.seed = 17;
  const Cohort pool = generate_pool(dgp);
  NuisanceOptions cf;
  cf.cross_fit_folds = 4;
  const NuisanceBundle full = build_nuisance_bundle(pool, {});
  const NuisanceBundle split = build_nuisance_bundle(pool, cf);
  const double disagreement =
      (full.enrollment - split.enrollment).cwiseAbs().maxCoeff();
  CHECK(disagreement < 0.25);
  CHECK(split.propensity.minCoeff() > 0.0);
}

TEST_CASE("Qbar requires the two-phase CATE and satisfies the reparameterization") {
  const Cohort c = tiny_pooled_cohort(60, 77);
  NuisanceBundle b = build_nuisance_bundle(c, {});
  CHECK_THROWS_AS(b.outcome_mean_wa(0, 1), PreconditionError);
  b.cate = Eigen::VectorXd::Constant(c.rows(), 0.5);
  b.has_cate = true;
  for (long i = 0; i < 5; ++i) {
    const double q1 = b.outcome_mean_wa(i, 1);
    const double q0 = b.outcome_mean_wa(i, 0);
    CHECK(q1 - q0 == doctest::Approx(0.5).epsilon(1e-12));
    const double theta = b.propensity[i] * q1 + (1.0 - b.propensity[i]) * q0;
    CHECK(theta == doctest::Approx(b.outcome_mean[i]).epsilon(1e-12));
  }
}
