#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "atmle/matching.hpp"
#include "atmle/rng.hpp"
#include "atmle/simulation.hpp"
#include "atmle/stats.hpp"

using namespace atmle;

namespace {

// trial rows followed by an external pool that contains exact covariate
// copies of the trial rows plus noise rows
Cohort copy_pool_cohort(int n_rct, int n_noise, uint64_t seed) {
  Rng rng(seed);
  const long n = 2L * n_rct + n_noise;
  Cohort c;
  c.study.resize(n);
  c.covariates.resize(n, 2);
  c.treatment.resize(n);
  c.outcome.resize(n);
  c.randomization_prob = 0.5;
  for (int i = 0; i < n_rct; ++i) {
    c.study[i] = 1;
    c.covariates(i, 0) = rng.normal();
    c.covariates(i, 1) = rng.normal();
    c.treatment[i] = rng.bernoulli(0.5);
    c.outcome[i] = rng.normal();
  }
  for (int i = 0; i < n_rct; ++i) {  // exact copies
    const long r = n_rct + i;
    c.study[r] = 0;
    c.covariates.row(r) = c.covariates.row(i);
    c.treatment[r] = rng.bernoulli(0.5);
    c.outcome[r] = rng.normal();
  }
  for (int i = 0; i < n_noise; ++i) {  // distant noise rows
    const long r = 2L * n_rct + i;
    c.study[r] = 0;
    c.covariates(r, 0) = 6.0 + rng.normal();
    c.covariates(r, 1) = -6.0 + rng.normal();
    c.treatment[r] = rng.bernoulli(0.5);
    c.outcome[r] = rng.normal();
  }
  return validate_cohort(std::move(c));
}

Eigen::VectorXd fitted_enrollment_score(const Cohort& c) {
  Design d = expand_basis(c.covariates, BasisSpec::main_terms());
  const CoefficientFit fit =
      fit_logistic(d.X, c.study.cast<double>(), Eigen::VectorXd(), d.info.names);
  return (d.X * fit.beta).unaryExpr([](double eta) { return expit(eta); });
}

}  // namespace

TEST_CASE("eligibility filter keeps order and is outcome-free") {
  Cohort c = copy_pool_cohort(5, 5, 1);
  const auto [trial, external] = split_by_study(c);
  const auto all = apply_eligibility_filter(
      c, external, [](const Eigen::RowVectorXd&) { return true; });
  CHECK(all == external);
  const auto none = apply_eligibility_filter(
      c, external, [](const Eigen::RowVectorXd&) { return false; });
  CHECK(none.empty());

  Cohort t = c;
  t.covariates.col(0) << -1, 0, 2, -1, 0, 2, -1, 0, 2, -1, 0, 2, -1, 0, 2;
  const std::vector<int> rows = {0, 1, 2};
  const auto kept = apply_eligibility_filter(
      t, rows, [](const Eigen::RowVectorXd& w) { return w[0] >= 0.0; });
  CHECK(kept == std::vector<int>{1, 2});
}

TEST_CASE("copy pool with k=1 matches every trial unit to its duplicate") {
  const Cohort c = copy_pool_cohort(30, 60, 3);
  const Eigen::VectorXd score = fitted_enrollment_score(c);
  MatchSpec spec;
  spec.k = 1;
  const MatchResult res = match_trial_enrollment(c, score, spec);
  CHECK(int(res.selected_external.size()) == 30);
  // duplicates carry identical scores: total distance is zero
  double total = 0.0;
  for (double d : res.pair_distances) total += d;
  CHECK(total == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(res.balance_after.max_abs_coef <= 0.05);
}

TEST_CASE("two nearest externals on the probability scale") {
  // one trial unit with q=0.5; externals at 0.40, 0.45, 0.90
  Cohort c;
  c.study.resize(4);
  c.covariates.resize(4, 1);
  c.treatment.resize(4);
  c.outcome.resize(4);
  c.randomization_prob = 0.5;
  c.study << 1, 0, 0, 0;
  c.covariates << 0.0, 1.0, 2.0, 3.0;
  c.treatment << 1, 0, 1, 0;
  c.outcome << 0, 0, 0, 0;
  c = validate_cohort(std::move(c));
  Eigen::VectorXd score(4);
  score << 0.5, 0.40, 0.45, 0.90;
  MatchSpec spec;
  spec.k = 2;
  spec.scale = ScoreScale::probability;
  const MatchResult res = match_trial_enrollment(c, score, spec);
  CHECK(res.selected_external == std::vector<int>{1, 2});
  // nearest first
  CHECK(res.pair_distances[0] == doctest::Approx(0.05));
  CHECK(res.pair_distances[1] == doctest::Approx(0.10));
}

TEST_CASE("pool exhaustion is an error reporting the shortfall") {
  const Cohort c = copy_pool_cohort(10, 0, 5);
  const Eigen::VectorXd score = fitted_enrollment_score(c);
  MatchSpec spec;
  spec.k = 3;  // needs 30, pool has 10
  CHECK_THROWS_AS(match_trial_enrollment(c, score, spec), PoolExhaustedError);
}

TEST_CASE("caliper shortfalls are recorded, not fatal") {
  const Cohort c = copy_pool_cohort(10, 30, 7);
  const Eigen::VectorXd score = fitted_enrollment_score(c);
  MatchSpec spec;
  spec.k = 3;
  spec.caliper = 1e-9;  // only exact copies can match
  const MatchResult res = match_trial_enrollment(c, score, spec);
  CHECK(res.shortfall_units > 0);
  CHECK(!res.warnings.empty());
}

TEST_CASE("stage-2 selects logit-nearest controls and pairs stay whole") {
  // externals: one treated at e=0.30, controls at 0.10, 0.29, 0.31
  // stage-2 refits e internally, so craft covariates that reproduce it:
  // here we instead validate via the public behavior on a copy design where
  // the fitted score is monotone in W1.
  Cohort c;
  const long n = 12;
  c.study.resize(n);
  c.covariates.resize(n, 1);
  c.treatment.resize(n);
  c.outcome.resize(n);
  c.randomization_prob = 0.5;
  Rng rng(9);
  for (long i = 0; i < n; ++i) {
    c.study[i] = i < 4 ? 1 : 0;
    c.treatment[i] = (i == 4 || i == 5) ? 1 : 0;  // two treated externals
    c.outcome[i] = rng.normal();
  }
  c.covariates << 0.0, 0.1, -0.1, 0.05,  // trial
      1.0, 0.8,                          // treated externals
      0.9, 0.7, -2.0, -2.2, 0.95, 0.75;  // controls
  c = validate_cohort(std::move(c));

  MatchResult stage1;
  stage1.selected_external = {4, 5, 6, 7, 8, 9, 10, 11};
  stage1.balance_before = balance_report(c);
  stage1.balance_after = stage1.balance_before;

  const MatchResult res = match_propensity(c, stage1, 2);
  // each treated unit got two controls; all units whole
  CHECK(res.trim_units.size() == 2);
  for (const auto& unit : res.trim_units) {
    CHECK(unit.members.size() == 3);
    CHECK(c.treatment[unit.members[0]] == 1);
    CHECK(c.treatment[unit.members[1]] == 0);
    CHECK(c.treatment[unit.members[2]] == 0);
  }
  CHECK(res.selected_external.size() == 6);
  CHECK(res.stage == MatchResult::Stage::tes_then_ps);
  CHECK(res.treatment_balance_after.has_value());
  // nearest controls by fitted score are the ones closest in W1
  std::set<int> sel(res.selected_external.begin(), res.selected_external.end());
  CHECK(sel.count(10) == 1);  // W1=0.95, closest to treated 1.0
  CHECK(sel.count(6) == 1);   // W1=0.90
  CHECK(sel.count(8) == 0);   // W1=-2.0 far
}

TEST_CASE("stage-2 drops treated units when controls run short") {
  Cohort c;
  const long n = 6;
  c.study.resize(n);
  c.covariates.resize(n, 1);
  c.treatment.resize(n);
  c.outcome.resize(n);
  c.randomization_prob = 0.5;
  c.study << 1, 1, 0, 0, 0, 0;
  c.treatment << 1, 0, 1, 1, 1, 0;  // three treated externals, one control
  c.covariates << 0, 0.1, 0.5, 0.6, 0.7, 0.55;
  c.outcome.setZero();
  c = validate_cohort(std::move(c));
  MatchResult stage1;
  stage1.selected_external = {2, 3, 4, 5};
  stage1.balance_before = balance_report(c);
  stage1.balance_after = stage1.balance_before;
  const MatchResult res = match_propensity(c, stage1, 1);
  CHECK(res.shortfall_units == 2);
  CHECK(res.trim_units.size() == 1);
  CHECK(!res.warnings.empty());
}

TEST_CASE("single-arm external subset is a precondition error for stage 2") {
  const Cohort c = copy_pool_cohort(4, 0, 13);
  auto [trial, external] = split_by_study(c);
  MatchResult stage1;
  stage1.selected_external.clear();
  for (int i : external) {
    if (c.treatment[i] == 0) stage1.selected_external.push_back(i);
  }
  stage1.balance_before = balance_report(c);
  stage1.balance_after = stage1.balance_before;
  CHECK_THROWS_AS(match_propensity(c, stage1, 1), PreconditionError);
}

TEST_CASE("trim keeps whole best-distance pairs and hits the target exactly") {
  Cohort c = copy_pool_cohort(8, 0, 15);
  MatchResult res;
  res.stage = MatchResult::Stage::tes_then_ps;
  res.balance_before = balance_report(c);
  res.balance_after = res.balance_before;
  // four pairs with distances .1 .2 .3 .4
  const auto [trial, external] = split_by_study(c);
  for (int p = 0; p < 4; ++p) {
    TrimUnit u;
    u.members = {external[size_t(2 * p)], external[size_t(2 * p + 1)]};
    u.pair_distances = {0.1 * (p + 1)};
    u.distance = 0.1 * (p + 1);
    res.trim_units.push_back(u);
    res.selected_external.push_back(u.members[0]);
    res.selected_external.push_back(u.members[1]);
  }
  std::sort(res.selected_external.begin(), res.selected_external.end());

  const MatchResult same = trim_to_size(c, res, 8, TrimPolicy::best_distance);
  CHECK(same.selected_external == res.selected_external);

  const MatchResult trimmed = trim_to_size(c, res, 4, TrimPolicy::best_distance);
  CHECK(int(trimmed.selected_external.size()) == 4);
  std::set<int> sel(trimmed.selected_external.begin(), trimmed.selected_external.end());
  CHECK(sel.count(res.trim_units[0].members[0]) == 1);
  CHECK(sel.count(res.trim_units[0].members[1]) == 1);
  CHECK(sel.count(res.trim_units[1].members[0]) == 1);
  CHECK(sel.count(res.trim_units[1].members[1]) == 1);

  CHECK_THROWS_AS(trim_to_size(c, res, 9, TrimPolicy::best_distance), PreconditionError);

  // random policy is deterministic in the seed
  const MatchResult r1 = trim_to_size(c, res, 4, TrimPolicy::random, 77);
  const MatchResult r2 = trim_to_size(c, res, 4, TrimPolicy::random, 77);
  CHECK(r1.selected_external == r2.selected_external);
}

TEST_CASE("random sampling: full pool, empty draw, determinism") {
  std::vector<int> pool = {11, 3, 7, 20, 5};
  const auto whole = sample_random(pool, 5, 1);
  CHECK(whole == std::vector<int>{3, 5, 7, 11, 20});
  CHECK(sample_random(pool, 0, 1).empty());
  const auto a = sample_random(pool, 3, 42);
  const auto b = sample_random(pool, 3, 42);
  CHECK(a == b);
  CHECK_THROWS_AS(sample_random(pool, 6, 1), PreconditionError);
}

TEST_CASE("matching output is invariant to outcome perturbation") {
  DGPConfig dgp;
  dgp.n_rct = 60;
  dgp.source_sizes = {150, 150, 150, 150, 150};
  dgp.seed = 2718;
  const Cohort pool = generate_pool(dgp);
  const Eigen::VectorXd score = fitted_enrollment_score(pool);
  MatchSpec spec;
  spec.k = 5;

  auto run_all = [&](const Cohort& c) {
    MatchResult s1 = match_trial_enrollment(c, score, spec);
    MatchResult s2 = match_propensity(c, s1, 1);
    return trim_to_size(c, s2, 100, TrimPolicy::best_distance);
  };
  const MatchResult base = run_all(pool);

  Cohort shuffled = pool;
  Rng rng(1);
  for (long i = 0; i < shuffled.rows(); ++i) {
    shuffled.outcome[i] = rng.normal(10.0, 5.0);  // arbitrary rewrite of Y
  }
  const MatchResult perturbed = run_all(shuffled);
  CHECK(base.selected_external == perturbed.selected_external);
  CHECK(base.pair_distances == perturbed.pair_distances);
}

TEST_CASE("no-replacement matching never selects an external twice") {
  DGPConfig dgp;
  dgp.n_rct = 40;
  dgp.source_sizes = {100, 100, 100, 100, 100};
  dgp.seed = 31415;
  const Cohort pool = generate_pool(dgp);
  const Eigen::VectorXd score = fitted_enrollment_score(pool);
  MatchSpec spec;
  spec.k = 6;
  const MatchResult res = match_trial_enrollment(pool, score, spec);
  std::set<int> uniq(res.selected_external.begin(), res.selected_external.end());
  CHECK(uniq.size() == res.selected_external.size());
  CHECK(res.pair_distances.size() == uniq.size());
}

TEST_CASE("matched samples improve enrollment balance in most replications") {
  int improved = 0, total = 0;
  for (int rep = 0; rep < 40; ++rep) {
    DGPConfig dgp;
    dgp.n_rct = 80;
    dgp.source_sizes = {320, 320, 320, 320, 320};
    dgp.seed = derive_seed(8888, rep);
    const Cohort pool = generate_pool(dgp);
    const Eigen::VectorXd score = fitted_enrollment_score(pool);
    MatchSpec spec;
    spec.k = 8;
    const MatchResult res = match_trial_enrollment(pool, score, spec);
    if (res.balance_before.separation || res.balance_after.separation) continue;
    ++total;
    if (res.balance_after.max_abs_coef <= res.balance_before.max_abs_coef) ++improved;
  }
  REQUIRE(total >= 38);
  CHECK(double(improved) / double(total) >= 0.95);
}

TEST_CASE("stage-1 balance shrinks materially on the shifted-source pool") {
  DGPConfig dgp;
  dgp.n_rct = 200;
  dgp.source_sizes = {1600, 1600, 1600, 1600, 1600};
  dgp.seed = 1234;
  const Cohort pool = generate_pool(dgp);
  const Eigen::VectorXd score = fitted_enrollment_score(pool);
  MatchSpec spec;
  spec.k = 20;
  const MatchResult res = match_trial_enrollment(pool, score, spec);
  CHECK(res.balance_after.max_abs_coef <= 0.5 * res.balance_before.max_abs_coef);
}

TEST_CASE("stage-2 improves treatment balance within the selected externals") {
  DGPConfig dgp;
  dgp.n_rct = 150;
  dgp.source_sizes = {1500, 1500, 1500, 1500, 1500};
  dgp.seed = 4321;
  const Cohort pool = generate_pool(dgp);
  const Eigen::VectorXd score = fitted_enrollment_score(pool);
  MatchSpec spec;
  spec.k = 20;
  const MatchResult s1 = match_trial_enrollment(pool, score, spec);
  const MatchResult s2 = match_propensity(pool, s1, 1);
  REQUIRE(s2.treatment_balance_before.has_value());
  REQUIRE(s2.treatment_balance_after.has_value());
  CHECK(s2.treatment_balance_after->max_abs_coef <=
        0.5 * s2.treatment_balance_before->max_abs_coef);
}
