#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "atmle/cohort.hpp"
#include "atmle/rng.hpp"

using namespace atmle;

namespace {

Observation make_obs(int s, std::initializer_list<double> w, int a, double y,
                     int source = -1) {
  Observation o;
  o.study = s;
  o.covariates = Eigen::VectorXd(long(w.size()));
  long i = 0;
  for (double v : w) o.covariates[i++] = v;
  o.treatment = a;
  o.outcome = y;
  o.source = source;
  return o;
}

}  // namespace

TEST_CASE("well-formed cohort infers dimension and tabulates cells") {
  std::vector<Observation> rows = {
      make_obs(1, {0.1, 0.2}, 1, 1.0),
      make_obs(1, {0.3, -0.2}, 0, 0.5),
      make_obs(0, {0.0, 0.0}, 1, 2.0),
      make_obs(0, {1.0, 1.0}, 0, -1.0),
  };
  const Cohort c = validate_cohort(rows, 0.5);
  CHECK(c.rows() == 4);
  CHECK(c.dim() == 2);
  CHECK(c.cell_counts[0 * 2 + 0] == 1);  // s=0,a=0
  CHECK(c.cell_counts[0 * 2 + 1] == 1);
  CHECK(c.cell_counts[1 * 2 + 0] == 1);
  CHECK(c.cell_counts[1 * 2 + 1] == 1);
}

TEST_CASE("dimension mismatch is rejected") {
  std::vector<Observation> rows = {
      make_obs(1, {0.1, 0.2, 0.3}, 1, 1.0),
      make_obs(0, {0.1, 0.2}, 0, 1.0),
  };
  CHECK_THROWS_AS(validate_cohort(rows, 0.5), PreconditionError);
}

TEST_CASE("degenerate randomization probability is rejected") {
  std::vector<Observation> rows = {make_obs(1, {0.0}, 1, 1.0)};
  CHECK_THROWS_AS(validate_cohort(rows, 1.0), PreconditionError);
  CHECK_THROWS_AS(validate_cohort(rows, 0.0), PreconditionError);
}

TEST_CASE("non-binary indicators and non-finite values are rejected") {
  auto bad_s = make_obs(1, {0.0}, 1, 1.0);
  bad_s.study = 2;
  CHECK_THROWS_AS(validate_cohort({bad_s}, 0.5), PreconditionError);

  auto bad_y = make_obs(1, {0.0}, 1, std::nan(""));
  CHECK_THROWS_AS(validate_cohort({bad_y}, 0.5), PreconditionError);

  auto bad_w = make_obs(1, {std::numeric_limits<double>::infinity()}, 0, 1.0);
  CHECK_THROWS_AS(validate_cohort({bad_w}, 0.5), PreconditionError);
}

TEST_CASE("split_by_study partitions and preserves order") {
  std::vector<Observation> rows = {
      make_obs(1, {1.0}, 1, 1.0),
      make_obs(0, {2.0}, 0, 2.0),
      make_obs(1, {3.0}, 0, 3.0),
  };
  const Cohort c = validate_cohort(rows, 0.5);
  const auto [trial, external] = split_by_study(c);
  CHECK(trial == std::vector<int>{0, 2});
  CHECK(external == std::vector<int>{1});

  const Cohort all_trial = validate_cohort(
      {make_obs(1, {1.0}, 1, 1.0), make_obs(1, {2.0}, 0, 2.0)}, 0.5);
  CHECK(split_by_study(all_trial).second.empty());
  const Cohort all_external = validate_cohort(
      {make_obs(0, {1.0}, 1, 1.0), make_obs(0, {2.0}, 0, 2.0)}, 0.5);
  CHECK(split_by_study(all_external).first.empty());
}

TEST_CASE("split then concat is a permutation with no row mutation") {
  Rng rng(42);
  std::vector<Observation> rows;
  for (int i = 0; i < 40; ++i) {
    rows.push_back(make_obs(rng.bernoulli(0.4), {rng.normal(), rng.normal()},
                            rng.bernoulli(0.5), rng.normal(), int(rng.bounded(5))));
  }
  const Cohort c = validate_cohort(rows, 0.3);
  const auto [trial, external] = split_by_study(c);
  const Cohort glued =
      concat_cohorts(subset_cohort(c, trial), subset_cohort(c, external));
  CHECK(glued.rows() == c.rows());

  // every original row appears exactly once, bit-identical
  std::vector<bool> seen(size_t(c.rows()), false);
  for (long i = 0; i < glued.rows(); ++i) {
    bool found = false;
    for (long j = 0; j < c.rows(); ++j) {
      if (seen[size_t(j)]) continue;
      if (glued.study[i] == c.study[j] && glued.treatment[i] == c.treatment[j] &&
          glued.outcome[i] == c.outcome[j] && glued.source[i] == c.source[j] &&
          glued.covariates.row(i) == c.covariates.row(j)) {
        seen[size_t(j)] = true;
        found = true;
        break;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("validate_cohort is idempotent on its own output") {
  std::vector<Observation> rows = {make_obs(1, {1.5}, 1, 2.0),
                                   make_obs(0, {-0.5}, 0, 1.0)};
  const Cohort once = validate_cohort(rows, 0.25);
  const Cohort twice = validate_cohort(once);
  CHECK(once.study == twice.study);
  CHECK(once.covariates == twice.covariates);
  CHECK(once.treatment == twice.treatment);
  CHECK(once.outcome == twice.outcome);
  CHECK(once.randomization_prob == twice.randomization_prob);
  CHECK(once.cell_counts == twice.cell_counts);
}
