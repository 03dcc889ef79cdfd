#include "atmle/cohort.hpp"

#include <cmath>
#include <string>

namespace atmle {

namespace {

void check_randomization_prob(double r) {
  if (!(r > 0.0 && r < 1.0)) {
    throw PreconditionError("randomization probability must lie strictly in (0,1), got " +
                            std::to_string(r));
  }
}

}  // namespace

Cohort validate_cohort(const std::vector<Observation>& rows, double randomization_prob) {
  if (rows.empty()) throw PreconditionError("cohort must contain at least one row");
  check_randomization_prob(randomization_prob);

  const long n = long(rows.size());
  const int d = int(rows.front().covariates.size());

  Cohort c;
  c.study.resize(n);
  c.covariates.resize(n, d);
  c.treatment.resize(n);
  c.outcome.resize(n);
  c.source.resize(n);
  c.randomization_prob = randomization_prob;

  for (long i = 0; i < n; ++i) {
    const Observation& o = rows[size_t(i)];
    if (int(o.covariates.size()) != d) {
      throw PreconditionError("covariate dimension mismatch at row " + std::to_string(i) +
                              ": expected " + std::to_string(d) + ", got " +
                              std::to_string(o.covariates.size()));
    }
    c.study[i] = o.study;
    c.covariates.row(i) = o.covariates.transpose();
    c.treatment[i] = o.treatment;
    c.outcome[i] = o.outcome;
    c.source[i] = o.source;
  }
  return validate_cohort(std::move(c));
}

Cohort validate_cohort(Cohort raw) {
  const long n = raw.rows();
  if (n == 0) throw PreconditionError("cohort must contain at least one row");
  check_randomization_prob(raw.randomization_prob);
  if (raw.treatment.size() != n || raw.outcome.size() != n || raw.covariates.rows() != n) {
    throw PreconditionError("cohort column lengths disagree");
  }
  if (raw.source.size() != n) {
    raw.source = Eigen::VectorXi::Constant(n, -1);
  }

  raw.cell_counts = {0, 0, 0, 0};
  for (long i = 0; i < n; ++i) {
    const int s = raw.study[i];
    const int a = raw.treatment[i];
    if (s != 0 && s != 1) {
      throw PreconditionError("study indicator must be 0/1 at row " + std::to_string(i) +
                              ", got " + std::to_string(s));
    }
    if (a != 0 && a != 1) {
      throw PreconditionError("treatment indicator must be 0/1 at row " + std::to_string(i) +
                              ", got " + std::to_string(a));
    }
    if (!std::isfinite(raw.outcome[i])) {
      throw PreconditionError("non-finite outcome at row " + std::to_string(i));
    }
    for (int j = 0; j < raw.dim(); ++j) {
      if (!std::isfinite(raw.covariates(i, j))) {
        throw PreconditionError("non-finite covariate W" + std::to_string(j + 1) +
                                " at row " + std::to_string(i));
      }
    }
    ++raw.cell_counts[size_t(s * 2 + a)];
  }
  return raw;
}

std::pair<std::vector<int>, std::vector<int>> split_by_study(const Cohort& cohort) {
  std::vector<int> trial, external;
  for (long i = 0; i < cohort.rows(); ++i) {
    (cohort.study[i] == 1 ? trial : external).push_back(int(i));
  }
  return {std::move(trial), std::move(external)};
}

Cohort subset_cohort(const Cohort& cohort, const std::vector<int>& indices) {
  Cohort out;
  const long m = long(indices.size());
  out.study.resize(m);
  out.covariates.resize(m, cohort.dim());
  out.treatment.resize(m);
  out.outcome.resize(m);
  out.source.resize(m);
  out.randomization_prob = cohort.randomization_prob;
  for (long i = 0; i < m; ++i) {
    const int r = indices[size_t(i)];
    out.study[i] = cohort.study[r];
    out.covariates.row(i) = cohort.covariates.row(r);
    out.treatment[i] = cohort.treatment[r];
    out.outcome[i] = cohort.outcome[r];
    out.source[i] = cohort.source[r];
  }
  return validate_cohort(std::move(out));
}

Cohort concat_cohorts(const Cohort& first, const Cohort& second) {
  if (first.dim() != second.dim()) {
    throw PreconditionError("cannot concatenate cohorts of different covariate dimension");
  }
  Cohort out;
  const long n = first.rows() + second.rows();
  out.study.resize(n);
  out.covariates.resize(n, first.dim());
  out.treatment.resize(n);
  out.outcome.resize(n);
  out.source.resize(n);
  out.randomization_prob = first.randomization_prob;
  out.study << first.study, second.study;
  out.covariates << first.covariates, second.covariates;
  out.treatment << first.treatment, second.treatment;
  out.outcome << first.outcome, second.outcome;
  out.source << first.source, second.source;
  return validate_cohort(std::move(out));
}

}  // namespace atmle
