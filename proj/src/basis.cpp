#include "atmle/basis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "atmle/stats.hpp"

namespace atmle {

namespace {

std::string fmt_knot(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// Knot grid per covariate at quantile levels t/(K+1); constant covariates
// and duplicate quantiles are skipped with a warning.
std::vector<std::vector<double>> compute_knots(const Eigen::MatrixXd& W, int knots_per_dim,
                                               std::vector<std::string>& warnings) {
  const int d = int(W.cols());
  std::vector<std::vector<double>> knots;
  knots.resize(size_t(d));
  for (int j = 0; j < d; ++j) {
    const double lo = W.col(j).minCoeff(), hi = W.col(j).maxCoeff();
    if (lo == hi) {
      warnings.push_back("covariate W" + std::to_string(j + 1) +
                         " is constant; knots skipped");
      continue;
    }
    std::vector<double> col(W.col(j).data(), W.col(j).data() + W.rows());
    std::set<double> uniq;
    for (int t = 1; t <= knots_per_dim; ++t) {
      const double q = quantile_type7(col, double(t) / double(knots_per_dim + 1));
      if (!uniq.insert(q).second) {
        warnings.push_back("duplicate knot " + fmt_knot(q) + " on W" +
                           std::to_string(j + 1) + " skipped");
        continue;
      }
      if (q <= lo) {
        warnings.push_back("knot " + fmt_knot(q) + " on W" + std::to_string(j + 1) +
                           " is never binding; skipped");
        uniq.erase(q);
        continue;
      }
      knots[size_t(j)].push_back(q);
    }
  }
  return knots;
}

// All indicator products of exactly `depth` distinct covariates, ordered
// lexicographically by (dims, knot indices).
void add_hal0_products(const std::vector<std::vector<double>>& knots, int depth,
                       std::vector<ColumnTerm>& cols) {
  const int d = int(knots.size());
  std::vector<int> dims;
  std::vector<std::pair<int, double>> atoms;
  auto recurse = [&](auto&& self, int next_dim) -> void {
    if (int(atoms.size()) == depth) {
      ColumnTerm t;
      t.indicators = atoms;
      cols.push_back(std::move(t));
      return;
    }
    for (int j = next_dim; j < d; ++j) {
      for (double knot : knots[size_t(j)]) {
        atoms.emplace_back(j, knot);
        self(self, j + 1);
        atoms.pop_back();
      }
    }
  };
  recurse(recurse, 0);
}

DesignInfo build_info(const Eigen::MatrixXd& W, const BasisSpec& spec) {
  DesignInfo info;
  info.spec = spec;
  info.dim = int(W.cols());

  std::vector<ColumnTerm> base;  // W-only columns, intercept excluded
  if (spec.scheme == BasisScheme::main_terms) {
    for (int j = 0; j < info.dim; ++j) {
      ColumnTerm t;
      t.linear_dim = j;
      base.push_back(t);
    }
  } else {
    if (spec.knots_per_dim < 1) throw ConfigError("knots_per_dim must be positive");
    if (spec.max_interaction_depth < 1)
      throw ConfigError("max_interaction_depth must be positive");
    const auto knots = compute_knots(W, spec.knots_per_dim, info.warnings);
    for (int depth = 1; depth <= spec.max_interaction_depth; ++depth) {
      add_hal0_products(knots, depth, base);
    }
  }

  if (spec.include_intercept) {
    ColumnTerm t;
    t.intercept = true;
    info.columns.push_back(t);
  }
  for (const auto& t : base) info.columns.push_back(t);
  if (spec.treatment != TreatmentTerms::none) {
    ColumnTerm a;
    a.intercept = true;
    a.with_treatment = true;
    info.columns.push_back(a);
  }
  if (spec.treatment == TreatmentTerms::interactions) {
    for (auto t : base) {
      t.with_treatment = true;
      info.columns.push_back(t);
    }
  }
  for (const auto& c : info.columns) info.names.push_back(c.name());
  return info;
}

}  // namespace

std::string ColumnTerm::name() const {
  std::string s;
  if (with_treatment) s = "A";
  if (linear_dim >= 0) s += (s.empty() ? "" : "*") + ("W" + std::to_string(linear_dim + 1));
  for (const auto& [dim, knot] : indicators) {
    s += (s.empty() ? "" : "*") +
         ("I(W" + std::to_string(dim + 1) + ">=" + fmt_knot(knot) + ")");
  }
  return s.empty() ? "1" : s;
}

Eigen::MatrixXd expand_with(const DesignInfo& info, const Eigen::MatrixXd& W,
                            const Eigen::VectorXi& A) {
  const long n = W.rows();
  Eigen::MatrixXd X(n, info.cols());
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < info.cols(); ++j) {
      X(i, j) = info.columns[size_t(j)].eval(W.row(i), A.size() ? A[i] : 0);
    }
  }
  return X;
}

Eigen::MatrixXd expand_with_fixed_a(const DesignInfo& info, const Eigen::MatrixXd& W,
                                    int a) {
  const long n = W.rows();
  Eigen::MatrixXd X(n, info.cols());
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < info.cols(); ++j) {
      X(i, j) = info.columns[size_t(j)].eval(W.row(i), a);
    }
  }
  return X;
}

Eigen::RowVectorXd expand_row(const DesignInfo& info,
                              const Eigen::Ref<const Eigen::RowVectorXd>& w, int a) {
  Eigen::RowVectorXd x(info.cols());
  for (int j = 0; j < info.cols(); ++j) x[j] = info.columns[size_t(j)].eval(w, a);
  return x;
}

Design expand_basis(const Eigen::MatrixXd& W, const Eigen::VectorXi& A,
                    const BasisSpec& spec) {
  if (W.rows() < 1) throw PreconditionError("basis expansion needs at least one row");
  if (spec.treatment != TreatmentTerms::none && A.size() != W.rows()) {
    throw PreconditionError("treatment vector length does not match covariate rows");
  }
  Design d;
  d.info = build_info(W, spec);
  d.X = expand_with(d.info, W, A);
  return d;
}

Design expand_basis(const Eigen::MatrixXd& W, const BasisSpec& spec) {
  if (spec.treatment != TreatmentTerms::none) {
    throw PreconditionError("phi(W) expansion requested but spec includes treatment terms");
  }
  return expand_basis(W, Eigen::VectorXi(), spec);
}

}  // namespace atmle
