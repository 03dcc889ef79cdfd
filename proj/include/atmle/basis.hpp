#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "atmle/error.hpp"

namespace atmle {

enum class BasisScheme { main_terms, indicator_hal0 };

// How treatment enters a phi(W,A) design:
//   none         -> [1, W...]
//   main_effect  -> [1, W..., A]
//   interactions -> [1, W..., A, A*W...]
enum class TreatmentTerms { none, main_effect, interactions };

struct BasisSpec {
  BasisScheme scheme = BasisScheme::main_terms;
  int knots_per_dim = 3;           // indicator_hal0 only
  int max_interaction_depth = 1;   // indicator_hal0 only
  bool include_intercept = true;
  TreatmentTerms treatment = TreatmentTerms::none;

  static BasisSpec main_terms(TreatmentTerms t = TreatmentTerms::none) {
    BasisSpec s;
    s.treatment = t;
    return s;
  }
  static BasisSpec hal0(int knots, int depth = 1,
                        TreatmentTerms t = TreatmentTerms::none) {
    BasisSpec s;
    s.scheme = BasisScheme::indicator_hal0;
    s.knots_per_dim = knots;
    s.max_interaction_depth = depth;
    s.treatment = t;
    return s;
  }
};

// One design column as a product of atoms; evaluable on new rows.
struct ColumnTerm {
  bool intercept = false;
  int linear_dim = -1;                              // W_j main term, -1 = none
  std::vector<std::pair<int, double>> indicators;   // product of 1{W_dim >= knot}
  bool with_treatment = false;                      // multiply by A

  double eval(const Eigen::Ref<const Eigen::RowVectorXd>& w, int a) const {
    double v = 1.0;
    if (linear_dim >= 0) v *= w[linear_dim];
    for (const auto& [dim, knot] : indicators) v *= (w[dim] >= knot) ? 1.0 : 0.0;
    if (with_treatment) v *= double(a);
    return v;
  }
  std::string name() const;
};

// Frozen expansion recipe: knots are computed once on the expansion sample
// and reused verbatim when scoring new rows.
struct DesignInfo {
  BasisSpec spec;
  int dim = 0;
  std::vector<ColumnTerm> columns;
  std::vector<std::string> names;
  std::vector<std::string> warnings;
  int cols() const { return int(columns.size()); }
};

struct Design {
  Eigen::MatrixXd X;
  DesignInfo info;
};

// Expansion over covariates only (phi(W)); spec.treatment must be none.
Design expand_basis(const Eigen::MatrixXd& W, const BasisSpec& spec);

// Expansion over (W, A).
Design expand_basis(const Eigen::MatrixXd& W, const Eigen::VectorXi& A,
                    const BasisSpec& spec);

// Evaluate a frozen recipe on new rows; `a` may be a per-row vector or a
// single counterfactual level applied to every row.
Eigen::MatrixXd expand_with(const DesignInfo& info, const Eigen::MatrixXd& W,
                            const Eigen::VectorXi& A);
Eigen::MatrixXd expand_with_fixed_a(const DesignInfo& info, const Eigen::MatrixXd& W,
                                    int a);
Eigen::RowVectorXd expand_row(const DesignInfo& info,
                              const Eigen::Ref<const Eigen::RowVectorXd>& w, int a);

}  // namespace atmle
