#include "atmle/diagnostics.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "atmle/stats.hpp"

namespace atmle {

FunctionBasis FunctionBasis::from_design(const DesignInfo& info) {
  FunctionBasis b;
  b.size = info.cols();
  b.eval = [info](const Eigen::RowVectorXd& w, int a) {
    return expand_row(info, w, a).transpose();
  };
  return b;
}

namespace {

constexpr double kDenomClip = 0.005;

Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& m, const Eigen::MatrixXd& rhs) {
  Eigen::MatrixXd jittered = m;
  jittered.diagonal().array() += 1e-12;
  return jittered.ldlt().solve(rhs);
}

// Mean and MC standard error of a scalar integrand over seeded draws, with
// compensated accumulation.
template <typename F>
McValue mc_mean(const TruthSpec& truth, long mc_n, uint64_t seed, F&& integrand) {
  Rng rng(seed);
  KahanSum sum, sumsq;
  long clip_events = 0;
  for (long i = 0; i < mc_n; ++i) {
    const Eigen::RowVectorXd w = truth.sampler(rng);
    const double h = integrand(w, clip_events);
    sum.add(h);
    sumsq.add(h * h);
  }
  McValue out;
  out.n = mc_n;
  out.value = sum.value() / double(mc_n);
  const double var =
      std::max(0.0, sumsq.value() / double(mc_n) - out.value * out.value);
  out.se = std::sqrt(var / double(mc_n));
  out.clip_events = clip_events;
  return out;
}

}  // namespace

Eigen::VectorXd project_cate_truth(const TruthSpec& truth, const FunctionBasis& basis,
                                   long mc_n, uint64_t seed) {
  const int p = basis.size;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd moment = Eigen::VectorXd::Zero(p);
  Rng rng(seed);
  for (long i = 0; i < mc_n; ++i) {
    const Eigen::RowVectorXd w = truth.sampler(rng);
    const Eigen::VectorXd phi = basis.eval(w, 0);
    const double g = truth.propensity(w);
    const double wt = g * (1.0 - g);
    gram.noalias() += wt * phi * phi.transpose();
    moment.noalias() += wt * truth.cate(w) * phi;
  }
  return solve_spd(gram / double(mc_n), moment / double(mc_n));
}

Eigen::VectorXd project_effect_truth(const TruthSpec& truth, const FunctionBasis& basis,
                                     long mc_n, uint64_t seed) {
  const int p = basis.size;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd moment = Eigen::VectorXd::Zero(p);
  Rng rng(seed);
  for (long i = 0; i < mc_n; ++i) {
    const Eigen::RowVectorXd w = truth.sampler(rng);
    const double g = truth.propensity(w);
    for (int a = 0; a <= 1; ++a) {
      const double pa = a == 1 ? g : 1.0 - g;  // A | W under the truth
      const double pi = truth.enrollment_given_treatment(w, a);
      const double wt = pa * pi * (1.0 - pi);
      const Eigen::VectorXd phi = basis.eval(w, a);
      gram.noalias() += wt * phi * phi.transpose();
      moment.noalias() += wt * truth.enrollment_effect(w, a) * phi;
    }
  }
  return solve_spd(gram / double(mc_n), moment / double(mc_n));
}

McValue exact_remainder_pooled(const PooledModel& model, const TruthSpec& truth,
                               const FunctionBasis& basis, long mc_n, uint64_t seed) {
  const int p = basis.size;
  std::function<double(const Eigen::RowVectorXd&)> g_model = model.propensity;
  if (!g_model) {
    g_model = [&truth](const Eigen::RowVectorXd& w) { return truth.propensity(w); };
  }
  const auto theta_model = model.outcome_mean ? model.outcome_mean : truth.outcome_mean;

  // Pass 1: basis means, the g_P(1-g_P)-weighted information, and the
  // population projection of the true CATE.
  Eigen::VectorXd beta0;
  Eigen::VectorXd mean_phi = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
  {
    Eigen::MatrixXd gram0 = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd moment0 = Eigen::VectorXd::Zero(p);
    Rng rng(seed);
    for (long i = 0; i < mc_n; ++i) {
      const Eigen::RowVectorXd w = truth.sampler(rng);
      const Eigen::VectorXd phi = basis.eval(w, 0);
      const double gp = g_model(w);
      const double g0 = truth.propensity(w);
      mean_phi += phi;
      info.noalias() += gp * (1.0 - gp) * phi * phi.transpose();
      gram0.noalias() += g0 * (1.0 - g0) * phi * phi.transpose();
      moment0.noalias() += g0 * (1.0 - g0) * truth.cate(w) * phi;
    }
    mean_phi /= double(mc_n);
    info /= double(mc_n);
    beta0 = solve_spd(gram0 / double(mc_n), moment0 / double(mc_n));
  }
  const Eigen::VectorXd beta_p = model.beta.value_or(beta0);
  const Eigen::VectorXd lever = solve_spd(info, mean_phi);

  // Pass 2 (same draws): the four-term integrand.
  return mc_mean(truth, mc_n, seed, [&](const Eigen::RowVectorXd& w, long&) {
    const Eigen::VectorXd phi = basis.eval(w, 0);
    const double gp = g_model(w);
    const double g0 = truth.propensity(w);
    const double dg = gp - g0;
    const double tau_p = phi.dot(beta_p);
    const double dtau = tau_p - phi.dot(beta0);
    const double dtheta = theta_model(w) - truth.outcome_mean(w);
    const double v = dg * dtheta + dg * (1.0 - gp) * dtau - dg * dg * tau_p -
                     dg * g0 * dtau;
    return lever.dot(phi) * v;
  });
}

McValue exact_remainder_bias(const BiasModel& model, const TruthSpec& truth,
                             const FunctionBasis& basis, long mc_n, uint64_t seed) {
  const int p = basis.size;
  std::function<double(const Eigen::RowVectorXd&)> g_model = model.propensity;
  if (!g_model) {
    g_model = [&truth](const Eigen::RowVectorXd& w) { return truth.propensity(w); };
  }
  std::function<double(const Eigen::RowVectorXd&, int)> pi_model =
      model.enrollment_given_treatment;
  if (!pi_model) {
    pi_model = [&truth](const Eigen::RowVectorXd& w, int a) {
      return truth.enrollment_given_treatment(w, a);
    };
  }
  std::function<double(const Eigen::RowVectorXd&, int)> qbar_model = model.outcome_mean_wa;
  if (!qbar_model) {
    qbar_model = [&truth](const Eigen::RowVectorXd& w, int a) {
      return truth.outcome_mean_wa(w, a);
    };
  }

  // Pass 1: prefactor means and the Pi_P(1-Pi_P)-weighted information under
  // the model law, plus the population projection of the true effect.
  Eigen::VectorXd beta0;
  Eigen::VectorXd mean_pref = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
  {
    Eigen::MatrixXd gram0 = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd moment0 = Eigen::VectorXd::Zero(p);
    Rng rng(seed);
    for (long i = 0; i < mc_n; ++i) {
      const Eigen::RowVectorXd w = truth.sampler(rng);
      const double gp = g_model(w);
      const double g0 = truth.propensity(w);
      for (int a = 0; a <= 1; ++a) {
        const Eigen::VectorXd phi = basis.eval(w, a);
        const double pip = pi_model(w, a);
        const double pi0 = truth.enrollment_given_treatment(w, a);
        const double pa_model = a == 1 ? gp : 1.0 - gp;
        const double pa_truth = a == 1 ? g0 : 1.0 - g0;
        info.noalias() += pa_model * pip * (1.0 - pip) * phi * phi.transpose();
        mean_pref += (a == 0 ? 1.0 : -1.0) * (1.0 - pip) * phi;
        gram0.noalias() += pa_truth * pi0 * (1.0 - pi0) * phi * phi.transpose();
        moment0.noalias() +=
            pa_truth * pi0 * (1.0 - pi0) * truth.enrollment_effect(w, a) * phi;
      }
    }
    mean_pref /= double(mc_n);
    info /= double(mc_n);
    beta0 = solve_spd(gram0 / double(mc_n), moment0 / double(mc_n));
  }
  const Eigen::VectorXd beta_p = model.beta.value_or(beta0);
  const Eigen::VectorXd lever = solve_spd(info, mean_pref);

  return mc_mean(truth, mc_n, seed, [&](const Eigen::RowVectorXd& w, long& clip_events) {
    const double g0 = truth.propensity(w);
    double gp = g_model(w);
    if (gp < kDenomClip || gp > 1.0 - kDenomClip) {
      ++clip_events;
      gp = clamp_prob(gp, kDenomClip, 1.0 - kDenomClip);
    }
    const Eigen::VectorXd phi0 = basis.eval(w, 0);
    const Eigen::VectorXd phi1 = basis.eval(w, 1);
    const double pip0 = pi_model(w, 0), pip1 = pi_model(w, 1);
    const double pi00 = truth.enrollment_given_treatment(w, 0);
    const double pi01 = truth.enrollment_given_treatment(w, 1);
    const double dpi0 = pip0 - pi00, dpi1 = pip1 - pi01;  // on (1|W,a)
    const double tau_p0 = phi0.dot(beta_p), tau_p1 = phi1.dot(beta_p);
    const double dtau0 = tau_p0 - phi0.dot(beta0);
    const double dtau1 = tau_p1 - phi1.dot(beta0);

    const double t1 = (gp - g0) / gp * tau_p1 * dpi1;
    const double t2 = -((1.0 - gp) - (1.0 - g0)) / (1.0 - gp) * tau_p0 * dpi0;
    // (Pi_P - Pi_0)(0|W,a) = -(Pi_P - Pi_0)(1|W,a)
    const double t3 = -dtau0 * (-dpi0);
    const double t4 = dtau1 * (-dpi1);

    auto block_term = [&](int a) {
      const Eigen::VectorXd& phi = a == 1 ? phi1 : phi0;
      const double dpi = a == 1 ? dpi1 : dpi0;
      const double pip = a == 1 ? pip1 : pip0;
      const double pi0 = a == 1 ? pi01 : pi00;
      const double tau_p = a == 1 ? tau_p1 : tau_p0;
      const double dtau = a == 1 ? dtau1 : dtau0;
      const double dqbar = qbar_model(w, a) - truth.outcome_mean_wa(w, a);
      const double u = dpi * dqbar + dpi * (1.0 - pip) * dtau - dpi * dpi * tau_p -
                       dpi * pi0 * dtau;
      return lever.dot(phi) * u;
    };
    const double block = g0 * block_term(1) + (1.0 - g0) * block_term(0);
    return t1 + t2 + t3 + t4 + block;
  });
}

OracleBias oracle_bias_mc(const TruthSpec& truth, const FunctionBasis& cate_basis,
                          const FunctionBasis& effect_basis, long mc_n, uint64_t seed) {
  const Eigen::VectorXd beta_cate = project_cate_truth(truth, cate_basis, mc_n, seed);
  const Eigen::VectorXd beta_eff = project_effect_truth(truth, effect_basis, mc_n, seed);

  Rng rng(seed);
  KahanSum pooled_sum, pooled_sq, bias_sum, bias_sq, comb_sum, comb_sq;
  KahanSum cate_w, cate_werr, cate_wval, cate_wval2;
  KahanSum eff_w, eff_werr, eff_wval, eff_wval2;
  for (long i = 0; i < mc_n; ++i) {
    const Eigen::RowVectorXd w = truth.sampler(rng);
    const double g0 = truth.propensity(w);

    const double tau_proj = cate_basis.eval(w, 0).dot(beta_cate);
    const double dcate = tau_proj - truth.cate(w);
    pooled_sum.add(dcate);
    pooled_sq.add(dcate * dcate);
    {
      const double wt = g0 * (1.0 - g0);
      cate_w.add(wt);
      cate_werr.add(wt * dcate * dcate);
      cate_wval.add(wt * truth.cate(w));
      cate_wval2.add(wt * truth.cate(w) * truth.cate(w));
    }

    double dbias = 0.0;
    for (int a = 0; a <= 1; ++a) {
      const double pi0 = truth.enrollment_given_treatment(w, a);
      const double deff = effect_basis.eval(w, a).dot(beta_eff) - truth.enrollment_effect(w, a);
      dbias += (a == 0 ? 1.0 : -1.0) * (1.0 - pi0) * deff;
      const double pa = a == 1 ? g0 : 1.0 - g0;
      const double wt = pa * pi0 * (1.0 - pi0);
      eff_w.add(wt);
      eff_werr.add(wt * deff * deff);
      eff_wval.add(wt * truth.enrollment_effect(w, a));
      eff_wval2.add(wt * truth.enrollment_effect(w, a) * truth.enrollment_effect(w, a));
    }
    bias_sum.add(dbias);
    bias_sq.add(dbias * dbias);
    const double comb = dcate - dbias;
    comb_sum.add(comb);
    comb_sq.add(comb * comb);
  }

  auto finish = [mc_n](const KahanSum& s, const KahanSum& sq) {
    McValue v;
    v.n = mc_n;
    v.value = s.value() / double(mc_n);
    const double var = std::max(0.0, sq.value() / double(mc_n) - v.value * v.value);
    v.se = std::sqrt(var / double(mc_n));
    return v;
  };
  OracleBias out;
  out.pooled = finish(pooled_sum, pooled_sq);
  out.bias_part = finish(bias_sum, bias_sq);
  out.combined = finish(comb_sum, comb_sq);
  out.cate_weighted_mse = cate_werr.value() / cate_w.value();
  const double cmean = cate_wval.value() / cate_w.value();
  out.cate_weighted_var = cate_wval2.value() / cate_w.value() - cmean * cmean;
  out.effect_weighted_mse = eff_werr.value() / eff_w.value();
  const double emean = eff_wval.value() / eff_w.value();
  out.effect_weighted_var = eff_wval2.value() / eff_w.value() - emean * emean;
  return out;
}

TruthSpec make_synthetic_truth(bool constant_scores) {
  TruthSpec t;
  t.dim = 3;
  t.randomization_prob = 0.5;
  t.sampler = [](Rng& rng) {
    Eigen::RowVectorXd w(3);
    w << rng.normal(), rng.normal(), rng.normal();
    return w;
  };
  if (constant_scores) {
    t.enrollment = [](const Eigen::RowVectorXd&) { return 0.25; };
    t.external_propensity = [](const Eigen::RowVectorXd&) { return 0.3; };
  } else {
    t.enrollment = [](const Eigen::RowVectorXd& w) {
      return expit(-1.0 + 0.3 * w[0] - 0.2 * w[1] + 0.25 * w[2]);
    };
    t.external_propensity = [](const Eigen::RowVectorXd& w) {
      return expit(-0.7 + 0.2 * w[0] + 0.3 * w[1]);
    };
  }
  t.outcome_mean = [](const Eigen::RowVectorXd& w) {
    return 1.0 + 0.9 * w[0] + 1.1 * w[1] + 0.7 * w[2] * w[2];
  };
  t.cate = [](const Eigen::RowVectorXd& w) {
    return 0.5 + 0.8 * w[0] + 0.6 * w[0] * w[0] - 0.4 * w[1];
  };
  t.enrollment_effect = [](const Eigen::RowVectorXd& w, int a) {
    return -(0.4 + 0.9 * w[0] * double(a) + 0.3 * w[2] + 0.5 * w[1] * w[1]);
  };
  return t;
}

namespace {

FunctionBasis main_terms_basis_w(int dim) {
  FunctionBasis b;
  b.size = dim + 1;
  b.eval = [dim](const Eigen::RowVectorXd& w, int) {
    Eigen::VectorXd phi(dim + 1);
    phi[0] = 1.0;
    for (int j = 0; j < dim; ++j) phi[j + 1] = w[j];
    return phi;
  };
  return b;
}

FunctionBasis main_terms_basis_wa(int dim) {
  FunctionBasis b;
  b.size = dim + 2;
  b.eval = [dim](const Eigen::RowVectorXd& w, int a) {
    Eigen::VectorXd phi(dim + 2);
    phi[0] = 1.0;
    for (int j = 0; j < dim; ++j) phi[j + 1] = w[j];
    phi[dim + 1] = double(a);
    return phi;
  };
  return b;
}

}  // namespace

McValue scenario_true_g(long mc_n, uint64_t seed) {
  const TruthSpec truth = make_synthetic_truth(false);
  const FunctionBasis basis = main_terms_basis_w(truth.dim);
  PooledModel model;
  // wrong outcome regression and wrong working-model coefficients; g stays true
  model.outcome_mean = [&truth](const Eigen::RowVectorXd& w) {
    return truth.outcome_mean(w) + 1.5 - 0.7 * w[0] * w[0];
  };
  Eigen::VectorXd beta0 = project_cate_truth(truth, basis, mc_n, seed);
  Eigen::VectorXd offset(basis.size);
  offset << 0.4, -0.3, 0.2, 0.25;
  model.beta = beta0 + offset;
  return exact_remainder_pooled(model, truth, basis, mc_n, seed);
}

McValue scenario_true_pi(long mc_n, uint64_t seed) {
  const TruthSpec truth = make_synthetic_truth(false);
  const FunctionBasis basis = main_terms_basis_wa(truth.dim);
  BiasModel model;
  model.outcome_mean_wa = [&truth](const Eigen::RowVectorXd& w, int a) {
    return truth.outcome_mean_wa(w, a) - 1.0 + 0.6 * w[1] * w[1];
  };
  Eigen::VectorXd beta0 = project_effect_truth(truth, basis, mc_n, seed);
  Eigen::VectorXd offset(basis.size);
  offset << -0.3, 0.25, -0.2, 0.15, 0.35;
  model.beta = beta0 + offset;
  return exact_remainder_bias(model, truth, basis, mc_n, seed);
}

PerturbationSweep scenario_g_perturb(const std::vector<double>& eps, long mc_n,
                                     uint64_t seed) {
  const TruthSpec truth = make_synthetic_truth(false);
  const FunctionBasis basis = main_terms_basis_w(truth.dim);
  PerturbationSweep sweep;
  for (double e : eps) {
    PooledModel model;
    model.propensity = [&truth, e](const Eigen::RowVectorXd& w) {
      return clamp_prob(truth.propensity(w) + e, 0.01, 0.99);
    };
    sweep.points.push_back({e, exact_remainder_pooled(model, truth, basis, mc_n, seed)});
  }
  sweep.loglog_slope = loglog_slope(sweep.points);
  return sweep;
}

PerturbationSweep scenario_pi_perturb(const std::vector<double>& eps, long mc_n,
                                      uint64_t seed) {
  const TruthSpec truth = make_synthetic_truth(false);
  const FunctionBasis basis = main_terms_basis_wa(truth.dim);
  PerturbationSweep sweep;
  for (double e : eps) {
    BiasModel model;
    model.enrollment_given_treatment = [&truth, e](const Eigen::RowVectorXd& w, int a) {
      return clamp_prob(truth.enrollment_given_treatment(w, a) + e, 0.01, 0.99);
    };
    sweep.points.push_back({e, exact_remainder_bias(model, truth, basis, mc_n, seed)});
  }
  sweep.loglog_slope = loglog_slope(sweep.points);
  return sweep;
}

std::vector<double> default_g_perturb_eps() { return {0.01, 0.02, 0.04, 0.08}; }
std::vector<double> default_pi_perturb_eps() { return {0.00125, 0.0025, 0.005, 0.01}; }

double loglog_slope(const std::vector<PerturbationPoint>& points) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  long n = 0;
  for (const auto& p : points) {
    if (p.eps <= 0 || p.remainder.value == 0.0) continue;
    const double x = std::log(p.eps), y = std::log(std::abs(p.remainder.value));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return 0.0;
  return (double(n) * sxy - sx * sy) / (double(n) * sxx - sx * sx);
}

std::vector<OracleBias> scenario_constant_scores(int n_bases, long mc_n, uint64_t seed) {
  const TruthSpec truth = make_synthetic_truth(true);
  // atom pool of nonlinear covariate transforms
  using Atom = std::function<double(const Eigen::RowVectorXd&)>;
  const std::vector<Atom> atoms = {
      [](const Eigen::RowVectorXd& w) { return w[0]; },
      [](const Eigen::RowVectorXd& w) { return w[1]; },
      [](const Eigen::RowVectorXd& w) { return w[2]; },
      [](const Eigen::RowVectorXd& w) { return w[0] * w[0]; },
      [](const Eigen::RowVectorXd& w) { return w[1] * w[1]; },
      [](const Eigen::RowVectorXd& w) { return w[2] * w[2]; },
      [](const Eigen::RowVectorXd& w) { return w[0] * w[1]; },
      [](const Eigen::RowVectorXd& w) { return w[1] * w[2]; },
      [](const Eigen::RowVectorXd& w) { return std::abs(w[0]); },
      [](const Eigen::RowVectorXd& w) { return expit(w[2]); },
  };
  std::vector<OracleBias> out;
  Rng rng(derive_seed(seed, 0xba5e5));
  for (int b = 0; b < n_bases; ++b) {
    std::vector<int> pick_w, pick_wa, pick_int;
    for (int t = 0; t < int(atoms.size()); ++t) {
      if (rng.uniform() < 0.4) pick_w.push_back(t);
      if (rng.uniform() < 0.35) pick_wa.push_back(t);
      if (rng.uniform() < 0.2) pick_int.push_back(t);
    }
    FunctionBasis cate;
    cate.size = 1 + int(pick_w.size());
    cate.eval = [&atoms, pick_w](const Eigen::RowVectorXd& w, int) {
      Eigen::VectorXd phi(1 + pick_w.size());
      phi[0] = 1.0;
      for (size_t i = 0; i < pick_w.size(); ++i) phi[1 + long(i)] = atoms[size_t(pick_w[i])](w);
      return phi;
    };
    // per-arm constants {1, A} always present
    FunctionBasis effect;
    effect.size = 2 + int(pick_wa.size()) + int(pick_int.size());
    effect.eval = [&atoms, pick_wa, pick_int](const Eigen::RowVectorXd& w, int a) {
      Eigen::VectorXd phi(2 + pick_wa.size() + pick_int.size());
      long j = 0;
      phi[j++] = 1.0;
      phi[j++] = double(a);
      for (int t : pick_wa) phi[j++] = atoms[size_t(t)](w);
      for (int t : pick_int) phi[j++] = double(a) * atoms[size_t(t)](w);
      return phi;
    };
    out.push_back(oracle_bias_mc(truth, cate, effect, mc_n,
                                 derive_seed(seed, 0x0b1a5 + uint64_t(b))));
  }
  return out;
}

std::vector<LadderRung> scenario_oracle_ladder(long mc_n, uint64_t seed) {
  // Truth with the CATE inside the pooled basis span, so the combined oracle
  // bias isolates the enrollment-effect misspecification.
  std::vector<LadderRung> out;
  for (int rung = 1; rung <= 10; ++rung) {
    const double c = 0.08 * double(rung);
    TruthSpec truth = make_synthetic_truth(false);
    truth.cate = [](const Eigen::RowVectorXd& w) { return 0.5 + 0.8 * w[0]; };
    truth.enrollment_effect = [c](const Eigen::RowVectorXd& w, int a) {
      return -(0.4 + 0.9 * w[0] * double(a) + c * w[2]);
    };
    const FunctionBasis cate = main_terms_basis_w(truth.dim);
    // the effect basis omits W3, the direction whose true weight grows
    FunctionBasis effect;
    effect.size = 5;
    effect.eval = [](const Eigen::RowVectorXd& w, int a) {
      Eigen::VectorXd phi(5);
      phi << 1.0, double(a), w[0], w[1], double(a) * w[0];
      return phi;
    };
    const OracleBias ob = oracle_bias_mc(truth, cate, effect, mc_n, seed);
    LadderRung r;
    r.truth_weight = c;
    r.weighted_mse = ob.effect_weighted_mse;
    r.adjusted_r2 = 1.0 - ob.effect_weighted_mse / ob.effect_weighted_var;
    r.oracle_bias = ob.combined.value;
    r.mc_se = ob.combined.se;
    out.push_back(r);
  }
  return out;
}

}  // namespace atmle
