#include "atmle/config.hpp"

#include <set>

#include <json.hpp>

namespace atmle {

namespace {

using json = nlohmann::ordered_json;

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string treatment_name(TreatmentTerms t) {
  switch (t) {
    case TreatmentTerms::none: return "none";
    case TreatmentTerms::main_effect: return "main";
    case TreatmentTerms::interactions: return "interactions";
  }
  return "?";
}

TreatmentTerms treatment_from(const std::string& s) {
  if (s == "none") return TreatmentTerms::none;
  if (s == "main") return TreatmentTerms::main_effect;
  if (s == "interactions") return TreatmentTerms::interactions;
  throw ConfigError("unknown treatment-terms value '" + s +
                    "' (expected none, main, or interactions)");
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");
  require_keys(root, "config root",
               {"seed", "workers", "replications", "external_sizes", "strategies", "k",
                "m", "trim_policy", "dgp", "estimator"});

  ExperimentConfig cfg;
  read_field(root, "seed", cfg.master_seed);
  read_field(root, "workers", cfg.workers);
  read_field(root, "replications", cfg.replications);
  read_field(root, "external_sizes", cfg.external_sizes);
  if (root.contains("strategies")) {
    cfg.strategies.clear();
    for (const auto& s : root.at("strategies")) {
      if (!s.is_string()) throw ConfigError("strategies must be strings");
      cfg.strategies.push_back(strategy_from_name(s.get<std::string>()));
    }
  }
  read_field(root, "k", cfg.k);
  read_field(root, "m", cfg.m);
  if (root.contains("trim_policy")) {
    const std::string p = root.at("trim_policy").get<std::string>();
    if (p == "best_distance") cfg.trim_policy = TrimPolicy::best_distance;
    else if (p == "random") cfg.trim_policy = TrimPolicy::random;
    else throw ConfigError("unknown trim_policy '" + p + "'");
  }

  if (root.contains("dgp")) {
    const json& dgp = root.at("dgp");
    require_keys(dgp, "dgp", {"n_rct", "source_sizes", "uy_sd", "randomization_prob"});
    read_field(dgp, "n_rct", cfg.dgp.n_rct);
    if (dgp.contains("source_sizes")) {
      const auto sizes = dgp.at("source_sizes").get<std::vector<int>>();
      if (sizes.size() != 5) {
        throw ConfigError("dgp.source_sizes must list exactly 5 sizes");
      }
      for (size_t j = 0; j < 5; ++j) cfg.dgp.source_sizes[j] = sizes[j];
    }
    read_field(dgp, "uy_sd", cfg.dgp.uy_sd);
    read_field(dgp, "randomization_prob", cfg.dgp.randomization_prob);
  }

  if (root.contains("estimator")) {
    const json& est = root.at("estimator");
    require_keys(est, "estimator",
                 {"basis", "knots", "depth", "effect_treatment", "cv_folds", "n_lambda",
                  "lambda_min_ratio", "lambda_rule", "prob_clip", "cross_fit_folds", "alpha"});
    std::string basis = "main_terms";
    int knots = 3, depth = 1;
    read_field(est, "basis", basis);
    read_field(est, "knots", knots);
    read_field(est, "depth", depth);
    std::string effect_treatment = "main";
    read_field(est, "effect_treatment", effect_treatment);
    EstimatorOptions& eo = cfg.estimator;
    if (basis == "main_terms") {
      eo.outcome_basis = BasisSpec::main_terms();
      eo.cate_basis = BasisSpec::main_terms();
      eo.effect_basis = BasisSpec::main_terms(treatment_from(effect_treatment));
      eo.qbar_basis = BasisSpec::main_terms(TreatmentTerms::interactions);
    } else if (basis == "hal0") {
      eo.outcome_basis = BasisSpec::hal0(knots, depth);
      eo.cate_basis = BasisSpec::hal0(knots, depth);
      eo.effect_basis = BasisSpec::hal0(knots, depth, treatment_from(effect_treatment));
      eo.qbar_basis = BasisSpec::hal0(knots, depth, TreatmentTerms::interactions);
    } else {
      throw ConfigError("unknown basis '" + basis + "' (expected main_terms or hal0)");
    }
    read_field(est, "cv_folds", eo.fit.cv_folds);
    read_field(est, "n_lambda", eo.fit.n_lambda);
    read_field(est, "lambda_min_ratio", eo.fit.lambda_min_ratio);
    if (est.contains("lambda_rule")) {
      const std::string rule = est.at("lambda_rule").get<std::string>();
      if (rule == "cv_min") eo.fit.lambda_rule = LambdaRule::cv_min;
      else if (rule == "one_se") eo.fit.lambda_rule = LambdaRule::one_se;
      else throw ConfigError("unknown lambda_rule '" + rule + "'");
    }
    read_field(est, "prob_clip", eo.prob_clip);
    read_field(est, "cross_fit_folds", eo.cross_fit_folds);
    read_field(est, "alpha", eo.alpha);
  }

  if (cfg.replications < 2) throw ConfigError("replications must be at least 2");
  if (cfg.k < 1) throw ConfigError("k must be at least 1");
  if (cfg.m < 0) throw ConfigError("m must be nonnegative");
  for (int s : cfg.external_sizes) {
    if (s < 1) throw ConfigError("external_sizes must be positive");
  }
  if (cfg.strategies.empty()) throw ConfigError("strategies must be nonempty");
  return cfg;
}

std::string resolved_experiment_config(const ExperimentConfig& cfg) {
  json root;
  root["seed"] = cfg.master_seed;
  root["workers"] = cfg.workers;
  root["replications"] = cfg.replications;
  root["external_sizes"] = cfg.external_sizes;
  std::vector<std::string> strategies;
  for (Strategy s : cfg.strategies) strategies.push_back(strategy_name(s));
  root["strategies"] = strategies;
  root["k"] = cfg.k;
  root["m"] = cfg.m;
  root["trim_policy"] =
      cfg.trim_policy == TrimPolicy::best_distance ? "best_distance" : "random";
  root["dgp"] = {{"n_rct", cfg.dgp.n_rct},
                 {"source_sizes", cfg.dgp.source_sizes},
                 {"uy_sd", cfg.dgp.uy_sd},
                 {"randomization_prob", cfg.dgp.randomization_prob}};
  const EstimatorOptions& eo = cfg.estimator;
  root["estimator"] = {
      {"basis", eo.cate_basis.scheme == BasisScheme::main_terms ? "main_terms" : "hal0"},
      {"knots", eo.cate_basis.knots_per_dim},
      {"depth", eo.cate_basis.max_interaction_depth},
      {"effect_treatment", treatment_name(eo.effect_basis.treatment)},
      {"cv_folds", eo.fit.cv_folds},
      {"n_lambda", eo.fit.n_lambda},
      {"lambda_min_ratio", eo.fit.lambda_min_ratio},
      {"lambda_rule", eo.fit.lambda_rule == LambdaRule::cv_min ? "cv_min" : "one_se"},
      {"prob_clip", eo.prob_clip},
      {"cross_fit_folds", eo.cross_fit_folds},
      {"alpha", eo.alpha}};
  return root.dump(2) + "\n";
}

}  // namespace atmle
