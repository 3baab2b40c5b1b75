#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "caps/errors.hpp"
#include "caps/json_util.hpp"
#include "caps/model.hpp"
#include "caps/weights.hpp"

namespace caps {

enum class SasScaling { softmax, minmax };

struct PenaltyParams {
  double lambda = 0.5;  // minimum penalty factor
  double k = 4.0;       // sigmoid steepness
  double x0 = 0.3;      // alignment threshold
};

struct SourceCoefficients {
  double alpha = 0.3;  // logistic-regression weights
  double beta = 0.3;   // tree-importance weights
  double gamma = 0.4;  // expert prior
};

inline WeightVector default_manual_sas_weights() {
  return WeightVector::exact({{"gpa", 0.40}, {"sat", 0.15}, {"toefl", 0.10}, {"ap5_count", 0.10},
                              {"course_difficulty", 0.25}});
}

inline WeightVector default_expert_module_weights() {
  return WeightVector::exact({{"SAS", 0.50}, {"EQI", 0.30}, {"EIS", 0.20}});
}

struct CapsConfig {
  WeightVector manual_sas_weights = default_manual_sas_weights();
  double alpha_pca = 1.0;
  double beta_pca = 0.5;
  double alpha_fusion = 0.1;
  SasScaling sas_scaling = SasScaling::softmax;
  PenaltyParams eqi_penalty;
  double eis_gamma = 0.5;
  SourceCoefficients caps_weights;
  WeightVector expert_module_weights = default_expert_module_weights();
  std::map<std::string, double> bonus_table = {{"urm", 3.0}, {"lgbtq", 3.0}, {"rural", 3.0}, {"green_card", 3.0}};
  double bonus_cap = 12.0;
  double logistic_l2 = 0.1;      // L2 strength for the module-weight logistic model
  std::uint64_t provider_seed = 0;

  std::set<std::string> flag_vocabulary() const {
    std::set<std::string> out;
    for (const auto& [flag, points] : bonus_table) out.insert(flag);
    return out;
  }
};

inline void validate(const CapsConfig& c) {
  auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (!c.manual_sas_weights.same_names(default_manual_sas_weights()))
    throw ConfigError("manual_sas_weights must cover gpa, sat, toefl, ap5_count, course_difficulty");
  if (!std::isfinite(c.alpha_pca) || !std::isfinite(c.beta_pca)) throw ConfigError("alpha_pca/beta_pca must be finite");
  if (!in_unit(c.alpha_fusion)) throw ConfigError("alpha_fusion must be on [0,1]");
  if (!in_unit(c.eqi_penalty.lambda)) throw ConfigError("eqi_penalty.lambda must be on [0,1]");
  if (!(c.eqi_penalty.k > 0.0) || !std::isfinite(c.eqi_penalty.k)) throw ConfigError("eqi_penalty.k must be > 0");
  if (!in_unit(c.eqi_penalty.x0)) throw ConfigError("eqi_penalty.x0 must be on [0,1]");
  if (!in_unit(c.eis_gamma)) throw ConfigError("eis_gamma must be on [0,1]");
  const auto& w = c.caps_weights;
  if (w.alpha < 0 || w.beta < 0 || w.gamma < 0 || std::abs(w.alpha + w.beta + w.gamma - 1.0) > kUnitSumTolerance)
    throw ConfigError("caps_weights alpha+beta+gamma must be non-negative and sum to 1");
  if (!c.expert_module_weights.same_names(default_expert_module_weights()))
    throw ConfigError("expert_module_weights must cover SAS, EQI, EIS");
  if (!(c.bonus_cap >= 0.0)) throw ConfigError("bonus_cap must be >= 0");
  for (const auto& [flag, points] : c.bonus_table)
    if (!(points >= 0.0)) throw ConfigError("bonus_table." + flag + " must be >= 0");
  if (!(c.logistic_l2 > 0.0)) throw ConfigError("logistic_l2 must be > 0");
}

inline std::string to_string(SasScaling s) { return s == SasScaling::softmax ? "softmax" : "minmax"; }

inline void to_json(nlohmann::json& j, const CapsConfig& c) {
  nlohmann::json manual = nlohmann::json::object();
  for (const auto& [name, w] : c.manual_sas_weights.entries()) manual[name] = w;
  nlohmann::json expert = nlohmann::json::object();
  for (const auto& [name, w] : c.expert_module_weights.entries()) expert[name] = w;
  j = {{"manual_sas_weights", manual},
       {"alpha_pca", c.alpha_pca},
       {"beta_pca", c.beta_pca},
       {"alpha_fusion", c.alpha_fusion},
       {"sas_scaling", to_string(c.sas_scaling)},
       {"eqi_penalty", {{"lambda", c.eqi_penalty.lambda}, {"k", c.eqi_penalty.k}, {"x0", c.eqi_penalty.x0}}},
       {"eis_gamma", c.eis_gamma},
       {"caps_weights", {{"alpha", c.caps_weights.alpha}, {"beta", c.caps_weights.beta}, {"gamma", c.caps_weights.gamma}}},
       {"expert_module_weights", expert},
       {"bonus_table", c.bonus_table},
       {"bonus_cap", c.bonus_cap},
       {"logistic_l2", c.logistic_l2},
       {"provider_seed", c.provider_seed}};
}

namespace detail {

// Object-form weights re-ordered to a canonical name list.
inline WeightVector ordered_weights(const nlohmann::json& j, const std::vector<std::string>& names,
                                    const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + " must be an object of name -> weight");
  if (j.size() != names.size()) throw ConfigError(path + " must have exactly " + std::to_string(names.size()) + " entries");
  std::vector<WeightVector::Entry> entries;
  for (const auto& name : names) {
    if (!j.contains(name)) throw ConfigError(path + " is missing '" + name + "'");
    entries.emplace_back(name, j.at(name).get<double>());
  }
  try {
    return WeightVector::exact(std::move(entries));
  } catch (const ValidationError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace detail

/// Overlays the keys present in `j` on top of `base`. Unknown keys are rejected
/// so typos in config files surface immediately.
inline CapsConfig merge_config(CapsConfig base, const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "manual_sas_weights", "alpha_pca",     "beta_pca",  "alpha_fusion", "sas_scaling",
      "eqi_penalty",        "eis_gamma",     "caps_weights", "expert_module_weights", "bonus_table",
      "bonus_cap",          "logistic_l2",   "provider_seed", "provider"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  try {
    if (j.contains("manual_sas_weights")) {
      std::vector<std::string> names(kSasFeatureNames.begin(), kSasFeatureNames.end());
      base.manual_sas_weights = detail::ordered_weights(j["manual_sas_weights"], names, "manual_sas_weights");
    }
    if (j.contains("alpha_pca")) base.alpha_pca = j["alpha_pca"].get<double>();
    if (j.contains("beta_pca")) base.beta_pca = j["beta_pca"].get<double>();
    if (j.contains("alpha_fusion")) base.alpha_fusion = j["alpha_fusion"].get<double>();
    if (j.contains("sas_scaling")) {
      const auto s = j["sas_scaling"].get<std::string>();
      if (s == "softmax")
        base.sas_scaling = SasScaling::softmax;
      else if (s == "minmax")
        base.sas_scaling = SasScaling::minmax;
      else
        throw ConfigError("sas_scaling must be softmax or minmax");
    }
    if (j.contains("eqi_penalty")) {
      const auto& p = j["eqi_penalty"];
      if (p.contains("lambda")) base.eqi_penalty.lambda = p["lambda"].get<double>();
      if (p.contains("k")) base.eqi_penalty.k = p["k"].get<double>();
      if (p.contains("x0")) base.eqi_penalty.x0 = p["x0"].get<double>();
    }
    if (j.contains("eis_gamma")) base.eis_gamma = j["eis_gamma"].get<double>();
    if (j.contains("caps_weights")) {
      const auto& w = j["caps_weights"];
      if (w.contains("alpha")) base.caps_weights.alpha = w["alpha"].get<double>();
      if (w.contains("beta")) base.caps_weights.beta = w["beta"].get<double>();
      if (w.contains("gamma")) base.caps_weights.gamma = w["gamma"].get<double>();
    }
    if (j.contains("expert_module_weights"))
      base.expert_module_weights = detail::ordered_weights(j["expert_module_weights"], {"SAS", "EQI", "EIS"},
                                                           "expert_module_weights");
    if (j.contains("bonus_table")) base.bonus_table = j["bonus_table"].get<std::map<std::string, double>>();
    if (j.contains("bonus_cap")) base.bonus_cap = j["bonus_cap"].get<double>();
    if (j.contains("logistic_l2")) base.logistic_l2 = j["logistic_l2"].get<double>();
    if (j.contains("provider_seed")) base.provider_seed = j["provider_seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  validate(base);
  return base;
}

inline void from_json(const nlohmann::json& j, CapsConfig& c) { c = merge_config(CapsConfig{}, j); }

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return json_util::parse(buffer.str(), path);
}

inline CapsConfig load_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = read_json_file(path);
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  return merge_config(CapsConfig{}, j);
}

}  // namespace caps
