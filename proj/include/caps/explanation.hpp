#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "caps/errors.hpp"

namespace caps {

/// Per-feature Shapley attributions for one prediction.
///
/// `base_value + sum(attributions) == prediction` holds to 1e-6 for exact
/// tree attribution. `prediction` is the unclamped ensemble output; the
/// EQI score itself is that value clamped to [0, 1].
struct ExplanationReport {
  double base_value = 0.0;
  std::vector<std::pair<std::string, double>> attributions;  // schema order
  double prediction = 0.0;
  std::string method = "interventional_tree_shap";
  std::size_t background_size = 0;

  double attribution(const std::string& feature) const {
    for (const auto& [name, value] : attributions)
      if (name == feature) return value;
    throw SchemaMismatchError("no attribution for feature '" + feature + "'");
  }

  double attribution_sum() const {
    double s = 0.0;
    for (const auto& a : attributions) s += a.second;
    return s;
  }

  double additivity_gap() const { return std::abs(base_value + attribution_sum() - prediction); }

  // Largest |attribution| first; ties keep schema order.
  std::vector<std::pair<std::string, double>> top_k(std::size_t k) const {
    auto sorted = attributions;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return std::abs(a.second) > std::abs(b.second); });
    if (sorted.size() > k) sorted.resize(k);
    return sorted;
  }
};

inline void to_json(nlohmann::json& j, const ExplanationReport& r) {
  nlohmann::json attributions = nlohmann::json::array();
  for (const auto& [name, value] : r.attributions) attributions.push_back({{"feature", name}, {"value", value}});
  j = {{"base_value", r.base_value},
       {"prediction", r.prediction},
       {"method", r.method},
       {"background_size", r.background_size},
       {"attributions", attributions}};
}

inline void from_json(const nlohmann::json& j, ExplanationReport& r) {
  r.base_value = j.at("base_value").get<double>();
  r.prediction = j.at("prediction").get<double>();
  r.method = j.value("method", std::string("interventional_tree_shap"));
  r.background_size = j.value("background_size", std::size_t{0});
  r.attributions.clear();
  for (const auto& a : j.at("attributions"))
    r.attributions.emplace_back(a.at("feature").get<std::string>(), a.at("value").get<double>());
}

}  // namespace caps
