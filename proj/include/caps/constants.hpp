#pragma once

// Validation ranges and fixed tables shared with client code (the UI reads
// this document instead of duplicating the server rules).

#include <nlohmann/json.hpp>

#include "caps/config.hpp"
#include "caps/eis.hpp"
#include "caps/fusion.hpp"
#include "caps/model.hpp"
#include "caps/providers.hpp"

namespace caps {

inline constexpr int kConstantsSchemaVersion = 1;

inline nlohmann::json constants_json(const CapsConfig& config = {}) {
  nlohmann::json tiers = nlohmann::json::array();
  for (auto t : {Tier::T1, Tier::T2, Tier::T3, Tier::T4, Tier::T5})
    tiers.push_back({{"tier", to_string(t)}, {"score", eis::tier_score(t)}});
  return {
      {"schema_version", kConstantsSchemaVersion},
      {"academic",
       {{"gpa", {{"min", 0.0}, {"max", 4.0}, {"type", "number"}}},
        {"sat", {{"min", 400}, {"max", 1600}, {"type", "integer"}}},
        {"act", {{"min", 9}, {"max", 36}, {"type", "integer"}}},
        {"toefl", {{"min", 0}, {"max", 120}, {"type", "integer"}}},
        {"ielts", {{"min", 0.0}, {"max", 9.0}, {"type", "number"}}},
        {"ap5_count", {{"min", 0}, {"type", "integer"}}},
        {"course_difficulty", {{"min", 0.0}, {"max", 1.0}, {"type", "number"}, {"labels", {{"low", 0.25}, {"medium", 0.5}, {"high", 0.9}}}}}}},
      {"essay", {{"prompt_text", {{"required", true}}}, {"essay_text", {{"required", true}}}}},
      {"activities", {{"min_count", 1}, {"max_count", kMaxActivities}, {"tiers", tiers}}},
      {"diversity", {{"flags", config.bonus_table}, {"bonus_cap", config.bonus_cap}}},
      {"modules", fusion::module_names()},
      {"eqi_penalty", {{"lambda", config.eqi_penalty.lambda}, {"k", config.eqi_penalty.k}, {"x0", config.eqi_penalty.x0}}},
      {"eis_gamma", config.eis_gamma},
      {"explanation_top_k", 15},
      {"prompt_version", std::string(kPromptVersion)},
      {"caps_final", {{"min", 0.0}, {"max", 100.0}}},
  };
}

}  // namespace caps
