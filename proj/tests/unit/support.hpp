#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "caps/cohort.hpp"
#include "caps/eqi.hpp"
#include "caps/providers.hpp"

namespace caps::test {

inline std::string data_path(const std::string& relative) { return std::string(CAPS_TEST_DATA) + "/" + relative; }

inline nlohmann::json load_json(const std::string& relative) {
  return nlohmann::json::parse(cohort::read_file(data_path(relative)));
}

inline ApplicantProfile fixture_profile(const std::string& name) {
  return profile_from_json(load_json("fixtures/" + name + ".json"));
}

/// Quick-grid model on the 200-row synthetic essay set, trained once per
/// process.
inline std::shared_ptr<const eqi::TrainedModel> quick_model() {
  static const auto model = [] {
    const auto providers = mock_providers();
    const auto records = cohort::generate_essays(200, 42, *providers.rubric);
    std::vector<std::pair<EssaySubmission, double>> rows;
    for (const auto& r : records) rows.push_back({{r.prompt_text, r.essay_text}, r.label});
    auto grid = eqi::default_grid();
    return std::make_shared<const eqi::TrainedModel>(eqi::train_eqi(eqi::featurize(rows, providers), {grid[15]}));
  }();
  return model;
}

}  // namespace caps::test
