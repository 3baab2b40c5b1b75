#pragma once

// Wiring shared by the command-line tool and the server: loading config,
// artifacts and cohort files into a ready Engine.

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "caps/cohort.hpp"
#include "caps/config.hpp"
#include "caps/engine.hpp"
#include "caps/eqi.hpp"
#include "caps/fusion.hpp"
#include "caps/providers.hpp"
#include "caps/providers_live.hpp"

namespace caps::app {

struct EngineOptions {
  std::string config_path;   // optional CapsConfig JSON (may carry a "provider" block)
  std::string model_path;    // optional trained EQI model
  std::string weights_path;  // preset name or ModuleWeightSources JSON; table4 when empty
  bool live = false;
};

inline nlohmann::json config_document(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  try {
    return read_json_file(path);
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
}

inline Providers make_providers(const nlohmann::json& config_doc, const CapsConfig& config, bool live) {
  if (live) return live_providers(provider_config_from(config_doc));
  return mock_providers(config.provider_seed);
}

inline std::shared_ptr<const Engine> load_engine(const EngineOptions& o) {
  const auto doc = config_document(o.config_path);
  auto config = merge_config(CapsConfig{}, doc);
  auto providers = make_providers(doc, config, o.live);
  std::shared_ptr<const eqi::TrainedModel> model;
  if (!o.model_path.empty()) model = std::make_shared<const eqi::TrainedModel>(cohort::load_artifact<eqi::TrainedModel>(o.model_path));
  auto preset = fusion::preset_sources(o.weights_path.empty() ? "table4" : o.weights_path, config.caps_weights);
  auto weights = preset ? *preset : cohort::load_artifact<fusion::ModuleWeightSources>(o.weights_path);
  return std::make_shared<const Engine>(std::move(config), std::move(providers), std::move(model), std::move(weights));
}

/// A cohort file is either a generator spec (.json) or academic records
/// (.csv with id,gpa,sat,toefl,ap5_count,course_difficulty).
inline CohortContext load_cohort_context(const std::string& path, const CapsConfig& config, std::string id = {}) {
  if (id.empty()) id = std::filesystem::path(path).stem().string();
  if (std::filesystem::path(path).extension() == ".json") {
    const auto spec = cohort::spec_from_json(json_util::parse(cohort::read_file(path), path));
    auto generated = cohort::generate_cohort(spec);
    if (generated.academic.empty()) generated.academic = cohort::generate_academic(spec.n, spec.seed + 1);
    return CohortContext::build(std::move(id), std::move(generated.academic), std::move(generated.rows), config);
  }
  auto in = cohort::open_input(path);
  return CohortContext::build(std::move(id), cohort::read_academic_csv(in, path), {}, config);
}

inline ApplicantProfile load_profile(const std::string& path) {
  return profile_from_json(json_util::parse(cohort::read_file(path), path));
}

/// Rows for module-weight derivation: module scores as features, tiers as
/// labels.
inline fusion::LabelledScores labelled_scores(const std::vector<cohort::CohortRow>& rows) {
  fusion::LabelledScores d;
  d.x.resize(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.x.row(static_cast<Eigen::Index>(i)) << rows[i].scores.sas, rows[i].scores.eqi, rows[i].scores.eis;
    d.labels.push_back(rows[i].tier);
  }
  return d;
}

inline std::vector<eqi::Example> essay_examples(const std::vector<cohort::EssayRecord>& records, const Providers& providers) {
  std::vector<std::pair<EssaySubmission, double>> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back({{r.prompt_text, r.essay_text}, r.label});
  return eqi::featurize(rows, providers);
}

/// Quick grid: the single config depth 3, lr 0.1, 200 trees, full sampling.
inline std::vector<eqi::HyperParams> training_grid(bool quick) {
  auto grid = eqi::default_grid();
  if (quick) grid = {grid[15]};
  return grid;
}

inline std::string training_report(const eqi::TrainedModel& m) {
  std::ostringstream out;
  out << "Best parameters: " << nlohmann::json(m.best_params).dump() << '\n';
  out << "Best CV score (negative MSE): " << m.best_cv_neg_mse << '\n';
  out << "Test MSE: " << m.test.mse << '\n';
  out << "Test R^2: " << m.test.r2 << '\n';
  out << "Rows: " << m.n_train << " train, " << m.n_test << " test (seed " << m.seed << ")\n";
  return out.str();
}

}  // namespace caps::app
