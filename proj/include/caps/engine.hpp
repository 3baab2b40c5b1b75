#pragma once

#include <future>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caps/cohort.hpp"
#include "caps/config.hpp"
#include "caps/eis.hpp"
#include "caps/eqi.hpp"
#include "caps/errors.hpp"
#include "caps/fusion.hpp"
#include "caps/model.hpp"
#include "caps/providers.hpp"
#include "caps/sas.hpp"
#include "caps/text.hpp"

#ifndef CAPS_VERSION
#define CAPS_VERSION "1.0.0"
#endif

namespace caps {

inline constexpr const char* kLibraryVersion = CAPS_VERSION;

/// Reference population for the cohort-relative SAS softmax. The scaling
/// statistics and PCA weights are fitted once when the context is built.
struct CohortContext {
  std::string id;
  std::vector<AcademicRecord> academic;
  std::vector<cohort::CohortRow> rows;  // module scores, may be empty
  sas::SasCalibration calibration;
  std::vector<double> raw_scores;  // cohort SAS raw scores under the calibration

  static CohortContext build(std::string id, std::vector<AcademicRecord> academic, std::vector<cohort::CohortRow> rows,
                             const CapsConfig& config) {
    CohortContext c;
    c.id = std::move(id);
    for (const auto& a : academic) validate(a);
    c.calibration = sas::fit_calibration(academic, config);
    for (const auto& a : academic) c.raw_scores.push_back(sas::sas_raw(sas::zscore(a, c.calibration.stats), c.calibration.w_fused));
    c.academic = std::move(academic);
    c.rows = std::move(rows);
    return c;
  }
};

struct SasDetail {
  sas::SasScore score;
  std::size_t cohort_size = 0;
};

struct ProfileReport {
  std::string profile_id;
  std::string cohort_id;
  ModuleScores modules;
  fusion::CapsResult caps;
  SasDetail sas;
  eqi::EssayResult eqi;
  eis::EisResult eis;
  nlohmann::json provenance;
};

/// The applicant is scored against the fixed cohort calibration; the
/// softmax runs over the cohort's raw scores plus the applicant's.
inline SasDetail score_sas_in_cohort(const AcademicRecord& record, const CohortContext& cohort, const CapsConfig& config) {
  validate(record);
  SasDetail d;
  d.cohort_size = cohort.raw_scores.size();
  d.score.z = sas::zscore(record, cohort.calibration.stats);
  d.score.raw = sas::sas_raw(d.score.z, cohort.calibration.w_fused);
  auto raws = cohort.raw_scores;
  raws.push_back(d.score.raw);
  if (config.sas_scaling == SasScaling::softmax) {
    d.score.softmax = sas::sas_softmax(raws).back();
    d.score.scaled = sas::sas_scale(d.score.softmax);
  } else {
    const auto [lo, hi] = std::minmax_element(raws.begin(), raws.end());
    d.score.softmax = *hi > *lo ? (d.score.raw - *lo) / (*hi - *lo) : 0.5;
    d.score.scaled = 100.0 * d.score.softmax;
  }
  d.score.unit = d.score.scaled / 100.0;
  return d;
}

/// Immutable scoring state: configuration, providers, trained EQI model and
/// module weights. Safe for concurrent use.
class Engine {
public:
  Engine(CapsConfig config, Providers providers, std::shared_ptr<const eqi::TrainedModel> model,
         fusion::ModuleWeightSources weights)
      : config_(std::move(config)), providers_(std::move(providers)), model_(std::move(model)),
        weights_(std::move(weights)) {
    validate(config_);
    fusion::check_module_weights(weights_.w_final);
    if (model_) model_digest_ = text::hex64(text::fnv1a64(nlohmann::json(*model_).dump()));
  }

  const CapsConfig& config() const noexcept { return config_; }
  const Providers& providers() const noexcept { return providers_; }
  const fusion::ModuleWeightSources& weights() const noexcept { return weights_; }
  bool has_model() const noexcept { return static_cast<bool>(model_); }
  const std::string& model_digest() const noexcept { return model_digest_; }

  const eqi::TrainedModel& model() const {
    if (!model_) throw ModelUnavailableError("no trained EQI model is loaded");
    return *model_;
  }

  ProfileReport score(const ApplicantProfile& profile, const CohortContext& cohort) const {
    validate_profile(profile, config_.flag_vocabulary());
    const auto& m = model();
    ProfileReport r;
    r.profile_id = profile.id;
    r.cohort_id = cohort.id;
    r.sas = score_sas_in_cohort(profile.academic, cohort, config_);
    auto essay = std::async(std::launch::async, [&] { return eqi::score_essay(profile.essay, m, providers_, config_); });
    r.eis = eis::score_profile_eis(profile.activities, config_, providers_);
    r.eqi = essay.get();
    r.modules.sas = r.sas.score.unit;
    r.modules.sas_scaled = r.sas.score.scaled;
    r.modules.eqi = r.eqi.eqi_final;
    r.modules.eis = r.eis.eis;
    r.caps = fusion::score_caps(r.modules, profile.diversity, weights_.w_final, config_);
    r.provenance = provenance();
    return r;
  }

  struct Explanation {
    ExplanationReport report;
    std::string feedback;
    eqi::EssayResult essay;
  };

  Explanation explain(const ApplicantProfile& profile) const {
    validate(profile.essay);
    Explanation e;
    e.essay = eqi::score_essay(profile.essay, model(), providers_, config_);
    e.report = e.essay.explanation;
    e.feedback = providers_.feedback->generate_feedback(e.report, profile.essay);
    return e;
  }

  nlohmann::json provenance() const {
    return {{"library_version", kLibraryVersion},
            {"provider_mode", providers_.mode},
            {"prompt_version", std::string(kPromptVersion)},
            {"weights", {{"provenance", weights_.provenance}, {"data_digest", weights_.data_digest}}},
            {"eqi_model", {{"digest", model_digest_},
                           {"schema_version", eqi::kModelSchemaVersion}}}};
  }

private:
  CapsConfig config_;
  Providers providers_;
  std::shared_ptr<const eqi::TrainedModel> model_;
  fusion::ModuleWeightSources weights_;
  std::string model_digest_;
};

// ---------------------------------------------------------------------------
// What-if

/// Sparse patch: "academic" and "essay" merge field by field; "activities"
/// and "diversity" replace the whole value. The patched profile is
/// re-validated.
inline ApplicantProfile apply_patch(const ApplicantProfile& base, const nlohmann::json& patch,
                                    const std::set<std::string>& vocabulary) {
  if (patch.is_null()) return base;
  if (!patch.is_object()) throw FormatError("overrides", "expected a JSON object");
  nlohmann::json j = base;
  for (const auto& [key, value] : patch.items()) {
    if (key == "academic" || key == "essay") {
      if (!value.is_object()) throw FormatError("overrides." + key, "expected a JSON object");
      for (const auto& [field, v] : value.items()) j[key][field] = v;
      if (key == "academic" && value.contains("act")) j[key].erase("sat");
      if (key == "academic" && value.contains("ielts")) j[key].erase("toefl");
    } else if (key == "activities" || key == "diversity") {
      j[key] = value;
    } else {
      throw FormatError("overrides." + key, "unknown field");
    }
  }
  auto patched = profile_from_json(j);
  validate_profile(patched, vocabulary);
  return patched;
}

struct WhatIfResult {
  ProfileReport base;
  ProfileReport patched;
};

inline WhatIfResult what_if(const Engine& engine, const ApplicantProfile& base, const nlohmann::json& overrides,
                            const CohortContext& cohort) {
  const auto patched = apply_patch(base, overrides, engine.config().flag_vocabulary());
  return {engine.score(base, cohort), engine.score(patched, cohort)};
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const ProfileReport& r) {
  j = {{"profile_id", r.profile_id},
       {"cohort_id", r.cohort_id},
       {"module_scores", r.modules},
       {"caps", r.caps},
       {"sas", {{"z", r.sas.score.z},
                {"raw", r.sas.score.raw},
                {"softmax", r.sas.score.softmax},
                {"scaled", r.sas.score.scaled},
                {"cohort_size", r.sas.cohort_size}}},
       {"eqi", {{"rubric", r.eqi.rubric},
                {"s_align", r.eqi.s_align},
                {"eqi_raw", r.eqi.eqi_raw},
                {"penalty_factor", r.eqi.penalty_factor},
                {"eqi_final", r.eqi.eqi_final}}},
       {"eis", r.eis},
       {"provenance", r.provenance}};
}

inline nlohmann::json delta_json(const WhatIfResult& w) {
  return {{"sas", w.patched.modules.sas - w.base.modules.sas},
          {"eqi", w.patched.modules.eqi - w.base.modules.eqi},
          {"eis", w.patched.modules.eis - w.base.modules.eis},
          {"caps_raw", w.patched.caps.caps_raw - w.base.caps.caps_raw},
          {"caps_final", w.patched.caps.caps_final - w.base.caps.caps_final}};
}

inline void to_json(nlohmann::json& j, const WhatIfResult& w) {
  j = {{"base", w.base}, {"patched", w.patched}, {"delta", delta_json(w)}};
}

}  // namespace caps
