#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "caps/csv.hpp"
#include "caps/errors.hpp"
#include "caps/json_util.hpp"
#include "caps/resources.hpp"
#include "caps/text.hpp"

namespace caps {

// ---------------------------------------------------------------------------
// Academic record

inline constexpr std::size_t kSasFeatureCount = 5;
inline const std::array<std::string, kSasFeatureCount> kSasFeatureNames = {
    "gpa", "sat", "toefl", "ap5_count", "course_difficulty"};

struct AcademicRecord {
  double gpa = 0.0;               // unweighted, [0, 4.0]
  int sat = 400;                  // [400, 1600]
  int toefl = 0;                  // [0, 120]
  int ap5_count = 0;              // AP exams scored 5
  double course_difficulty = 0.0; // rigor index, [0, 1]

  std::array<double, kSasFeatureCount> features() const {
    return {gpa, static_cast<double>(sat), static_cast<double>(toefl), static_cast<double>(ap5_count),
            course_difficulty};
  }

  friend bool operator==(const AcademicRecord&, const AcademicRecord&) = default;
};

inline void validate(const AcademicRecord& r) {
  if (!std::isfinite(r.gpa) || r.gpa < 0.0 || r.gpa > 4.0) throw ValidationError("gpa", "out of [0,4.0]");
  if (r.sat < 400 || r.sat > 1600) throw ValidationError("sat", "out of [400,1600]");
  if (r.toefl < 0 || r.toefl > 120) throw ValidationError("toefl", "out of [0,120]");
  if (r.ap5_count < 0) throw ValidationError("ap5_count", "must be >= 0");
  if (!std::isfinite(r.course_difficulty) || r.course_difficulty < 0.0 || r.course_difficulty > 1.0)
    throw ValidationError("course_difficulty", "out of [0,1]");
}

// Ordinal rigor labels accepted at ingestion.
inline std::optional<double> course_difficulty_from_label(std::string_view label) {
  if (label == "low") return 0.25;
  if (label == "medium") return 0.5;
  if (label == "high") return 0.9;
  return std::nullopt;
}

namespace detail {

// Piecewise-linear lookup in a two-column concordance table.
inline double concordance(std::string_view resource, double x, const std::string& field) {
  const auto table = csv::parse_string(std::string(resources::get(resource)), std::string(resource));
  std::vector<std::pair<double, double>> points;
  for (const auto& row : table.rows)
    points.emplace_back(csv::to_double(row[0], std::string(resource)), csv::to_double(row[1], std::string(resource)));
  if (points.empty() || x < points.front().first || x > points.back().first)
    throw ValidationError(field, "outside concordance range [" + std::to_string(points.front().first) + "," +
                                     std::to_string(points.back().first) + "]");
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const auto [x0, y0] = points[i];
    const auto [x1, y1] = points[i + 1];
    if (x >= x0 && x <= x1) return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
  }
  return points.back().second;
}

}  // namespace detail

inline int act_to_sat(int act) {
  return static_cast<int>(std::lround(detail::concordance("concordance/act_to_sat.csv", act, "act")));
}

inline int ielts_to_toefl(double ielts) {
  return static_cast<int>(std::lround(detail::concordance("concordance/ielts_to_toefl.csv", ielts, "ielts")));
}

// ---------------------------------------------------------------------------
// Essay

struct EssaySubmission {
  std::string prompt_text;
  std::string essay_text;

  int word_count() const { return text::word_count(essay_text); }

  friend bool operator==(const EssaySubmission&, const EssaySubmission&) = default;
};

inline void validate(const EssaySubmission& e) {
  if (text::is_blank(e.prompt_text)) throw ValidationError("essay.prompt_text", "must be nonempty");
  if (text::is_blank(e.essay_text)) throw ValidationError("essay.essay_text", "must be nonempty");
}

struct RubricScores {
  double content = 1.0;
  double language = 1.0;
  double structure = 1.0;

  friend bool operator==(const RubricScores&, const RubricScores&) = default;
};

inline void validate(const RubricScores& r) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 1.0 || v > 5.0) throw ValidationError(name, "out of [1,5]");
  };
  check(r.content, "rubric.content");
  check(r.language, "rubric.language");
  check(r.structure, "rubric.structure");
}

inline constexpr std::size_t kEmbeddingDim = 384;

struct EssayEmbedding {
  std::vector<double> values;

  friend bool operator==(const EssayEmbedding&, const EssayEmbedding&) = default;
};

inline void validate(const EssayEmbedding& e) {
  if (e.values.size() != kEmbeddingDim)
    throw ValidationError("embedding", "must have exactly 384 entries (got " + std::to_string(e.values.size()) + ")");
  for (double v : e.values)
    if (!std::isfinite(v)) throw ValidationError("embedding", "contains a non-finite entry");
}

// ---------------------------------------------------------------------------
// Activities

enum class Tier { T1, T2, T3, T4, T5 };

inline std::string to_string(Tier t) {
  static constexpr const char* names[] = {"T1", "T2", "T3", "T4", "T5"};
  return names[static_cast<int>(t)];
}

inline Tier tier_from_string(std::string_view s) {
  if (s == "T1") return Tier::T1;
  if (s == "T2") return Tier::T2;
  if (s == "T3") return Tier::T3;
  if (s == "T4") return Tier::T4;
  if (s == "T5") return Tier::T5;
  throw ValidationError("tier", "must be one of T1..T5 (got '" + std::string(s) + "')");
}

struct Activity {
  std::string description;
  Tier tier = Tier::T5;

  friend bool operator==(const Activity&, const Activity&) = default;
};

inline void validate(const Activity& a) {
  if (text::is_blank(a.description)) throw ValidationError("activity.description", "must be nonempty");
}

inline constexpr std::size_t kMaxActivities = 10;

// ---------------------------------------------------------------------------
// Diversity flags

inline const std::set<std::string>& default_flag_vocabulary() {
  static const std::set<std::string> vocabulary = {"urm", "lgbtq", "rural", "green_card"};
  return vocabulary;
}

struct DiversityFlags {
  std::set<std::string> flags;

  friend bool operator==(const DiversityFlags&, const DiversityFlags&) = default;
};

inline void validate(const DiversityFlags& d, const std::set<std::string>& vocabulary) {
  for (const auto& flag : d.flags)
    if (!vocabulary.contains(flag)) throw UnknownFlagError("diversity flag '" + flag + "' is not in the configured vocabulary");
}

// ---------------------------------------------------------------------------
// Profile

struct ApplicantProfile {
  std::string id;
  AcademicRecord academic;
  EssaySubmission essay;
  std::vector<Activity> activities;
  DiversityFlags diversity;

  friend bool operator==(const ApplicantProfile&, const ApplicantProfile&) = default;
};

/// Returns the profile unchanged when every field invariant holds; otherwise
/// throws for the first violated field, checked in declaration order.
inline const ApplicantProfile& validate_profile(const ApplicantProfile& p,
                                                const std::set<std::string>& vocabulary = default_flag_vocabulary()) {
  if (p.id.empty()) throw ValidationError("id", "must be nonempty");
  validate(p.academic);
  validate(p.essay);
  if (p.activities.empty()) throw ValidationError("activities", "at least one activity");
  if (p.activities.size() > kMaxActivities) throw ValidationError("activities", "at most 10 activities");
  for (const auto& a : p.activities) validate(a);
  validate(p.diversity, vocabulary);
  return p;
}

struct ModuleScores {
  double sas = 0.0;         // [0,1]
  double eqi = 0.0;         // [0,1]
  double eis = 0.0;         // [0,1]
  double sas_scaled = 0.0;  // [0,100]

  friend bool operator==(const ModuleScores&, const ModuleScores&) = default;
};

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const AcademicRecord& r) {
  j = {{"gpa", r.gpa}, {"sat", r.sat}, {"toefl", r.toefl}, {"ap5_count", r.ap5_count},
       {"course_difficulty", r.course_difficulty}};
}

// Reads an academic record; ACT and IELTS are converted to SAT/TOEFL and a
// rigor label may stand in for the numeric course_difficulty.
inline AcademicRecord academic_from_json(const nlohmann::json& j, const std::string& path) {
  using json_util::get;
  AcademicRecord r;
  r.gpa = get<double>(j, "gpa", path);
  if (j.contains("sat"))
    r.sat = get<int>(j, "sat", path);
  else if (j.contains("act"))
    r.sat = act_to_sat(get<int>(j, "act", path));
  else
    throw FormatError(json_util::join_path(path, "sat"), "missing field (or act)");
  if (j.contains("toefl"))
    r.toefl = get<int>(j, "toefl", path);
  else if (j.contains("ielts"))
    r.toefl = ielts_to_toefl(get<double>(j, "ielts", path));
  else
    throw FormatError(json_util::join_path(path, "toefl"), "missing field (or ielts)");
  r.ap5_count = get<int>(j, "ap5_count", path);
  const auto& cd = json_util::require(j, "course_difficulty", path);
  if (cd.is_string()) {
    auto value = course_difficulty_from_label(cd.get<std::string>());
    if (!value) throw ValidationError("course_difficulty", "label must be low, medium or high");
    r.course_difficulty = *value;
  } else {
    r.course_difficulty = get<double>(j, "course_difficulty", path);
  }
  return r;
}

inline void from_json(const nlohmann::json& j, AcademicRecord& r) { r = academic_from_json(j, "academic"); }

inline void to_json(nlohmann::json& j, const EssaySubmission& e) {
  j = {{"prompt_text", e.prompt_text}, {"essay_text", e.essay_text}, {"word_count", e.word_count()}};
}

inline void from_json(const nlohmann::json& j, EssaySubmission& e) {
  e.prompt_text = json_util::get<std::string>(j, "prompt_text", "essay");
  e.essay_text = json_util::get<std::string>(j, "essay_text", "essay");
}

inline void to_json(nlohmann::json& j, const RubricScores& r) {
  j = {{"content", r.content}, {"language", r.language}, {"structure", r.structure}};
}

inline void from_json(const nlohmann::json& j, RubricScores& r) {
  r.content = json_util::get<double>(j, "content", "rubric");
  r.language = json_util::get<double>(j, "language", "rubric");
  r.structure = json_util::get<double>(j, "structure", "rubric");
}

inline void to_json(nlohmann::json& j, const EssayEmbedding& e) { j = {{"values", e.values}}; }

inline void from_json(const nlohmann::json& j, EssayEmbedding& e) {
  e.values = json_util::get<std::vector<double>>(j, "values", "embedding");
}

inline void to_json(nlohmann::json& j, const Tier& t) { j = to_string(t); }

inline void from_json(const nlohmann::json& j, Tier& t) {
  if (!j.is_string()) throw FormatError("tier", "expected a string");
  t = tier_from_string(j.get<std::string>());
}

inline void to_json(nlohmann::json& j, const Activity& a) { j = {{"description", a.description}, {"tier", a.tier}}; }

inline Activity activity_from_json(const nlohmann::json& j, const std::string& path) {
  Activity a;
  a.description = json_util::get<std::string>(j, "description", path);
  const auto& tier = json_util::require(j, "tier", path);
  if (!tier.is_string()) throw FormatError(json_util::join_path(path, "tier"), "expected a string");
  a.tier = tier_from_string(tier.get<std::string>());
  return a;
}

inline void from_json(const nlohmann::json& j, Activity& a) { a = activity_from_json(j, "activity"); }

inline std::vector<Activity> activities_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) throw FormatError(path, "expected an array");
  std::vector<Activity> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(activity_from_json(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline void to_json(nlohmann::json& j, const DiversityFlags& d) { j = {{"flags", d.flags}}; }

inline DiversityFlags diversity_from_json(const nlohmann::json& j, const std::string& path) {
  const nlohmann::json& list = j.is_object() ? json_util::require(j, "flags", path) : j;
  if (!list.is_array()) throw FormatError(path, "expected an array of flag names");
  DiversityFlags d;
  for (const auto& flag : list) {
    if (!flag.is_string()) throw FormatError(path, "flag names must be strings");
    d.flags.insert(flag.get<std::string>());
  }
  return d;
}

inline void from_json(const nlohmann::json& j, DiversityFlags& d) { d = diversity_from_json(j, "diversity"); }

inline void to_json(nlohmann::json& j, const ApplicantProfile& p) {
  j = {{"id", p.id}, {"academic", p.academic}, {"essay", p.essay}, {"activities", p.activities},
       {"diversity", p.diversity}};
}

inline ApplicantProfile profile_from_json(const nlohmann::json& j) {
  ApplicantProfile p;
  const auto& id = json_util::require(j, "id", "");
  p.id = id.is_string() ? id.get<std::string>() : id.dump();
  p.academic = academic_from_json(json_util::require(j, "academic", ""), "academic");
  from_json(json_util::require(j, "essay", ""), p.essay);
  p.activities = activities_from_json(json_util::require(j, "activities", ""), "activities");
  if (j.contains("diversity")) p.diversity = diversity_from_json(j.at("diversity"), "diversity");
  return p;
}

inline void from_json(const nlohmann::json& j, ApplicantProfile& p) { p = profile_from_json(j); }

inline void to_json(nlohmann::json& j, const ModuleScores& m) {
  j = {{"sas", m.sas}, {"eqi", m.eqi}, {"eis", m.eis}, {"sas_scaled", m.sas_scaled}};
}

inline void from_json(const nlohmann::json& j, ModuleScores& m) {
  m.sas = json_util::get<double>(j, "sas", "module_scores");
  m.eqi = json_util::get<double>(j, "eqi", "module_scores");
  m.eis = json_util::get<double>(j, "eis", "module_scores");
  m.sas_scaled = json_util::get_or<double>(j, "sas_scaled", "module_scores", m.sas * 100.0);
}

}  // namespace caps
