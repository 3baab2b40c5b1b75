#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "caps/config.hpp"
#include "caps/errors.hpp"
#include "caps/gbt.hpp"
#include "caps/logistic.hpp"
#include "caps/model.hpp"
#include "caps/text.hpp"
#include "caps/weights.hpp"

namespace caps::fusion {

inline const std::vector<std::string>& module_names() {
  static const std::vector<std::string> names = {"SAS", "EQI", "EIS"};
  return names;
}

inline constexpr std::size_t kMinWeightRows = 20;
inline constexpr int kSchemaVersion = 1;

inline WeightVector module_weights(double sas, double eqi, double eis) {
  return WeightVector::exact({{"SAS", sas}, {"EQI", eqi}, {"EIS", eis}});
}

// Printed weight columns of the module-weight table.
namespace table4 {
inline WeightVector logistic() { return module_weights(0.35, 0.33, 0.32); }
inline WeightVector tree() { return module_weights(0.58, 0.18, 0.24); }
inline WeightVector expert() { return module_weights(0.50, 0.30, 0.20); }
inline WeightVector printed_final() { return module_weights(0.40, 0.31, 0.29); }
}  // namespace table4

/// One labelled row per applicant: the [0,1] module scores and a tier in 0..4.
struct LabelledScores {
  Eigen::MatrixXd x;  // n x 3, columns SAS, EQI, EIS
  std::vector<int> labels;
};

namespace detail {

inline WeightVector importance_to_weights(const std::vector<double>& importance) {
  double total = 0.0;
  for (double v : importance) total += v;
  if (!(total > 0.0)) return WeightVector::uniform(module_names());
  std::vector<WeightVector::Entry> entries;
  for (std::size_t j = 0; j < module_names().size(); ++j) entries.emplace_back(module_names()[j], importance[j]);
  return WeightVector::normalized(std::move(entries));
}

// Maps the labels that occur onto 0..K-1 (ascending).
inline std::vector<int> compact_labels(std::span<const int> labels, int& n_classes) {
  std::map<int, int> index;
  for (int l : labels) index.emplace(l, 0);
  int next = 0;
  for (auto& [label, i] : index) i = next++;
  n_classes = next;
  std::vector<int> out;
  for (int l : labels) out.push_back(index.at(l));
  return out;
}

inline void check_rows(const LabelledScores& d) {
  if (d.x.cols() != 3) throw FeatureMismatchError("module score matrix must have 3 columns");
  if (static_cast<std::size_t>(d.x.rows()) != d.labels.size()) throw InsufficientDataError("labels and rows differ");
  if (d.labels.size() < kMinWeightRows)
    throw InsufficientDataError("weight derivation needs at least 20 rows, got " + std::to_string(d.labels.size()));
  if (std::set<int>(d.labels.begin(), d.labels.end()).size() < 2)
    throw DegenerateLabelsError("weight derivation needs at least 2 distinct labels");
}

}  // namespace detail

/// Features are z-scored, a multinomial logistic model is fitted, and each
/// module's importance is its mean |coefficient| across classes. Constant
/// features give all-zero coefficients and hence uniform weights.
inline WeightVector derive_logistic_weights(const LabelledScores& data, double l2) {
  detail::check_rows(data);
  int k = 0;
  const auto y = detail::compact_labels(data.labels, k);
  const auto z = logistic::Standardizer::fit(data.x).transform(data.x);
  const auto model = logistic::fit(z, y, k, l2);
  std::vector<double> importance(3, 0.0);
  for (Eigen::Index j = 0; j < 3; ++j) importance[static_cast<std::size_t>(j)] = model.coef.col(j).cwiseAbs().mean();
  return detail::importance_to_weights(importance);
}

inline gbt::TreeParams default_tree_weight_params() {
  gbt::TreeParams p;
  p.max_depth = 3;
  p.learning_rate = 0.1;
  p.n_estimators = 100;
  return p;
}

/// Gain importances of a boosted classifier on the raw (unscaled) scores.
inline WeightVector derive_tree_weights(const LabelledScores& data, const gbt::TreeParams& params,
                                        std::uint64_t seed) {
  detail::check_rows(data);
  int k = 0;
  const auto y = detail::compact_labels(data.labels, k);
  gbt::Matrix x(static_cast<std::size_t>(data.x.rows()), 3);
  for (Eigen::Index i = 0; i < data.x.rows(); ++i)
    for (Eigen::Index j = 0; j < 3; ++j) x(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = data.x(i, j);
  const auto model = gbt::fit_multiclass(x, y, k, params, seed);
  return detail::importance_to_weights(model.gain_importance);
}

inline void validate(const SourceCoefficients& c) {
  if (c.alpha < 0.0 || c.beta < 0.0 || c.gamma < 0.0)
    throw CoefficientSumError("source coefficients must be non-negative");
  const double sum = c.alpha + c.beta + c.gamma;
  if (std::abs(sum - 1.0) > kUnitSumTolerance)
    throw CoefficientSumError("alpha + beta + gamma must equal 1 within 1e-9 (got " + std::to_string(sum) + ")");
}

/// w_i = alpha w_log,i + beta w_xgb,i + gamma w_exp,i, negatives clamped,
/// then normalized to unit sum.
inline WeightVector fuse_caps_weights(const WeightVector& w_log, const WeightVector& w_xgb, const WeightVector& w_exp,
                                      const SourceCoefficients& c) {
  validate(c);
  if (!w_log.same_names(w_xgb) || !w_log.same_names(w_exp))
    throw FeatureMismatchError("weight sources cover different modules");
  std::vector<WeightVector::Entry> fused;
  for (std::size_t i = 0; i < w_log.size(); ++i)
    fused.emplace_back(w_log.name(i), c.alpha * w_log[i] + c.beta * w_xgb[i] + c.gamma * w_exp[i]);
  return WeightVector::clamped(std::move(fused));
}

// ---------------------------------------------------------------------------
// Score fusion

inline std::array<double, 3> module_vector(const ModuleScores& m) { return {m.sas, m.eqi, m.eis}; }

inline void check_module_weights(const WeightVector& w) {
  if (w.names() != module_names()) throw FeatureMismatchError("CAPS weights must cover exactly SAS, EQI, EIS in that order");
}

inline double caps_raw(const ModuleScores& m, const WeightVector& w) {
  check_module_weights(w);
  for (double v : module_vector(m))
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("module score", "out of [0,1]");
  return std::clamp(w.dot(module_vector(m)), 0.0, 1.0);
}

struct Contribution {
  std::string module;
  double score = 0.0;
  double weight = 0.0;
  double contribution = 0.0;  // weight * score
};

struct CapsResult {
  double caps_raw = 0.0;
  double bonus_applied = 0.0;
  double caps_final = 0.0;  // [0,100]
  std::vector<Contribution> breakdown;
};

inline double bonus_points(const DiversityFlags& flags, const CapsConfig& config) {
  double total = 0.0;
  for (const auto& flag : flags.flags) {
    const auto it = config.bonus_table.find(flag);
    if (it == config.bonus_table.end())
      throw UnknownFlagError("diversity flag '" + flag + "' is not in the configured vocabulary");
    total += it->second;
  }
  return std::min(config.bonus_cap, total);
}

inline CapsResult apply_diversity_bonus(double raw, const DiversityFlags& flags, const CapsConfig& config) {
  if (!(raw >= 0.0 && raw <= 1.0)) throw ValidationError("caps_raw", "out of [0,1]");
  CapsResult r;
  r.caps_raw = raw;
  r.bonus_applied = bonus_points(flags, config);
  r.caps_final = std::clamp(raw * 100.0 + r.bonus_applied, 0.0, 100.0);
  return r;
}

inline CapsResult score_caps(const ModuleScores& m, const DiversityFlags& flags, const WeightVector& w,
                             const CapsConfig& config) {
  auto r = apply_diversity_bonus(caps_raw(m, w), flags, config);
  const auto x = module_vector(m);
  for (std::size_t i = 0; i < 3; ++i) r.breakdown.push_back({module_names()[i], x[i], w[i], w[i] * x[i]});
  return r;
}

// ---------------------------------------------------------------------------
// Weight sources with provenance

struct ModuleWeightSources {
  WeightVector w_log;
  WeightVector w_xgb;
  WeightVector w_exp;
  WeightVector w_final;
  SourceCoefficients coefficients;
  std::string provenance;   // "table4", "table4_printed", "derived"
  std::string data_digest;  // FNV-1a over the training rows, empty for presets
  double logistic_l2 = 0.0;
};

inline ModuleWeightSources table4_sources(const SourceCoefficients& c = {}) {
  ModuleWeightSources s;
  s.w_log = table4::logistic();
  s.w_xgb = table4::tree();
  s.w_exp = table4::expert();
  s.coefficients = c;
  s.w_final = fuse_caps_weights(s.w_log, s.w_xgb, s.w_exp, c);
  s.provenance = "table4";
  return s;
}

/// Same source columns, but w_final is the printed column rather than the fused one.
inline ModuleWeightSources table4_printed_sources(const SourceCoefficients& c = {}) {
  auto s = table4_sources(c);
  s.w_final = table4::printed_final();
  s.provenance = "table4_printed";
  return s;
}

/// Resolves a named preset; returns nullopt for anything else.
inline std::optional<ModuleWeightSources> preset_sources(const std::string& name, const SourceCoefficients& c = {}) {
  if (name == "table4") return table4_sources(c);
  if (name == "table4_printed") return table4_printed_sources(c);
  return std::nullopt;
}

inline std::string digest(const LabelledScores& data) {
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index i = 0; i < data.x.rows(); ++i)
    out << data.x(i, 0) << ',' << data.x(i, 1) << ',' << data.x(i, 2) << ',' << data.labels[static_cast<std::size_t>(i)]
        << '\n';
  return text::hex64(text::fnv1a64(out.str()));
}

inline ModuleWeightSources derive_sources(const LabelledScores& data, const CapsConfig& config, std::uint64_t seed) {
  ModuleWeightSources s;
  s.w_log = derive_logistic_weights(data, config.logistic_l2);
  s.w_xgb = derive_tree_weights(data, default_tree_weight_params(), seed);
  s.w_exp = config.expert_module_weights;
  s.coefficients = config.caps_weights;
  s.w_final = fuse_caps_weights(s.w_log, s.w_xgb, s.w_exp, s.coefficients);
  s.provenance = "derived";
  s.data_digest = digest(data);
  s.logistic_l2 = config.logistic_l2;
  return s;
}

struct FusionCheck {
  WeightVector computed;
  WeightVector printed;
  double max_abs_diff = 0.0;
  bool consistent = false;  // |diff| <= 0.005 everywhere
};

/// Compares the formula applied to the printed source columns against the
/// printed final column.
inline FusionCheck check_table4(const SourceCoefficients& c = {}) {
  FusionCheck f;
  f.computed = fuse_caps_weights(table4::logistic(), table4::tree(), table4::expert(), c);
  f.printed = table4::printed_final();
  for (std::size_t i = 0; i < 3; ++i) f.max_abs_diff = std::max(f.max_abs_diff, std::abs(f.computed[i] - f.printed[i]));
  f.consistent = f.max_abs_diff <= 0.005;
  return f;
}

inline std::string describe(const FusionCheck& f) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(3);
  out << "fused (" << f.computed[0] << ", " << f.computed[1] << ", " << f.computed[2] << ") vs printed w_final ("
      << f.printed[0] << ", " << f.printed[1] << ", " << f.printed[2] << "): "
      << (f.consistent ? "consistent" : "DISCREPANCY, max |diff| = ");
  if (!f.consistent) out << f.max_abs_diff;
  return out.str();
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const Contribution& c) {
  j = {{"module", c.module}, {"score", c.score}, {"weight", c.weight}, {"contribution", c.contribution}};
}

inline void to_json(nlohmann::json& j, const CapsResult& r) {
  j = {{"caps_raw", r.caps_raw}, {"bonus_applied", r.bonus_applied}, {"caps_final", r.caps_final},
       {"breakdown", r.breakdown}};
}

inline void to_json(nlohmann::json& j, const ModuleWeightSources& s) {
  j = {{"schema_version", kSchemaVersion},
       {"kind", "module_weights"},
       {"w_log", s.w_log},
       {"w_xgb", s.w_xgb},
       {"w_exp", s.w_exp},
       {"w_final", s.w_final},
       {"coefficients", {{"alpha", s.coefficients.alpha}, {"beta", s.coefficients.beta}, {"gamma", s.coefficients.gamma}}},
       {"provenance", s.provenance},
       {"data_digest", s.data_digest},
       {"logistic_l2", s.logistic_l2}};
}

inline void from_json(const nlohmann::json& j, ModuleWeightSources& s) {
  const int version = j.at("schema_version").get<int>();
  if (version > kSchemaVersion)
    throw VersionError("module weights schema_version " + std::to_string(version) + " is newer than supported " +
                       std::to_string(kSchemaVersion));
  s.w_log = j.at("w_log").get<WeightVector>();
  s.w_xgb = j.at("w_xgb").get<WeightVector>();
  s.w_exp = j.at("w_exp").get<WeightVector>();
  s.w_final = j.at("w_final").get<WeightVector>();
  const auto& c = j.at("coefficients");
  s.coefficients = {c.at("alpha").get<double>(), c.at("beta").get<double>(), c.at("gamma").get<double>()};
  s.provenance = j.value("provenance", std::string());
  s.data_digest = j.value("data_digest", std::string());
  s.logistic_l2 = j.value("logistic_l2", 0.0);
  check_module_weights(s.w_final);
}

}  // namespace caps::fusion
