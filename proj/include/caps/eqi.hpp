#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caps/config.hpp"
#include "caps/errors.hpp"
#include "caps/explanation.hpp"
#include "caps/gbt.hpp"
#include "caps/model.hpp"
#include "caps/providers.hpp"
#include "caps/rng.hpp"
#include "caps/shap.hpp"

namespace caps::eqi {

inline constexpr std::size_t kFeatureCount = 3 + kEmbeddingDim;
inline constexpr int kModelSchemaVersion = 1;
inline constexpr std::size_t kMinTrainingRows = 30;
inline constexpr std::size_t kDefaultBackgroundSize = 100;

inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n = {"EssayContentScore", "EssayLanguageScore", "EssayStructureScore"};
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) n.push_back("EssayEmbedding_" + std::to_string(i));
    return n;
  }();
  return names;
}

struct FeatureVector {
  std::vector<double> values;  // rubric (3) then embedding (384)
};

inline FeatureVector build_features(const RubricScores& rubric, const EssayEmbedding& embedding) {
  validate(rubric);
  if (embedding.values.size() != kEmbeddingDim)
    throw SchemaMismatchError("embedding has " + std::to_string(embedding.values.size()) + " dimensions, expected 384");
  FeatureVector f;
  f.values.reserve(kFeatureCount);
  f.values = {rubric.content, rubric.language, rubric.structure};
  f.values.insert(f.values.end(), embedding.values.begin(), embedding.values.end());
  return f;
}

struct Example {
  FeatureVector features;
  double label = 0.0;
};

// ---------------------------------------------------------------------------
// Grid search

using HyperParams = gbt::TreeParams;

// max_depth outermost, column subsample innermost; this is also the
// tie-break order.
inline std::vector<HyperParams> default_grid() {
  std::vector<HyperParams> grid;
  for (int depth : {3, 5, 7})
    for (double lr : {0.05, 0.1, 0.2})
      for (int n : {100, 200})
        for (double sub : {0.8, 1.0})
          for (double col : {0.8, 1.0}) {
            HyperParams p;
            p.max_depth = depth;
            p.learning_rate = lr;
            p.n_estimators = n;
            p.subsample = sub;
            p.colsample_bytree = col;
            grid.push_back(p);
          }
  return grid;
}

struct GridPoint {
  HyperParams params;
  double mean_cv_mse = 0.0;
};

struct RegressionMetrics {
  double mse = 0.0;
  double r2 = 0.0;  // 0 when the labels are constant
};

inline RegressionMetrics regression_metrics(std::span<const double> truth, std::span<const double> pred) {
  if (truth.empty() || truth.size() != pred.size()) throw InsufficientDataError("metrics need matching, nonempty vectors");
  const double n = static_cast<double>(truth.size());
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sse += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    sst += (truth[i] - mean) * (truth[i] - mean);
  }
  return {sse / n, sst > 0.0 ? 1.0 - sse / sst : 0.0};
}

struct TrainOptions {
  std::uint64_t seed = 42;
  double test_fraction = 0.2;
  int folds = 3;
  std::size_t background_size = kDefaultBackgroundSize;
};

struct TrainedModel {
  gbt::RegressionEnsemble ensemble;
  std::vector<std::string> schema;
  HyperParams best_params;
  double best_cv_neg_mse = 0.0;
  int folds = 3;
  RegressionMetrics test;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::uint64_t seed = 0;
  std::vector<GridPoint> grid_results;
  gbt::Matrix background;  // rows sampled from the train split
};

namespace detail {

inline gbt::Matrix to_matrix(std::span<const Example> data, std::span<const std::size_t> idx) {
  gbt::Matrix x(idx.size(), kFeatureCount);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& v = data[idx[i]].features.values;
    std::copy(v.begin(), v.end(), x.row(i).begin());
  }
  return x;
}

inline std::vector<double> labels(std::span<const Example> data, std::span<const std::size_t> idx) {
  std::vector<double> y;
  for (auto i : idx) y.push_back(data[i].label);
  return y;
}

inline double mse_of(const gbt::RegressionEnsemble& m, const gbt::Matrix& x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double d = std::clamp(m.predict(x.row(i)), 0.0, 1.0) - y[i];
    s += d * d;
  }
  return s / static_cast<double>(x.rows);
}

}  // namespace detail

/// Shuffled train/test split, then unshuffled K-fold grid search on the
/// train part. The winning config is refit on the whole train split and
/// scored on the held-out part (predictions clamped to [0, 1]).
inline TrainedModel train_eqi(std::span<const Example> data, const std::vector<HyperParams>& grid,
                              const TrainOptions& options = {}) {
  if (data.size() < kMinTrainingRows)
    throw InsufficientDataError("EQI training needs at least " + std::to_string(kMinTrainingRows) + " rows, got " +
                                std::to_string(data.size()));
  if (grid.empty()) throw ValidationError("grid", "must contain at least one configuration");
  if (options.folds < 2) throw ValidationError("folds", "must be >= 2");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i].label)) throw NonFiniteLabelError("label at row " + std::to_string(i) + " is not finite");
    if (data[i].label < 0.0 || data[i].label > 1.0)
      throw ValidationError("label", "out of [0,1] at row " + std::to_string(i));
    if (data[i].features.values.size() != kFeatureCount)
      throw SchemaMismatchError("row " + std::to_string(i) + " has " + std::to_string(data[i].features.values.size()) +
                                " features, expected 387");
  }

  Rng rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(std::ceil(options.test_fraction * static_cast<double>(data.size())));
  const std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  const std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  const auto k = static_cast<std::size_t>(options.folds);
  if (train_idx.size() < k * 2) throw InsufficientDataError("train split too small for cross-validation");

  // Fold f holds positions [start_f, end_f) of the train split.
  std::vector<gbt::Matrix> fit_x, val_x;
  std::vector<std::vector<double>> fit_y, val_y;
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = train_idx.size() / k + (f < train_idx.size() % k ? 1 : 0);
    std::vector<std::size_t> fit, val;
    for (std::size_t p = 0; p < train_idx.size(); ++p) (p >= start && p < start + len ? val : fit).push_back(train_idx[p]);
    fit_x.push_back(detail::to_matrix(data, fit));
    fit_y.push_back(detail::labels(data, fit));
    val_x.push_back(detail::to_matrix(data, val));
    val_y.push_back(detail::labels(data, val));
    start += len;
  }

  TrainedModel model;
  model.schema = feature_names();
  model.folds = options.folds;
  model.seed = options.seed;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& params : grid) {
    double total = 0.0;
    for (std::size_t f = 0; f < k; ++f) {
      const auto m = gbt::fit_regression(fit_x[f], fit_y[f], params, options.seed);
      total += detail::mse_of(m, val_x[f], val_y[f]);
    }
    const double mean = total / static_cast<double>(k);
    model.grid_results.push_back({params, mean});
    if (mean < best) {
      best = mean;
      model.best_params = params;
    }
  }
  model.best_cv_neg_mse = -best;

  const auto train_x = detail::to_matrix(data, train_idx);
  const auto train_y = detail::labels(data, train_idx);
  model.ensemble = gbt::fit_regression(train_x, train_y, model.best_params, options.seed);
  model.n_train = train_idx.size();
  model.n_test = test_idx.size();

  const auto test_x = detail::to_matrix(data, test_idx);
  const auto test_y = detail::labels(data, test_idx);
  std::vector<double> pred;
  for (std::size_t i = 0; i < test_x.rows; ++i) pred.push_back(std::clamp(model.ensemble.predict(test_x.row(i)), 0.0, 1.0));
  model.test = regression_metrics(test_y, pred);

  Rng bg_rng(options.seed + 1);
  const auto bg = bg_rng.sample_indices(train_x.rows, std::min(options.background_size, train_x.rows));
  model.background = train_x.select_rows(bg);
  return model;
}

inline void check_schema(const TrainedModel& model, const FeatureVector& f) {
  if (f.values.size() != model.schema.size() || model.schema.size() != model.ensemble.n_features)
    throw SchemaMismatchError("feature vector has " + std::to_string(f.values.size()) + " entries, model expects " +
                              std::to_string(model.schema.size()));
}

inline double predict_unclamped(const TrainedModel& model, const FeatureVector& f) {
  check_schema(model, f);
  return model.ensemble.predict(f.values);
}

inline double predict_eqi_raw(const TrainedModel& model, const FeatureVector& f) {
  return std::clamp(predict_unclamped(model, f), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Alignment penalty

inline void validate(const PenaltyParams& p) {
  if (!(p.lambda >= 0.0 && p.lambda <= 1.0)) throw ValidationError("eqi_penalty.lambda", "out of [0,1]");
  if (!(p.k > 0.0) || !std::isfinite(p.k)) throw ValidationError("eqi_penalty.k", "must be > 0");
  if (!std::isfinite(p.x0)) throw ValidationError("eqi_penalty.x0", "must be finite");
}

inline double penalty_factor(double s_align, const PenaltyParams& p) {
  const double t = -p.k * (s_align - p.x0);
  return p.lambda + (1.0 - p.lambda) / (1.0 + std::exp(t));
}

inline double apply_alignment_penalty(double eqi_raw, double s_align, const PenaltyParams& p) {
  validate(p);
  if (!(eqi_raw >= 0.0 && eqi_raw <= 1.0)) throw ValidationError("eqi_raw", "out of [0,1]");
  if (!(s_align >= 0.0 && s_align <= 1.0)) throw ValidationError("s_align", "out of [0,1]");
  return eqi_raw * penalty_factor(s_align, p);
}

// ---------------------------------------------------------------------------
// Explanation

inline ExplanationReport explain_eqi(const TrainedModel& model, const FeatureVector& f, const gbt::Matrix& background) {
  check_schema(model, f);
  const auto values = shap::tree_shap(model.ensemble, f.values, background);
  ExplanationReport report;
  report.base_value = values.base_value;
  report.prediction = values.prediction;
  report.background_size = background.rows;
  for (std::size_t i = 0; i < model.schema.size(); ++i) report.attributions.emplace_back(model.schema[i], values.phi[i]);
  return report;
}

inline ExplanationReport explain_eqi(const TrainedModel& model, const FeatureVector& f) {
  return explain_eqi(model, f, model.background);
}

// ---------------------------------------------------------------------------
// Full essay pipeline

struct EssayResult {
  RubricScores rubric;
  double s_align = 0.0;
  double eqi_raw = 0.0;
  double penalty_factor = 1.0;
  double eqi_final = 0.0;
  FeatureVector features;
  ExplanationReport explanation;
};

/// rubric, embedding and alignment are independent provider calls and run
/// concurrently; the rest is a pure function of their results.
inline EssayResult score_essay(const EssaySubmission& essay, const TrainedModel& model, const Providers& providers,
                               const CapsConfig& config) {
  validate(essay);
  auto rubric = std::async(std::launch::async, [&] { return providers.rubric->rubric_score(essay); });
  auto embedding = std::async(std::launch::async, [&] { return providers.embedder->embed_essay(essay.essay_text); });
  auto alignment = std::async(std::launch::async, [&] {
    return providers.alignment->alignment_score(essay.prompt_text, essay.essay_text);
  });
  EssayResult out;
  out.rubric = rubric.get();
  const auto emb = embedding.get();
  out.s_align = alignment.get();
  out.features = build_features(out.rubric, emb);
  out.eqi_raw = predict_eqi_raw(model, out.features);
  out.penalty_factor = penalty_factor(out.s_align, config.eqi_penalty);
  out.eqi_final = apply_alignment_penalty(out.eqi_raw, out.s_align, config.eqi_penalty);
  out.explanation = explain_eqi(model, out.features);
  return out;
}

inline std::vector<Example> featurize(const std::vector<std::pair<EssaySubmission, double>>& rows,
                                      const Providers& providers) {
  std::vector<Example> out;
  out.reserve(rows.size());
  for (const auto& [essay, label] : rows)
    out.push_back({build_features(providers.rubric->rubric_score(essay), providers.embedder->embed_essay(essay.essay_text)),
                   label});
  return out;
}

// ---------------------------------------------------------------------------
// Artifact JSON

inline void to_json(nlohmann::json& j, const GridPoint& g) { j = {{"params", g.params}, {"mean_cv_mse", g.mean_cv_mse}}; }

inline void to_json(nlohmann::json& j, const TrainedModel& m) {
  std::vector<std::vector<double>> background;
  for (std::size_t i = 0; i < m.background.rows; ++i) {
    const auto r = m.background.row(i);
    background.emplace_back(r.begin(), r.end());
  }
  j = {{"schema_version", kModelSchemaVersion},
       {"kind", "eqi_model"},
       {"schema", m.schema},
       {"best_params", m.best_params},
       {"cv_report", {{"best_cv_neg_mse", m.best_cv_neg_mse}, {"folds", m.folds}}},
       {"test_report", {{"mse", m.test.mse}, {"r2", m.test.r2}}},
       {"n_train", m.n_train},
       {"n_test", m.n_test},
       {"seed", m.seed},
       {"grid_results", m.grid_results},
       {"ensemble", m.ensemble},
       {"background", background}};
}

inline void from_json(const nlohmann::json& j, TrainedModel& m) {
  const int version = j.at("schema_version").get<int>();
  if (version > kModelSchemaVersion)
    throw VersionError("EQI model schema_version " + std::to_string(version) + " is newer than supported " +
                       std::to_string(kModelSchemaVersion));
  if (j.value("kind", std::string()) != "eqi_model") throw FormatError("eqi model", "kind is not eqi_model");
  m.schema = j.at("schema").get<std::vector<std::string>>();
  if (m.schema != feature_names()) throw SchemaMismatchError("model schema differs from the 387 EQI feature names");
  m.best_params = j.at("best_params").get<HyperParams>();
  m.best_cv_neg_mse = j.at("cv_report").at("best_cv_neg_mse").get<double>();
  m.folds = j.at("cv_report").at("folds").get<int>();
  m.test.mse = j.at("test_report").at("mse").get<double>();
  m.test.r2 = j.at("test_report").at("r2").get<double>();
  m.n_train = j.value("n_train", std::size_t{0});
  m.n_test = j.value("n_test", std::size_t{0});
  m.seed = j.value("seed", std::uint64_t{0});
  m.grid_results.clear();
  if (j.contains("grid_results"))
    for (const auto& g : j.at("grid_results"))
      m.grid_results.push_back({g.at("params").get<HyperParams>(), g.at("mean_cv_mse").get<double>()});
  m.ensemble = j.at("ensemble").get<gbt::RegressionEnsemble>();
  if (m.ensemble.n_features != m.schema.size()) throw SchemaMismatchError("ensemble width differs from schema");
  const auto background = j.at("background").get<std::vector<std::vector<double>>>();
  m.background = gbt::Matrix(background.size(), m.schema.size());
  for (std::size_t i = 0; i < background.size(); ++i) {
    if (background[i].size() != m.schema.size()) throw SchemaMismatchError("background row width differs from schema");
    std::copy(background[i].begin(), background[i].end(), m.background.row(i).begin());
  }
  if (m.background.rows == 0) throw FormatError("eqi model", "empty background set");
}

}  // namespace caps::eqi
