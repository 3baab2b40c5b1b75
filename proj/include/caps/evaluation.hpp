#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "caps/cohort.hpp"
#include "caps/errors.hpp"
#include "caps/gbt.hpp"
#include "caps/logistic.hpp"
#include "caps/rng.hpp"

namespace caps::evaluation {

inline constexpr int kTierCount = 5;
inline constexpr std::size_t kMinRows = 50;

using Confusion = std::vector<std::vector<long long>>;  // [truth][predicted]

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long support = 0;
};

struct ClassificationReport {
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double macro_f1 = 0.0;     // over classes that occur in truth or predictions
  double weighted_f1 = 0.0;  // support-weighted
  Confusion confusion;
};

inline double safe_div(double a, double b) { return b > 0.0 ? a / b : 0.0; }

inline ClassificationReport metrics_from_confusion(const Confusion& c) {
  const std::size_t k = c.size();
  if (k == 0) throw EmptyMatrixError("confusion matrix is empty");
  long long total = 0;
  for (const auto& row : c) {
    if (row.size() != k) throw ValidationError("confusion", "must be square");
    for (auto v : row) {
      if (v < 0) throw ValidationError("confusion", "counts must be >= 0");
      total += v;
    }
  }
  if (total == 0) throw EmptyMatrixError("confusion matrix has no counts");

  ClassificationReport r;
  r.confusion = c;
  r.per_class.resize(k);
  long long diagonal = 0;
  double macro = 0.0, weighted = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < k; ++i) {
    long long predicted = 0, support = 0;
    for (std::size_t j = 0; j < k; ++j) {
      predicted += c[j][i];
      support += c[i][j];
    }
    diagonal += c[i][i];
    auto& m = r.per_class[i];
    m.support = support;
    m.precision = safe_div(static_cast<double>(c[i][i]), static_cast<double>(predicted));
    m.recall = safe_div(static_cast<double>(c[i][i]), static_cast<double>(support));
    m.f1 = safe_div(2.0 * m.precision * m.recall, m.precision + m.recall);
    if (predicted > 0 || support > 0) {
      macro += m.f1;
      ++present;
    }
    weighted += m.f1 * static_cast<double>(support);
  }
  r.accuracy = static_cast<double>(diagonal) / static_cast<double>(total);
  r.macro_f1 = safe_div(macro, static_cast<double>(present));
  r.weighted_f1 = weighted / static_cast<double>(total);
  return r;
}

inline Confusion confusion_of(std::span<const int> truth, std::span<const int> predicted, int k) {
  Confusion c(static_cast<std::size_t>(k), std::vector<long long>(static_cast<std::size_t>(k), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) ++c[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  return c;
}

// ---------------------------------------------------------------------------
// Train/test protocol

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle, then the first ceil(test_fraction * n) rows are held out.
inline Split split_rows(std::size_t n, std::uint64_t seed, double test_fraction = 0.2) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n)));
  Split s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  return s;
}

namespace detail {

inline void check(const std::vector<cohort::CohortRow>& rows, const Split& split) {
  if (rows.size() < kMinRows)
    throw InsufficientDataError("evaluation needs at least 50 rows, got " + std::to_string(rows.size()));
  std::vector<bool> seen(kTierCount, false);
  for (auto i : split.train) seen[static_cast<std::size_t>(rows[i].tier)] = true;
  for (int t = 0; t < kTierCount; ++t)
    if (!seen[static_cast<std::size_t>(t)])
      throw DegenerateLabelsError("tier " + std::to_string(t) + " is missing from the training split");
}

inline Eigen::MatrixXd features(const std::vector<cohort::CohortRow>& rows, std::span<const std::size_t> idx) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(idx.size()), 3);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& s = rows[idx[i]].scores;
    x.row(static_cast<Eigen::Index>(i)) << s.sas, s.eqi, s.eis;
  }
  return x;
}

inline std::vector<int> labels(const std::vector<cohort::CohortRow>& rows, std::span<const std::size_t> idx) {
  std::vector<int> y;
  for (auto i : idx) y.push_back(rows[i].tier);
  return y;
}

}  // namespace detail

/// Z-scores on train statistics, multinomial logistic fit, test metrics.
inline ClassificationReport evaluate_logistic(const std::vector<cohort::CohortRow>& rows, std::uint64_t seed,
                                              double l2 = 0.1) {
  const auto split = split_rows(rows.size(), seed);
  detail::check(rows, split);
  const auto x_train = detail::features(rows, split.train);
  const auto scaler = logistic::Standardizer::fit(x_train);
  const auto model = logistic::fit(scaler.transform(x_train), detail::labels(rows, split.train), kTierCount, l2);
  const auto z_test = scaler.transform(detail::features(rows, split.test));
  std::vector<int> predicted;
  for (Eigen::Index i = 0; i < z_test.rows(); ++i) predicted.push_back(model.predict(z_test.row(i).transpose()));
  return metrics_from_confusion(confusion_of(detail::labels(rows, split.test), predicted, kTierCount));
}

inline gbt::TreeParams default_classifier_params() {
  gbt::TreeParams p;
  p.max_depth = 6;
  p.learning_rate = 0.3;
  p.n_estimators = 100;
  return p;
}

struct TreeEvaluation {
  ClassificationReport train;
  ClassificationReport test;
};

/// Boosted classifier on the raw module scores; both splits reported.
inline TreeEvaluation evaluate_tree_classifier(const std::vector<cohort::CohortRow>& rows, std::uint64_t seed,
                                               const gbt::TreeParams& params = default_classifier_params()) {
  const auto split = split_rows(rows.size(), seed);
  detail::check(rows, split);
  auto to_matrix = [&](std::span<const std::size_t> idx) {
    gbt::Matrix m(idx.size(), 3);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& s = rows[idx[i]].scores;
      m(i, 0) = s.sas;
      m(i, 1) = s.eqi;
      m(i, 2) = s.eis;
    }
    return m;
  };
  const auto x_train = to_matrix(split.train), x_test = to_matrix(split.test);
  const auto y_train = detail::labels(rows, split.train), y_test = detail::labels(rows, split.test);
  const auto model = gbt::fit_multiclass(x_train, y_train, kTierCount, params, seed);
  auto predict = [&](const gbt::Matrix& x) {
    std::vector<int> out;
    for (std::size_t i = 0; i < x.rows; ++i) out.push_back(model.predict(x.row(i)));
    return out;
  };
  return {metrics_from_confusion(confusion_of(y_train, predict(x_train), kTierCount)),
          metrics_from_confusion(confusion_of(y_test, predict(x_test), kTierCount))};
}

// ---------------------------------------------------------------------------
// Output

inline std::string format_report(const ClassificationReport& r, const std::string& title) {
  std::string out = title + "\n";
  char line[160];
  std::snprintf(line, sizeof line, "  Overall accuracy: %.2f%%\n", 100.0 * r.accuracy);
  out += line;
  for (std::size_t t = 0; t < r.per_class.size(); ++t) {
    const auto& m = r.per_class[t];
    std::snprintf(line, sizeof line, "  Tier %zu: Precision = %.2f, Recall = %.2f, F1 = %.2f (support %lld)\n", t,
                  m.precision, m.recall, m.f1, m.support);
    out += line;
  }
  std::snprintf(line, sizeof line, "  Macro F1 = %.2f, Weighted F1 = %.2f\n", r.macro_f1, r.weighted_f1);
  out += line;
  return out;
}

inline void to_json(nlohmann::json& j, const ClassMetrics& m) {
  j = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
}

inline void to_json(nlohmann::json& j, const ClassificationReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t t = 0; t < r.per_class.size(); ++t) per_class[std::to_string(t)] = r.per_class[t];
  j = {{"accuracy", r.accuracy}, {"per_class", per_class}, {"macro_f1", r.macro_f1},
       {"weighted_f1", r.weighted_f1}, {"confusion", r.confusion}};
}

inline void to_json(nlohmann::json& j, const TreeEvaluation& e) { j = {{"train", e.train}, {"test", e.test}}; }

}  // namespace caps::evaluation
