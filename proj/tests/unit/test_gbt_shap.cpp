#include <gtest/gtest.h>

#include <cmath>

#include "caps/gbt.hpp"
#include "caps/rng.hpp"
#include "caps/shap.hpp"

using namespace caps;

namespace {

gbt::Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  gbt::Matrix m(rows, cols);
  for (double& v : m.data) v = rng.uniform();
  return m;
}

// Interventional Shapley values by subset enumeration:
//   v(S) = mean_b f(x_S, b_rest),  phi_i = sum_S |S|!(M-|S|-1)!/M! (v(S+i) - v(S)).
std::vector<double> brute_force_shapley(const gbt::RegressionEnsemble& model, std::span<const double> x,
                                        const gbt::Matrix& background) {
  const std::size_t m = x.size();
  auto value = [&](unsigned mask) {
    double total = 0.0;
    std::vector<double> z(m);
    for (std::size_t r = 0; r < background.rows; ++r) {
      for (std::size_t j = 0; j < m; ++j) z[j] = (mask >> j) & 1u ? x[j] : background(r, j);
      total += model.predict(z);
    }
    return total / static_cast<double>(background.rows);
  };
  std::vector<double> v(1u << m);
  for (unsigned s = 0; s < v.size(); ++s) v[s] = value(s);
  auto factorial = [](std::size_t n) {
    double f = 1.0;
    for (std::size_t k = 2; k <= n; ++k) f *= static_cast<double>(k);
    return f;
  };
  std::vector<double> phi(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (unsigned s = 0; s < v.size(); ++s) {
      if ((s >> i) & 1u) continue;
      const auto size = static_cast<std::size_t>(__builtin_popcount(s));
      const double w = factorial(size) * factorial(m - size - 1) / factorial(m);
      phi[i] += w * (v[s | (1u << i)] - v[s]);
    }
  return phi;
}

}  // namespace

TEST(Gbt, StumpLeavesAreMeanResiduals) {
  gbt::Matrix x(10, 1);
  std::vector<double> y(10);
  for (std::size_t i = 0; i < 10; ++i) {
    x(i, 0) = static_cast<double>(i);
    y[i] = i < 5 ? 1.0 : 3.0;
  }
  gbt::TreeParams p;
  p.max_depth = 1;
  p.learning_rate = 1.0;
  p.n_estimators = 1;
  p.reg_lambda = 0.0;
  const auto m = gbt::fit_regression(x, y, p, 0);
  EXPECT_DOUBLE_EQ(m.base_score, 2.0);
  ASSERT_EQ(m.trees.size(), 1u);
  const auto& root = m.trees[0].nodes[0];
  EXPECT_EQ(root.feature, 0);
  EXPECT_DOUBLE_EQ(root.threshold, 4.5);
  EXPECT_DOUBLE_EQ(m.predict(std::vector<double>{2.0}), 1.0);
  EXPECT_DOUBLE_EQ(m.predict(std::vector<double>{7.0}), 3.0);
  // gain = 1/2 (GL^2/HL + GR^2/HR - G^2/H) = 1/2 (25/5 + 25/5 - 0) = 5
  EXPECT_DOUBLE_EQ(root.gain, 5.0);
  EXPECT_DOUBLE_EQ(m.gain_importance[0], 5.0);
}

TEST(Gbt, RootSplitMatchesExhaustiveSearch) {
  Rng rng(21);
  const auto x = random_matrix(60, 4, rng);
  std::vector<double> y(60);
  for (std::size_t i = 0; i < 60; ++i) y[i] = std::sin(6.0 * x(i, 2)) + 0.3 * x(i, 0) + 0.05 * rng.normal();
  gbt::TreeParams p;
  p.max_depth = 1;
  p.n_estimators = 1;
  const auto m = gbt::fit_regression(x, y, p, 0);

  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 60.0;
  const double lambda = p.reg_lambda;
  double best = -1.0, best_threshold = 0.0;
  int best_feature = -1;
  for (int f = 0; f < 4; ++f) {
    std::vector<std::size_t> order(60);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a, f) < x(b, f); });
    double gl = 0.0, hl = 0.0, g = 0.0;
    for (double v : y) g += mean - v;
    for (std::size_t k = 0; k + 1 < 60; ++k) {
      gl += mean - y[order[k]];
      hl += 1.0;
      const double gr = g - gl, hr = 60.0 - hl;
      const double gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (60.0 + lambda));
      if (gain > best + 1e-12) {
        best = gain;
        best_feature = f;
        best_threshold = x(order[k], f) + (x(order[k + 1], f) - x(order[k], f)) / 2.0;
      }
    }
  }
  const auto& root = m.trees[0].nodes[0];
  EXPECT_EQ(root.feature, best_feature);
  EXPECT_DOUBLE_EQ(root.threshold, best_threshold);
  EXPECT_NEAR(root.gain, best, 1e-9);
}

TEST(Gbt, FitsSmoothFunctionAndRespectsDepth) {
  Rng rng(2);
  const auto x = random_matrix(300, 3, rng);
  std::vector<double> y(300);
  for (std::size_t i = 0; i < 300; ++i) y[i] = std::sin(3.0 * x(i, 0)) + x(i, 1) * x(i, 1);
  gbt::TreeParams p;
  p.max_depth = 4;
  p.n_estimators = 200;
  const auto m = gbt::fit_regression(x, y, p, 1);
  double mse = 0.0;
  for (std::size_t i = 0; i < 300; ++i) mse += std::pow(m.predict(x.row(i)) - y[i], 2) / 300.0;
  EXPECT_LT(mse, 1e-3);
  for (const auto& t : m.trees) EXPECT_LE(t.depth(), 4);
  EXPECT_GT(m.gain_importance[0], m.gain_importance[2]);
}

TEST(Gbt, SeededSubsamplingIsDeterministic) {
  Rng rng(3);
  const auto x = random_matrix(80, 5, rng);
  std::vector<double> y(80);
  for (std::size_t i = 0; i < 80; ++i) y[i] = x(i, 0) - x(i, 3);
  gbt::TreeParams p;
  p.subsample = 0.8;
  p.colsample_bytree = 0.8;
  const auto a = gbt::fit_regression(x, y, p, 7), b = gbt::fit_regression(x, y, p, 7), c = gbt::fit_regression(x, y, p, 8);
  EXPECT_EQ(nlohmann::json(a), nlohmann::json(b));
  EXPECT_NE(nlohmann::json(a), nlohmann::json(c));
}

TEST(Gbt, JsonRoundTripPredictsIdentically) {
  Rng rng(4);
  const auto x = random_matrix(50, 3, rng);
  std::vector<double> y(50);
  for (std::size_t i = 0; i < 50; ++i) y[i] = x(i, 1);
  const auto m = gbt::fit_regression(x, y, {}, 0);
  const auto back = nlohmann::json::parse(nlohmann::json(m).dump()).get<gbt::RegressionEnsemble>();
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(back.predict(x.row(i)), m.predict(x.row(i)));
  auto bad = nlohmann::json(m);
  bad["trees"][0]["left"][0] = 999;
  EXPECT_THROW(bad.get<gbt::RegressionEnsemble>(), InputError);
}

TEST(Gbt, RejectsBadParams) {
  gbt::TreeParams p;
  p.subsample = 0.0;
  EXPECT_THROW(gbt::validate(p), ValidationError);
  p = {};
  p.max_depth = 0;
  EXPECT_THROW(gbt::validate(p), ValidationError);
}

TEST(Gbt, MulticlassSeparatesBands) {
  Rng rng(5);
  const auto x = random_matrix(200, 2, rng);
  std::vector<int> labels(200);
  for (std::size_t i = 0; i < 200; ++i) labels[i] = static_cast<int>(x(i, 0) * 4.0);
  gbt::TreeParams p;
  p.max_depth = 3;
  p.learning_rate = 0.3;
  p.n_estimators = 30;
  const auto m = gbt::fit_multiclass(x, labels, 4, p, 0);
  EXPECT_EQ(m.trees.size(), 120u);
  int correct = 0;
  for (std::size_t i = 0; i < 200; ++i) correct += m.predict(x.row(i)) == labels[i];
  EXPECT_EQ(correct, 200);
  EXPECT_THROW(gbt::fit_multiclass(x, labels, 3, p, 0), ValidationError);
}

TEST(Shap, MatchesBruteForceOnThreeFeatures) {
  Rng rng(6);
  const auto x = random_matrix(120, 3, rng);
  std::vector<double> y(120);
  for (std::size_t i = 0; i < 120; ++i) y[i] = x(i, 0) * x(i, 1) + std::max(x(i, 2) - 0.5, 0.0);
  gbt::TreeParams p;
  p.max_depth = 3;
  p.n_estimators = 50;
  const auto m = gbt::fit_regression(x, y, p, 0);
  const auto background = x.select_rows(std::vector<std::size_t>{0, 5, 9, 17, 33, 60, 71, 99});
  for (std::size_t r = 100; r < 110; ++r) {
    const auto s = shap::tree_shap(m, x.row(r), background);
    const auto oracle = brute_force_shapley(m, x.row(r), background);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(s.phi[j], oracle[j], 1e-9);
    double sum = s.base_value;
    for (double v : s.phi) sum += v;
    EXPECT_NEAR(sum, s.prediction, 1e-9);
  }
}

TEST(Shap, MatchesBruteForceOnDeeperSixFeatureModel) {
  Rng rng(7);
  const auto x = random_matrix(150, 6, rng);
  std::vector<double> y(150);
  for (std::size_t i = 0; i < 150; ++i) y[i] = x(i, 0) * x(i, 3) - x(i, 5) + (x(i, 2) > 0.4 ? x(i, 1) : 0.0);
  gbt::TreeParams p;
  p.max_depth = 6;
  p.n_estimators = 20;
  p.colsample_bytree = 0.8;
  const auto m = gbt::fit_regression(x, y, p, 3);
  const auto background = x.select_rows(std::vector<std::size_t>{1, 2, 3, 40, 41});
  const auto s = shap::tree_shap(m, x.row(120), background);
  const auto oracle = brute_force_shapley(m, x.row(120), background);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(s.phi[j], oracle[j], 1e-9);
}

TEST(Shap, UnusedFeatureGetsZeroAndBackgroundPointGetsNothing) {
  Rng rng(8);
  auto x = random_matrix(80, 3, rng);
  // constant columns can never be split on
  for (std::size_t i = 0; i < 80; ++i) x(i, 1) = x(i, 2) = 0.5;
  std::vector<double> y(80);
  for (std::size_t i = 0; i < 80; ++i) y[i] = x(i, 0);
  const auto m = gbt::fit_regression(x, y, {}, 0);
  const auto background = x.select_rows(std::vector<std::size_t>{4});
  const auto s = shap::tree_shap(m, x.row(10), background);
  EXPECT_EQ(s.phi[1], 0.0);
  EXPECT_EQ(s.phi[2], 0.0);
  const auto self = shap::tree_shap(m, x.row(4), background);
  for (double v : self.phi) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(shap::tree_shap(m, x.row(0), gbt::Matrix(0, 3)), InsufficientDataError);
  EXPECT_THROW(shap::tree_shap(m, std::vector<double>{1.0}, background), SchemaMismatchError);
}
