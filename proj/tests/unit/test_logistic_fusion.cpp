#include <gtest/gtest.h>

#include <cmath>

#include "caps/fusion.hpp"
#include "caps/logistic.hpp"
#include "caps/rng.hpp"

using namespace caps;

namespace {

struct Blobs {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Blobs blobs(int n, double spread, std::uint64_t seed) {
  Rng rng(seed);
  Blobs b{Eigen::MatrixXd(n, 2), {}};
  const double centers[3][2] = {{0, 0}, {3, 0}, {0, 3}};
  for (int i = 0; i < n; ++i) {
    const int k = i % 3;
    b.x(i, 0) = centers[k][0] + rng.normal(0.0, spread);
    b.x(i, 1) = centers[k][1] + rng.normal(0.0, spread);
    b.y.push_back(k);
  }
  return b;
}

fusion::LabelledScores sas_only(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  fusion::LabelledScores d{Eigen::MatrixXd(static_cast<Eigen::Index>(n), 3), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double sas = rng.uniform();
    d.x(static_cast<Eigen::Index>(i), 0) = sas;
    d.x(static_cast<Eigen::Index>(i), 1) = rng.uniform();
    d.x(static_cast<Eigen::Index>(i), 2) = rng.uniform();
    d.labels.push_back(std::min(4, static_cast<int>(sas * 5.0)));
  }
  return d;
}

}  // namespace

TEST(Logistic, StationaryPointOfPenalisedLoss) {
  const auto b = blobs(150, 1.0, 3);
  const double l2 = 0.1;
  const auto m = logistic::fit(b.x, b.y, 3, l2);
  EXPECT_TRUE(m.converged);
  // gradient of sum_i CE + l2/2 |W|^2, written out independently
  Eigen::MatrixXd g = l2 * m.coef;
  Eigen::VectorXd gb = Eigen::VectorXd::Zero(3);
  for (Eigen::Index i = 0; i < b.x.rows(); ++i) {
    const Eigen::VectorXd p = m.probabilities(b.x.row(i).transpose());
    for (int k = 0; k < 3; ++k) {
      const double r = p(k) - (b.y[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0);
      g.row(k) += r * b.x.row(i);
      gb(k) += r;
    }
  }
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LT(gb.cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Logistic, SeparatesWellSpacedBlobs) {
  const auto b = blobs(90, 0.2, 4);
  const auto m = logistic::fit(b.x, b.y, 3, 0.1);
  int correct = 0;
  for (Eigen::Index i = 0; i < b.x.rows(); ++i) correct += m.predict(b.x.row(i).transpose()) == b.y[static_cast<std::size_t>(i)];
  EXPECT_EQ(correct, 90);
  const auto p = m.probabilities(b.x.row(0).transpose());
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
}

TEST(Logistic, RejectsDegenerateInput) {
  const auto b = blobs(30, 1.0, 5);
  EXPECT_THROW(logistic::fit(b.x, b.y, 1, 0.1), DegenerateLabelsError);
  EXPECT_THROW(logistic::fit(b.x, b.y, 4, 0.1), DegenerateLabelsError);
  EXPECT_THROW(logistic::fit(b.x, b.y, 3, -1.0), ValidationError);
}

TEST(PresetWeights, FusedColumnAndDiscrepancyFlag) {
  const SourceCoefficients c;
  const auto fused = fusion::fuse_caps_weights(fusion::table4::logistic(), fusion::table4::tree(), fusion::table4::expert(), c);
  // 0.3 (.35,.33,.32) + 0.3 (.58,.18,.24) + 0.4 (.50,.30,.20)
  const double expected[3] = {0.3 * 0.35 + 0.3 * 0.58 + 0.4 * 0.50, 0.3 * 0.33 + 0.3 * 0.18 + 0.4 * 0.30,
                              0.3 * 0.32 + 0.3 * 0.24 + 0.4 * 0.20};
  const double printed_fused[3] = {0.479, 0.273, 0.248};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(fused[i], expected[i], 1e-12);
    EXPECT_NEAR(fused[i], printed_fused[i], 1e-3);
  }
  const auto check = fusion::check_table4(c);
  EXPECT_FALSE(check.consistent);
  EXPECT_NEAR(check.max_abs_diff, 0.079, 1e-9);
  EXPECT_NE(fusion::describe(check).find("DISCREPANCY"), std::string::npos);
}

TEST(PresetWeights, CoefficientValidation) {
  EXPECT_THROW(fusion::validate(SourceCoefficients{0.5, 0.5, 0.5}), CoefficientSumError);
  EXPECT_THROW(fusion::validate(SourceCoefficients{-0.1, 0.6, 0.5}), CoefficientSumError);
  EXPECT_NO_THROW(fusion::validate(SourceCoefficients{0.2, 0.2, 0.6}));
}

TEST(Bonus, CapAndClampCases) {
  const CapsConfig config;
  const auto w = fusion::table4_sources().w_final;
  EXPECT_DOUBLE_EQ(fusion::apply_diversity_bonus(0.95, {{"urm", "rural", "lgbtq", "green_card"}}, config).caps_final, 100.0);
  EXPECT_DOUBLE_EQ(fusion::apply_diversity_bonus(0.5, {}, config).caps_final, 50.0);
  EXPECT_DOUBLE_EQ(fusion::apply_diversity_bonus(0.5, {{"rural"}}, config).bonus_applied, 3.0);
  auto generous = config;
  generous.bonus_table["first_gen"] = 5.0;
  EXPECT_DOUBLE_EQ(fusion::bonus_points({{"urm", "rural", "lgbtq", "green_card", "first_gen"}}, generous), 12.0);
  EXPECT_THROW(fusion::bonus_points({{"veteran"}}, config), UnknownFlagError);
  const ModuleScores m{0.6, 0.5, 0.4, 60.0};
  const auto r = fusion::score_caps(m, {}, w, config);
  EXPECT_NEAR(r.caps_final, 100.0 * (w[0] * 0.6 + w[1] * 0.5 + w[2] * 0.4), 1e-12);
  double total = 0.0;
  for (const auto& c : r.breakdown) total += c.contribution;
  EXPECT_NEAR(total, r.caps_raw, 1e-15);
}

TEST(DerivedWeights, SasOnlySignalDominates) {
  const auto data = sas_only(500, 11);
  const auto w_log = fusion::derive_logistic_weights(data, 0.1);
  const auto w_xgb = fusion::derive_tree_weights(data, fusion::default_tree_weight_params(), 0);
  EXPECT_GT(w_log.at("SAS"), 0.8);
  EXPECT_GT(w_xgb.at("SAS"), 0.8);
  EXPECT_NEAR(w_log.sum(), 1.0, 1e-12);
  const auto s = fusion::derive_sources(data, CapsConfig{}, 0);
  EXPECT_EQ(s.provenance, "derived");
  EXPECT_EQ(s.data_digest, fusion::digest(data));
  EXPECT_NEAR(s.w_final.sum(), 1.0, 1e-12);
}

TEST(DerivedWeights, RejectsThinOrConstantLabels) {
  auto data = sas_only(10, 1);
  EXPECT_THROW(fusion::derive_logistic_weights(data, 0.1), InsufficientDataError);
  data = sas_only(40, 1);
  std::fill(data.labels.begin(), data.labels.end(), 2);
  EXPECT_THROW(fusion::derive_logistic_weights(data, 0.1), DegenerateLabelsError);
}

TEST(DerivedWeights, SourcesJsonRoundTrip) {
  const auto s = fusion::table4_sources();
  const auto back = nlohmann::json(s).get<fusion::ModuleWeightSources>();
  EXPECT_EQ(back.w_final, s.w_final);
  EXPECT_EQ(back.provenance, "table4");
}

TEST(PresetWeights, PrintedPresetKeepsPrintedColumn) {
  const auto printed = fusion::preset_sources("table4_printed");
  ASSERT_TRUE(printed.has_value());
  EXPECT_DOUBLE_EQ(printed->w_final.at("SAS"), 0.40);
  EXPECT_DOUBLE_EQ(printed->w_final.at("EIS"), 0.29);
  EXPECT_EQ(printed->provenance, "table4_printed");
  EXPECT_EQ(fusion::preset_sources("table4")->w_final, fusion::table4_sources().w_final);
  EXPECT_FALSE(fusion::preset_sources("weights.json").has_value());
}
