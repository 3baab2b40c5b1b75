// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.
// Mock providers only, no network.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "caps/cohort.hpp"
#include "caps/eis.hpp"
#include "caps/engine.hpp"
#include "caps/eqi.hpp"
#include "caps/evaluation.hpp"
#include "caps/fusion.hpp"
#include "caps/rng.hpp"
#include "caps/sas.hpp"
#include "caps/shap.hpp"

using namespace caps;

namespace {

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double round4(double x) { return std::round(x * 1e4) / 1e4; }

void sas_weight_fusion() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto pca = WeightVector::normalized(
      {{"gpa", 0.1325}, {"sat", 0.1362}, {"toefl", 0.1249}, {"ap5_count", 0.2300}, {"course_difficulty", 0.3765}});
  const auto fused = sas::fuse_weights(pca, default_manual_sas_weights(), 0.1);
  const double elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  const double printed[5] = {0.3732, 0.1486, 0.1025, 0.1130, 0.2626};
  bool ok = elapsed < 1.0;
  std::string values;
  for (std::size_t j = 0; j < 5; ++j) {
    ok = ok && round4(fused[j]) == printed[j];
    values += fmt("%.4f ", fused[j]);
  }
  report("sas_weight_fusion", ok, "fused = " + values + fmt("in %.3f ms", elapsed));
}

void softmax_and_scale() {
  Rng rng(2024);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> raw(2 + rng.uniform_int(200));
    for (double& v : raw) v = rng.normal(0.0, 2.0);
    double sum = 0.0;
    for (double v : sas::sas_softmax(raw)) sum += v;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  const bool midpoint = sas::sas_scale(1.5) == 50.0;
  bool monotone = true;
  for (int i = 1; i < 1000; ++i) monotone = monotone && sas::sas_scale(i / 999.0 * 3.0) > sas::sas_scale((i - 1) / 999.0 * 3.0);
  report("sas_softmax_and_scale", worst <= 1e-12 && midpoint && monotone,
         fmt("max |sum-1| = %.2e, scale(1.5) = %.17g, ", worst, sas::sas_scale(1.5)) +
             (monotone ? "monotone on 1000 points" : "NOT monotone"));
}

void penalty() {
  const PenaltyParams p;
  const bool anchor = eqi::penalty_factor(p.x0, p) == p.lambda + (1.0 - p.lambda) / 2.0;
  bool increasing = true, bounded = true;
  Rng rng(7);
  for (int i = 1; i < 1000; ++i) {
    const double s = i / 999.0;
    increasing = increasing && eqi::penalty_factor(s, p) > eqi::penalty_factor((i - 1) / 999.0, p);
    const double raw = rng.uniform();
    bounded = bounded && eqi::apply_alignment_penalty(raw, s, p) <= raw;
  }
  report("eqi_alignment_penalty", anchor && increasing && bounded,
         fmt("factor(x0) = %.17g, ", eqi::penalty_factor(p.x0, p)) + (increasing ? "increasing" : "NOT increasing") +
             (bounded ? ", final <= raw" : ", final > raw seen"));
}

void eis_bounds() {
  Rng rng(99);
  int violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.uniform_int(kMaxActivities);
    std::vector<eis::ActivityScore> s;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back(eis::fuse_activity(rng.uniform(), static_cast<Tier>(rng.uniform_int(5)), 0.5));
      sum += s.back().fused;
    }
    const double avg = sum / static_cast<double>(n), coherence = rng.uniform();
    const double e = eis::eis_final(s, coherence);
    auto shuffled = s;
    rng.shuffle(shuffled);
    if (e < 0.85 * avg - 1e-12 || e > avg + 1e-12 || std::abs(eis::eis_final(shuffled, coherence) - e) > 1e-12) ++violations;
  }
  report("eis_bounds_and_permutation", violations == 0, fmt("%.0f violations in 1000 random sets", violations));
}

void caps_fusion() {
  const auto check = fusion::check_table4(SourceCoefficients{0.3, 0.3, 0.4});
  const double target[3] = {0.479, 0.273, 0.248};
  bool ok = true;
  for (std::size_t i = 0; i < 3; ++i) ok = ok && std::abs(check.computed[i] - target[i]) <= 1e-3;
  const auto message = fusion::describe(check);
  ok = ok && !check.consistent && message.find("DISCREPANCY") != std::string::npos;
  report("caps_weight_fusion_preset", ok, message);
}

void diversity_bonus() {
  CapsConfig config;
  const bool capped_score = fusion::apply_diversity_bonus(0.95, {{"urm", "lgbtq", "rural", "green_card"}}, config).caps_final == 100.0;
  bool identity = true;
  for (double raw : {0.0, 0.123, 0.5, 0.95, 1.0})
    identity = identity && fusion::apply_diversity_bonus(raw, {}, config).caps_final == raw * 100.0;
  config.bonus_table["first_gen"] = 3.0;
  const double five = fusion::bonus_points({{"urm", "lgbtq", "rural", "green_card", "first_gen"}}, config);
  report("diversity_bonus", capped_score && identity && five == 12.0,
         fmt("min(100, 95+12) -> %.1f, five flags -> %.1f", capped_score ? 100.0 : -1.0, five) +
             (identity ? ", zero-flag identity holds" : ", zero-flag identity broken"));
}

struct EqiRun {
  eqi::TrainedModel model;
  std::vector<eqi::Example> examples;
  double seconds = 0.0;
};

EqiRun eqi_training() {
  const auto providers = mock_providers();
  std::vector<std::pair<EssaySubmission, double>> rows;
  for (const auto& r : cohort::generate_essays(200, 42, *providers.rubric)) rows.push_back({{r.prompt_text, r.essay_text}, r.label});
  EqiRun run;
  const auto t0 = std::chrono::steady_clock::now();
  run.examples = eqi::featurize(rows, providers);
  run.model = eqi::train_eqi(run.examples, eqi::default_grid());
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report("eqi_grid_search", run.model.grid_results.size() == 72 && run.model.test.r2 >= 0.7 && run.seconds < 300.0,
         fmt("72 configs x 3 folds, held-out R^2 = %.4f, MSE = %.5f, %.1f s", run.model.test.r2, run.model.test.mse,
             run.seconds));
  return run;
}

double brute_force_gap(const gbt::RegressionEnsemble& m, std::span<const double> x, const gbt::Matrix& bg) {
  auto value = [&](unsigned mask) {
    double total = 0.0;
    std::vector<double> z(3);
    for (std::size_t r = 0; r < bg.rows; ++r) {
      for (std::size_t j = 0; j < 3; ++j) z[j] = (mask >> j) & 1u ? x[j] : bg(r, j);
      total += m.predict(z);
    }
    return total / static_cast<double>(bg.rows);
  };
  // |S|!(2-|S|)!/3! for |S| = 0, 1, 2
  const double w[3] = {1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0};
  const auto s = shap::tree_shap(m, x, bg);
  double gap = 0.0;
  for (unsigned i = 0; i < 3; ++i) {
    double phi = 0.0;
    for (unsigned mask = 0; mask < 8; ++mask) {
      if ((mask >> i) & 1u) continue;
      phi += w[__builtin_popcount(mask)] * (value(mask | (1u << i)) - value(mask));
    }
    gap = std::max(gap, std::abs(phi - s.phi[i]));
  }
  return gap;
}

void shapley(const EqiRun& run) {
  double additivity = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto report = eqi::explain_eqi(run.model, run.examples[i].features);
    additivity = std::max(additivity, report.additivity_gap());
  }
  // Reduced model on the three rubric features alone.
  gbt::Matrix x(run.examples.size(), 3);
  std::vector<double> y;
  for (std::size_t i = 0; i < run.examples.size(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) x(i, j) = run.examples[i].features.values[j];
    y.push_back(run.examples[i].label);
  }
  const auto reduced = gbt::fit_regression(x, y, run.model.best_params, 42);
  Rng rng(43);
  const auto bg = x.select_rows(rng.sample_indices(x.rows, 100));
  double oracle = 0.0;
  for (std::size_t i = 0; i < 50; ++i) oracle = std::max(oracle, brute_force_gap(reduced, x.row(i), bg));
  report("shapley_additivity_and_oracle", additivity <= 1e-6 && oracle <= 1e-9,
         fmt("max additivity gap %.2e on 50 essays, max |exact - brute force| %.2e on reduced model", additivity, oracle));
}

void tier_pattern() {
  const auto rows = cohort::generate_cohort(cohort::CohortSpec{}).rows;
  const auto r = evaluation::evaluate_logistic(rows, 42);
  const auto tree = evaluation::evaluate_tree_classifier(rows, 42);
  const auto& f = r.per_class;
  const double low_top = std::min({f[0].f1, f[1].f1, f[2].f1});
  const bool ok = r.accuracy >= 0.70 && low_top >= 0.9 && f[3].f1 < low_top && f[4].f1 < low_top && tree.train.accuracy == 1.0;
  report("tier_classification_pattern", ok,
         fmt("logistic accuracy %.3f, F1 tiers 0-2 min %.3f, ", r.accuracy, low_top) +
             fmt("tiers 3/4 F1 %.3f/%.3f, tree train accuracy %.3f", f[3].f1, f[4].f1, tree.train.accuracy));
}

void generator() {
  cohort::CohortSpec spec;
  spec.n = 10000;
  const auto rows = cohort::generate_cohort(spec).rows;
  const auto s = cohort::summarize(rows);
  const cohort::Distribution d[3] = {spec.sas, spec.eqi, spec.eis};
  bool ok = true;
  for (std::size_t k = 0; k < 3; ++k) ok = ok && std::abs(s.mean[k] - d[k].mean) <= 0.01 && s.min[k] >= d[k].min && s.max[k] <= d[k].max;
  report("cohort_generator", ok, fmt("means (%.4f, %.4f, %.4f), all samples inside declared ranges", s.mean[0], s.mean[1], s.mean[2]));
}

std::string pipeline_once() {
  const auto providers = mock_providers();
  std::vector<std::pair<EssaySubmission, double>> rows;
  for (const auto& r : cohort::generate_essays(200, 42, *providers.rubric)) rows.push_back({{r.prompt_text, r.essay_text}, r.label});
  auto model = std::make_shared<const eqi::TrainedModel>(eqi::train_eqi(eqi::featurize(rows, providers), {eqi::default_grid()[15]}));
  const Engine engine(CapsConfig{}, providers, model, fusion::table4_sources());
  cohort::CohortSpec spec;
  auto generated = cohort::generate_cohort(spec);
  const auto ctx = CohortContext::build("default", generated.academic, generated.rows, engine.config());

  ApplicantProfile p;
  p.id = "determinism";
  p.academic = {3.7, 1450, 108, 3, 0.8};
  p.essay = {cohort::essay_prompts()[0], "The challenge that shaped my goals was rebuilding our robotics club after it lost funding."};
  p.activities = {{"Captain of the robotics team", Tier::T2}, {"Library tutor for younger students", Tier::T3}};
  p.diversity.flags = {"rural"};
  const auto score = nlohmann::json(engine.score(p, ctx)).dump();
  const auto x = engine.explain(p);
  const auto explain = nlohmann::json(x.report).dump() + x.feedback;
  const auto logistic = nlohmann::json(evaluation::evaluate_logistic(generated.rows, 42)).dump();
  const auto tree = nlohmann::json(evaluation::evaluate_tree_classifier(generated.rows, 42)).dump();
  return score + "\n" + explain + "\n" + logistic + "\n" + tree;
}

void determinism() {
  const auto a = pipeline_once(), b = pipeline_once();
  report("mock_pipeline_determinism", a == b,
         fmt("score/explain/evaluate outputs (%.0f bytes) ", static_cast<double>(a.size())) +
             (a == b ? "bit-identical across two runs" : "DIFFER between runs"));
}

}  // namespace

int main() {
  log::set_sink([](const std::string&) {});
  sas_weight_fusion();
  softmax_and_scale();
  penalty();
  eis_bounds();
  caps_fusion();
  diversity_bonus();
  const auto run = eqi_training();
  shapley(run);
  tier_pattern();
  generator();
  determinism();
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
