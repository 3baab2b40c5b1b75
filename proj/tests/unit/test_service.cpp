#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include "caps/http.hpp"
#include "caps/service.hpp"
#include "support.hpp"

using namespace caps;
using nlohmann::json;

namespace {

std::shared_ptr<const Engine> make_engine(bool with_model = true) {
  return std::make_shared<const Engine>(CapsConfig{}, mock_providers(), with_model ? test::quick_model() : nullptr,
                                        fusion::table4_sources());
}

json sample_profile() { return json::parse(cohort::read_file(test::data_path("../samples/data/profile.json"))); }

struct Fixture {
  service::Service service{make_engine()};
  std::string cohort_id;

  Fixture() {
    const auto r = service.handle("POST", "/cohort", test::load_json("fixtures/cohort_spec.json").dump());
    cohort_id = json::parse(r.body).at("cohort_id").get<std::string>();
  }

  json post(const std::string& path, const json& body, int expected = 200) {
    const auto r = service.handle("POST", path, body.dump());
    EXPECT_EQ(r.status, expected) << r.body;
    return json::parse(r.body);
  }
};

// Numbers compared with a relative tolerance, everything else exactly.
void expect_json_near(const json& a, const json& b, const std::string& path = "$") {
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    EXPECT_NEAR(x, y, 1e-9 * std::max(1.0, std::abs(y))) << path;
    return;
  }
  ASSERT_EQ(a.type(), b.type()) << path;
  if (a.is_object()) {
    ASSERT_EQ(a.size(), b.size()) << path;
    for (const auto& [k, v] : b.items()) {
      ASSERT_TRUE(a.contains(k)) << path << "." << k;
      expect_json_near(a.at(k), v, path + "." + k);
    }
  } else if (a.is_array()) {
    ASSERT_EQ(a.size(), b.size()) << path;
    for (std::size_t i = 0; i < a.size(); ++i) expect_json_near(a[i], b[i], path + "[" + std::to_string(i) + "]");
  } else {
    EXPECT_EQ(a, b) << path;
  }
}

}  // namespace

TEST(Service, HealthAndConstants) {
  service::Service s(make_engine());
  const auto h = s.handle("GET", "/health", "");
  EXPECT_EQ(h.status, 200);
  EXPECT_TRUE(json::parse(h.body).at("model_loaded").get<bool>());
  const auto c = json::parse(s.handle("GET", "/constants", "").body);
  EXPECT_EQ(c.at("diversity").at("bonus_cap"), 12.0);
  EXPECT_EQ(s.handle("GET", "/nowhere", "").status, 404);
}

TEST(Service, ScoreWithoutModelIs409) {
  service::Service s(make_engine(false));
  const auto r = s.handle("POST", "/cohort", json{{"n", 60}, {"seed", 1}}.dump());
  const auto id = json::parse(r.body).at("cohort_id").get<std::string>();
  const auto score = s.handle("POST", "/score", json{{"cohort_id", id}, {"profile", sample_profile()}}.dump());
  EXPECT_EQ(score.status, 409) << score.body;
}

TEST(Service, ValidationErrorsNameTheField) {
  Fixture f;
  auto p = sample_profile();
  p["academic"]["gpa"] = 4.7;
  const auto j = f.post("/score", {{"cohort_id", f.cohort_id}, {"profile", p}}, 400);
  EXPECT_EQ(j.at("field"), "gpa");
  f.post("/score", {{"cohort_id", "nope"}, {"profile", sample_profile()}}, 404);
  const auto bad = f.service.handle("POST", "/score", "{\"cohort_id\": ");
  EXPECT_EQ(bad.status, 400);
}

TEST(Service, CohortStatsAndWeights) {
  Fixture f;
  const auto r = f.service.handle("GET", "/cohort/" + f.cohort_id + "/stats", "");
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = json::parse(r.body);
  EXPECT_EQ(j.at("n_academic"), 300);
  EXPECT_NEAR(j.at("module_scores").at("modules").at("sas").at("mean").get<double>(), 0.742, 0.03);
  EXPECT_EQ(f.service.handle("GET", "/cohort/missing/stats", "").status, 404);
  const auto w = json::parse(f.service.handle("GET", "/weights", "").body);
  double total = 0.0;
  for (const auto& e : w.at("w_final")) total += e.at("weight").get<double>();
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_NE(w.at("table4_check").get<std::string>().find("DISCREPANCY"), std::string::npos);
}

TEST(Service, ScoreMatchesGoldenAndRepeatsExactly) {
  Fixture f;
  const json body = {{"cohort_id", f.cohort_id}, {"profile", sample_profile()}};
  const auto first = f.service.handle("POST", "/score", body.dump());
  ASSERT_EQ(first.status, 200) << first.body;
  EXPECT_EQ(f.service.handle("POST", "/score", body.dump()).body, first.body);
  auto got = json::parse(first.body);
  got.erase("cohort_id");
  const auto golden_path = test::data_path("golden/score_applicant-001.json");
  if (std::getenv("CAPS_UPDATE_GOLDEN")) cohort::write_file_atomic(golden_path, got.dump(2) + "\n");
  auto golden = json::parse(cohort::read_file(golden_path));
  expect_json_near(got, golden);
  const double final_score = got.at("caps").at("caps_final").get<double>();
  EXPECT_GE(final_score, 0.0);
  EXPECT_LE(final_score, 100.0);
}

TEST(Service, WhatIfDeltas) {
  Fixture f;
  const auto base = sample_profile();
  const auto empty = f.post("/whatif", {{"cohort_id", f.cohort_id}, {"base_profile", base}, {"overrides", json::object()}});
  for (const auto& [k, v] : empty.at("delta").items()) EXPECT_EQ(v.get<double>(), 0.0) << k;
  const auto score = f.post("/score", {{"cohort_id", f.cohort_id}, {"profile", base}});
  EXPECT_EQ(empty.at("patched").at("caps").at("caps_final"), score.at("caps").at("caps_final"));

  const auto sat = f.post("/whatif", {{"cohort_id", f.cohort_id},
                                      {"base_profile", base},
                                      {"overrides", {{"academic", {{"sat", base["academic"]["sat"].get<int>() + 100}}}}}});
  EXPECT_GT(sat.at("delta").at("sas").get<double>(), 0.0);
  EXPECT_EQ(sat.at("delta").at("eqi").get<double>(), 0.0);
  EXPECT_EQ(sat.at("delta").at("eis").get<double>(), 0.0);

  const json weak = test::load_json("fixtures/profile_weak.json");
  json activities = weak["activities"];
  activities.push_back({{"description", "Captain of the school chess club"}, {"tier", "T1"}});
  const auto eis = f.post("/whatif", {{"cohort_id", f.cohort_id}, {"base_profile", weak}, {"overrides", {{"activities", activities}}}});
  EXPECT_GT(eis.at("delta").at("eis").get<double>(), 0.0);
  EXPECT_EQ(eis.at("delta").at("sas").get<double>(), 0.0);

  f.post("/whatif", {{"cohort_id", f.cohort_id}, {"base_profile", base}, {"overrides", {{"hobbies", 1}}}}, 400);
}

TEST(Service, ExplainReturnsAdditiveReport) {
  Fixture f;
  const auto j = f.post("/explain", {{"profile", sample_profile()}, {"top_k", 5}});
  EXPECT_EQ(j.at("top_k").size(), 5u);
  const auto report = j.at("explanation").get<ExplanationReport>();
  EXPECT_LE(report.additivity_gap(), 1e-6);
  EXPECT_NE(j.at("feedback").get<std::string>().find("content"), std::string::npos);
  EXPECT_LE(j.at("eqi_final").get<double>(), j.at("eqi_raw").get<double>());
}

TEST(Service, TrainingSwapsModelIn) {
  service::Service s(make_engine(false));
  const auto r = s.handle("POST", "/train", json{{"synthetic", {{"n", 60}, {"seed", 3}}}, {"grid", "quick"}}.dump());
  EXPECT_EQ(r.status, 202) << r.body;
  s.wait_for_training();
  const auto status = json::parse(s.handle("GET", "/train/status", "").body);
  EXPECT_EQ(status.at("state"), "succeeded") << status.dump();
  EXPECT_TRUE(json::parse(s.handle("GET", "/health", "").body).at("model_loaded").get<bool>());
  EXPECT_EQ(s.handle("POST", "/train", json{{"synthetic", {{"n", 10}}}}.dump()).status, 400);
}

TEST(Service, HttpTransportSendsCorsHeaders) {
  service::Service s(make_engine());
  httplib::Server server;
  service::attach(server, s, {"127.0.0.1", 0, "http://localhost:5173"});
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  const auto pre = client.Options("/score");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  EXPECT_EQ(pre->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
  EXPECT_NE(pre->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
  const auto health = client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
  EXPECT_EQ(health->get_header_value("Content-Type"), "application/json");
  server.stop();
  t.join();
}
