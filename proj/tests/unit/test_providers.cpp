#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "caps/http.hpp"
#include "caps/providers.hpp"
#include "caps/providers_live.hpp"
#include "support.hpp"

using namespace caps;
using nlohmann::json;

namespace {

// Expectations written by tests/oracles/mock_hash_oracle.py.
const json& oracle() {
  static const json j = test::load_json("fixtures/mock_oracle.json");
  return j;
}

}  // namespace

class MockAgainstOracle : public ::testing::TestWithParam<std::string> {};

TEST_P(MockAgainstOracle, RubricAlignmentActivityCoherence) {
  const auto profile = test::fixture_profile(GetParam());
  const auto& expected = oracle().at(profile.id);
  const MockProvider mock;
  const auto r = mock.rubric_score(profile.essay);
  EXPECT_NEAR(r.content, expected["rubric"]["content"].get<double>(), 1e-12);
  EXPECT_NEAR(r.language, expected["rubric"]["language"].get<double>(), 1e-12);
  EXPECT_NEAR(r.structure, expected["rubric"]["structure"].get<double>(), 1e-12);
  EXPECT_NEAR(mock.alignment_score(profile.essay.prompt_text, profile.essay.essay_text),
              expected["alignment"].get<double>(), 1e-12);
  for (std::size_t i = 0; i < profile.activities.size(); ++i)
    EXPECT_NEAR(mock.activity_score(profile.activities[i]), expected["activities"][i]["gpt_score"].get<double>(), 1e-12);
  EXPECT_NEAR(mock.coherence_score(profile.activities), expected["coherence"].get<double>(), 1e-12);
  const auto e = mock.embed_essay(profile.essay.essay_text);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(e.values[i], expected["embedding_head"][i].get<double>(), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Fixtures, MockAgainstOracle, ::testing::Values("profile_strong", "profile_weak"));

TEST(Mock, StrongFixtureScoresHigh) {
  const auto r = MockProvider().rubric_score(test::fixture_profile("profile_strong").essay);
  EXPECT_GE(r.content, 3.0);
  EXPECT_GE(r.language, 3.0);
  EXPECT_GE(r.structure, 3.0);
}

TEST(Mock, DeterministicAndSeeded) {
  const EssaySubmission e{"Describe a challenge.", "I faced a challenge and grew."};
  EXPECT_EQ(MockProvider(0).rubric_score(e), MockProvider(0).rubric_score(e));
  EXPECT_NE(MockProvider(0).rubric_score(e), MockProvider(1).rubric_score(e));
  const auto v = MockProvider().embed_essay(e.essay_text).values;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_EQ(v.size(), kEmbeddingDim);
}

TEST(Mock, EdgeCases) {
  const MockProvider mock;
  EXPECT_DOUBLE_EQ(mock.alignment_score("the and of", "anything"), 0.0);
  EXPECT_DOUBLE_EQ(mock.alignment_score("robots", "I build Robots."), 1.0);
  EXPECT_DOUBLE_EQ(mock.coherence_score({{"solo activity", Tier::T3}}), 1.0);
  EXPECT_THROW(mock.coherence_score({}), EmptyActivitiesError);
  EXPECT_THROW(mock.rubric_score({"prompt", " "}), ValidationError);
}

TEST(Prompts, SubstitutionIsSinglePass) {
  const auto p = build_prompt(TemplateId::rubric, {{"essay_text", "An essay mentioning {essay_text} literally."}});
  EXPECT_NE(p.filled_text.find("An essay mentioning {essay_text} literally."), std::string::npos);
  EXPECT_EQ(p.expected_format, ParseRule::rubric_lines);
  EXPECT_NE(p.filled_text.find("Content: <score>"), std::string::npos);
  const auto a = build_prompt(TemplateId::alignment, {{"prompt_text", "P"}, {"essay_text", "E"}});
  EXPECT_EQ(a.expected_format, ParseRule::alignment_prefix);
  EXPECT_EQ(a.filled_text.find("{prompt_text}"), std::string::npos);
}

TEST(Parse, RubricLines) {
  const auto r = parse::rubric("Sure!\n**Content:** 4\n2. Language: 3.5/5\n- Structure : 5\n");
  EXPECT_EQ(r, (RubricScores{4.0, 3.5, 5.0}));
  EXPECT_THROW(parse::rubric("Content: 4\nLanguage: 3"), ParseError);
}

TEST(Parse, AlignmentAndNumbers) {
  EXPECT_DOUBLE_EQ(parse::alignment("Reasoning...\nAlignment Score: 0.85\n"), 0.85);
  EXPECT_THROW(parse::alignment("Score 0.8"), ParseError);
  EXPECT_DOUBLE_EQ(parse::single_number("The score is 0.7."), 0.7);
  EXPECT_DOUBLE_EQ(parse::single_number("-.5"), -0.5);
  EXPECT_THROW(parse::single_number("none"), ParseError);
}

TEST(Parse, ClampReported) {
  EXPECT_DOUBLE_EQ(clamp_reported(1.3, 0.0, 1.0, "x"), 1.0);
  EXPECT_DOUBLE_EQ(clamp_reported(0.3, 0.0, 1.0, "x"), 0.3);
  EXPECT_THROW(clamp_reported(std::nan(""), 0.0, 1.0, "x"), ProviderError);
}

TEST(LiveConfig, MissingKeyIsConfigurationError) {
  ::unsetenv("CAPS_TEST_MISSING_KEY");
  const json doc = {{"provider", {{"api_key_env", "CAPS_TEST_MISSING_KEY"}}}};
  EXPECT_THROW(provider_config_from(doc), ConfigError);
}

namespace {

// Local stand-in for a chat/embedding endpoint.
class StubServer {
public:
  StubServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      if (failures_left_ > 0) {
        --failures_left_;
        res.status = 503;
        return;
      }
      last_auth_ = req.get_header_value("Authorization");
      const auto body = json::parse(req.body);
      const auto content = body["messages"][0]["content"].get<std::string>();
      std::string reply = "0.75";
      if (content.find("Content: <score>") != std::string::npos) reply = "Content: 4\nLanguage: 6\nStructure: 3";
      res.set_content(json{{"choices", {{{"message", {{"content", reply}}}}}}}.dump(), "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request&, httplib::Response& res) {
      std::vector<double> v(kEmbeddingDim, 0.0);
      v[3] = 2.0;
      res.set_content(json{{"data", {{{"embedding", v}}}}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  ProviderConfig config() const {
    ProviderConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    c.api_key = "test-key";
    c.backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::milliseconds(2000);
    return c;
  }

  std::atomic<int> failures_left_{0};
  std::string last_auth_;

private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(LiveProvider, ParsesClampsAndNormalises) {
  StubServer stub;
  const LiveProvider live(stub.config());
  const auto r = live.rubric_score({"Prompt", "Essay text"});
  EXPECT_EQ(r, (RubricScores{4.0, 5.0, 3.0}));  // language 6 clamped
  EXPECT_EQ(stub.last_auth_, "Bearer test-key");
  EXPECT_DOUBLE_EQ(live.activity_score({"Robotics", Tier::T2}), 0.75);
  const auto e = live.embed_essay("Essay text");
  EXPECT_DOUBLE_EQ(e.values[3], 1.0);
}

TEST(LiveProvider, RetriesThenGivesUp) {
  StubServer stub;
  stub.failures_left_ = 2;
  auto config = stub.config();
  config.max_retries = 3;
  EXPECT_DOUBLE_EQ(LiveProvider(config).coherence_score({{"a", Tier::T1}, {"b", Tier::T2}}), 0.75);
  stub.failures_left_ = 10;
  config.max_retries = 1;
  EXPECT_THROW(LiveProvider(config).activity_score({"a", Tier::T1}), ProviderError);
}

TEST(LiveProvider, UnreachableEndpointIsProviderError) {
  ProviderConfig c;
  c.base_url = "http://127.0.0.1:1/v1";
  c.api_key = "k";
  c.max_retries = 0;
  c.timeout = std::chrono::milliseconds(500);
  EXPECT_THROW(LiveProvider(c).activity_score({"a", Tier::T1}), ProviderError);
}
