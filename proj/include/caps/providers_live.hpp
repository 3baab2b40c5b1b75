#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>

#include "caps/http.hpp"
#include <nlohmann/json.hpp>

#include "caps/errors.hpp"
#include "caps/providers.hpp"

namespace caps {

struct ProviderConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;  // never serialized
  std::string api_key_env = "CAPS_API_KEY";
  std::string model_name = "gpt-4o";
  std::string embedding_model = "all-MiniLM-L6-v2";
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  int parallelism_limit = 4;
  std::chrono::milliseconds backoff{250};
  double temperature = 0.0;
};

inline void validate(const ProviderConfig& c) {
  if (c.base_url.empty()) throw ConfigError("provider.base_url must be set");
  if (c.timeout.count() <= 0) throw ConfigError("provider.timeout_ms must be > 0");
  if (c.max_retries < 0) throw ConfigError("provider.max_retries must be >= 0");
  if (c.parallelism_limit < 1) throw ConfigError("provider.parallelism_limit must be >= 1");
}

// Reads the optional "provider" block of a config file and the credential
// from the environment. Throws ConfigError when no key is available.
inline ProviderConfig provider_config_from(const nlohmann::json& config) {
  ProviderConfig c;
  if (config.is_object() && config.contains("provider")) {
    const auto& p = config["provider"];
    try {
      c.base_url = p.value("base_url", c.base_url);
      c.api_key_env = p.value("api_key_env", c.api_key_env);
      c.model_name = p.value("model_name", c.model_name);
      c.embedding_model = p.value("embedding_model", c.embedding_model);
      c.timeout = std::chrono::milliseconds(p.value("timeout_ms", static_cast<long long>(c.timeout.count())));
      c.max_retries = p.value("max_retries", c.max_retries);
      c.parallelism_limit = p.value("parallelism_limit", c.parallelism_limit);
      c.backoff = std::chrono::milliseconds(p.value("backoff_ms", static_cast<long long>(c.backoff.count())));
      c.temperature = p.value("temperature", c.temperature);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad provider config: ") + e.what());
    }
  }
  const char* key = std::getenv(c.api_key_env.c_str());
  if (key == nullptr || *key == '\0') throw ConfigError("live mode needs an API key in $" + c.api_key_env);
  c.api_key = key;
  validate(c);
  return c;
}

/// Chat-completions style HTTP client with bounded concurrency and
/// exponential-backoff retries on transport errors, 429 and 5xx.
class LiveClient {
public:
  explicit LiveClient(ProviderConfig config)
      : config_(std::move(config)), slots_(config_.parallelism_limit) {
    validate(config_);
    split_url();
  }

  const ProviderConfig& config() const noexcept { return config_; }

  // Sends one user message; returns the assistant text.
  std::string chat(const PromptSpec& prompt) const {
    nlohmann::json body = {{"model", config_.model_name},
                           {"temperature", config_.temperature},
                           {"messages", {{{"role", "user"}, {"content", prompt.filled_text}}}}};
    const auto response = post("/chat/completions", body);
    try {
      return response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError("chat response lacks choices[0].message.content", response.dump());
    }
  }

  std::vector<double> embedding(const std::string& input) const {
    nlohmann::json body = {{"model", config_.embedding_model}, {"input", input}};
    const auto response = post("/embeddings", body);
    try {
      return response.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError("embedding response lacks data[0].embedding", response.dump());
    }
  }

private:
  class SlotGuard {
  public:
    explicit SlotGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
    ~SlotGuard() { s_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

  private:
    std::counting_semaphore<1024>& s_;
  };

  void split_url() {
    const auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("provider.base_url needs a scheme: " + config_.base_url);
    const auto path_start = config_.base_url.find('/', scheme_end + 3);
    origin_ = config_.base_url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  nlohmann::json post(const std::string& endpoint, const nlohmann::json& body) const {
    SlotGuard slot(slots_);
    const std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(config_.backoff * (1 << (attempt - 1)));
      httplib::Client client(origin_);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};
      auto result = client.Post(prefix_ + endpoint, headers, payload, "application/json");
      if (!result) {
        last_error = "transport error: " + httplib::to_string(result.error());
        continue;
      }
      if (result->status == 429 || result->status >= 500) {
        last_error = "HTTP " + std::to_string(result->status);
        continue;
      }
      if (result->status != 200)
        throw ProviderError("provider returned HTTP " + std::to_string(result->status) + ": " + result->body);
      try {
        return nlohmann::json::parse(result->body);
      } catch (const nlohmann::json::parse_error&) {
        throw ParseError("provider response is not JSON", result->body);
      }
    }
    throw ProviderError("provider request to " + endpoint + " failed after " +
                        std::to_string(config_.max_retries + 1) + " attempts (" + last_error + ")");
  }

  ProviderConfig config_;
  mutable std::counting_semaphore<1024> slots_;
  std::string origin_;
  std::string prefix_;
};

/// Every capability backed by the live chat/embedding endpoints.
class LiveProvider final : public RubricScorer,
                           public AlignmentScorer,
                           public ActivityScorer,
                           public CoherenceScorer,
                           public Embedder,
                           public FeedbackWriter {
public:
  explicit LiveProvider(ProviderConfig config) : client_(std::move(config)) {}

  RubricScores rubric_score(const EssaySubmission& essay) const override {
    validate(essay);
    const auto prompt = build_prompt(TemplateId::rubric, {{"essay_text", essay.essay_text}});
    auto scores = parse::rubric(client_.chat(prompt));
    scores.content = clamp_reported(scores.content, 1.0, 5.0, "rubric content");
    scores.language = clamp_reported(scores.language, 1.0, 5.0, "rubric language");
    scores.structure = clamp_reported(scores.structure, 1.0, 5.0, "rubric structure");
    return scores;
  }

  double alignment_score(const std::string& prompt_text, const std::string& essay_text) const override {
    if (text::is_blank(prompt_text)) throw ValidationError("prompt_text", "must be nonempty");
    if (text::is_blank(essay_text)) throw ValidationError("essay_text", "must be nonempty");
    const auto prompt =
        build_prompt(TemplateId::alignment, {{"prompt_text", prompt_text}, {"essay_text", essay_text}});
    return clamp_reported(parse::alignment(client_.chat(prompt)), 0.0, 1.0, "alignment score");
  }

  double activity_score(const Activity& activity) const override {
    validate(activity);
    const auto prompt = build_prompt(TemplateId::activity, {{"activity_description", activity.description}});
    return clamp_reported(parse::single_number(client_.chat(prompt)), 0.0, 1.0, "activity score");
  }

  double coherence_score(const std::vector<Activity>& activities) const override {
    if (activities.empty()) throw EmptyActivitiesError("coherence needs at least one activity");
    const auto prompt = build_prompt(TemplateId::coherence, {{"activity_list", activity_list_text(activities)}});
    return clamp_reported(parse::single_number(client_.chat(prompt)), 0.0, 1.0, "coherence score");
  }

  EssayEmbedding embed_essay(const std::string& essay_text) const override {
    if (text::is_blank(essay_text)) throw ValidationError("essay_text", "must be nonempty");
    auto values = client_.embedding(essay_text);
    if (values.size() != kEmbeddingDim)
      throw ParseError("expected a 384-dimensional embedding, got " + std::to_string(values.size()), "");
    double norm = 0.0;
    for (double v : values) {
      if (!std::isfinite(v)) throw ProviderError("embedding contains a non-finite value");
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) throw ProviderError("embedding is the zero vector");
    for (double& v : values) v /= norm;
    return {std::move(values)};
  }

  std::string generate_feedback(const ExplanationReport& report, const EssaySubmission& essay) const override {
    if (report.attributions.empty()) throw ValidationError("attributions", "must be nonempty");
    std::string lines;
    for (const auto& d : ranked_rubric_attributions(report))
      lines += "- " + d.dimension + ": " + std::to_string(d.value) + "\n";
    for (const auto& [name, value] : report.top_k(15))
      if (name.rfind("EssayEmbedding_", 0) == 0) lines += "- " + name + ": " + std::to_string(value) + "\n";
    const auto prompt = build_prompt(TemplateId::feedback, {{"attribution_list", lines},
                                                            {"prompt_text", essay.prompt_text},
                                                            {"essay_text", essay.essay_text}});
    auto reply = client_.chat(prompt);
    if (text::is_blank(reply)) throw ParseError("empty feedback", reply);
    return reply;
  }

private:
  LiveClient client_;
};

inline Providers live_providers(ProviderConfig config) {
  auto live = std::make_shared<const LiveProvider>(std::move(config));
  return {live, live, live, live, live, live, "live"};
}

}  // namespace caps
