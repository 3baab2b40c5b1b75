#pragma once

// JSON-over-HTTP front end. Service::handle is transport-free (tests and
// the CLI golden cross-check call it directly); serve() binds it to
// cpp-httplib.

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "caps/http.hpp"
#include <nlohmann/json.hpp>

#include "caps/cohort.hpp"
#include "caps/constants.hpp"
#include "caps/engine.hpp"
#include "caps/eqi.hpp"
#include "caps/errors.hpp"
#include "caps/fusion.hpp"
#include "caps/json_util.hpp"
#include "caps/log.hpp"

namespace caps::service {

struct Response {
  int status = 200;
  std::string body;
};

struct TrainingStatus {
  std::string state = "idle";  // idle | running | succeeded | failed
  std::string message;
  nlohmann::json report;
};

class Service {
public:
  explicit Service(std::shared_ptr<const Engine> engine) : engine_(std::move(engine)) {}

  ~Service() {
    if (trainer_.joinable()) trainer_.join();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  std::shared_ptr<const Engine> engine() const {
    std::lock_guard lock(mutex_);
    return engine_;
  }

  void set_engine(std::shared_ptr<const Engine> engine) {
    std::lock_guard lock(mutex_);
    engine_ = std::move(engine);
  }

  std::string add_cohort(std::shared_ptr<const CohortContext> cohort) {
    std::lock_guard lock(mutex_);
    const std::string id = cohort->id.empty() ? "cohort-" + std::to_string(++cohort_counter_) : cohort->id;
    if (cohort->id.empty()) {
      auto copy = std::make_shared<CohortContext>(*cohort);
      copy->id = id;
      cohort = std::move(copy);
    }
    cohorts_[id] = std::move(cohort);
    return id;
  }

  std::shared_ptr<const CohortContext> cohort(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = cohorts_.find(id);
    if (it == cohorts_.end()) throw NotFoundError("unknown cohort '" + id + "'");
    return it->second;
  }

  TrainingStatus training_status() const {
    std::lock_guard lock(mutex_);
    return training_;
  }

  void wait_for_training() {
    std::thread t;
    {
      std::lock_guard lock(mutex_);
      t = std::move(trainer_);
    }
    if (t.joinable()) t.join();
  }

  Response handle(const std::string& method, const std::string& path, const std::string& body) {
    try {
      return route(method, path, body);
    } catch (const NotFoundError& e) {
      return error(404, e.what());
    } catch (const ModelUnavailableError& e) {
      return error(409, e.what());
    } catch (const ValidationError& e) {
      return error(400, e.what(), e.field());
    } catch (const InputError& e) {
      return error(400, e.what());
    } catch (const ProviderError& e) {
      return error(502, e.what());
    } catch (const ConfigError& e) {
      return error(500, e.what());
    } catch (const std::exception& e) {
      return error(500, e.what());
    }
  }

private:
  static Response ok(const nlohmann::json& j, int status = 200) { return {status, j.dump()}; }

  static Response error(int status, const std::string& message, const std::string& field = {}) {
    nlohmann::json j = {{"error", message}, {"status", status}};
    if (!field.empty()) j["field"] = field;
    return {status, j.dump()};
  }

  static nlohmann::json parse_body(const std::string& body) { return json_util::parse(body.empty() ? "{}" : body, "body"); }

  // Body is either {"profile": {...}, ...} or the profile itself.
  static ApplicantProfile profile_of(const nlohmann::json& j, const char* key = "profile") {
    return profile_from_json(j.contains(key) ? j.at(key) : j);
  }

  Response route(const std::string& method, const std::string& path, const std::string& body) {
    if (method == "GET" && path == "/health") {
      const auto e = engine();
      return ok({{"status", "ok"}, {"version", kLibraryVersion}, {"model_loaded", e->has_model()},
                 {"provider_mode", e->providers().mode}});
    }
    if (method == "GET" && path == "/constants") return ok(constants_json(engine()->config()));
    if (method == "GET" && path == "/weights") {
      const auto e = engine();
      nlohmann::json j = e->weights();
      j["table4_check"] = fusion::describe(fusion::check_table4(e->weights().coefficients));
      return ok(j);
    }
    if (method == "GET" && path == "/train/status") {
      const auto s = training_status();
      return ok({{"state", s.state}, {"message", s.message}, {"report", s.report}});
    }
    if (method == "POST" && path == "/train") return start_training(parse_body(body));
    if (method == "POST" && path == "/cohort") return create_cohort(parse_body(body));
    if (method == "GET" && path.rfind("/cohort/", 0) == 0 && path.size() > 14 && path.ends_with("/stats")) {
      const auto id = path.substr(8, path.size() - 8 - 6);
      return ok(cohort_stats(*cohort(id)));
    }
    if (method == "POST" && path == "/score") {
      const auto j = parse_body(body);
      const auto e = engine();
      const auto c = cohort(json_util::get<std::string>(j, "cohort_id", ""));
      return ok(e->score(profile_of(j), *c));
    }
    if (method == "POST" && path == "/whatif") {
      const auto j = parse_body(body);
      const auto e = engine();
      const auto c = cohort(json_util::get<std::string>(j, "cohort_id", ""));
      const auto base = profile_of(j, "base_profile");
      return ok(what_if(*e, base, j.value("overrides", nlohmann::json::object()), *c));
    }
    if (method == "POST" && path == "/explain") {
      const auto j = parse_body(body);
      const auto e = engine();
      const auto x = e->explain(profile_of(j));
      const auto k = j.value("top_k", std::size_t{15});
      nlohmann::json top = nlohmann::json::array();
      for (const auto& [name, value] : x.report.top_k(k)) top.push_back({{"feature", name}, {"value", value}});
      return ok({{"explanation", x.report},
                 {"top_k", top},
                 {"feedback", x.feedback},
                 {"eqi_raw", x.essay.eqi_raw},
                 {"eqi_final", x.essay.eqi_final},
                 {"provenance", e->provenance()}});
    }
    return error(404, "no route for " + method + " " + path);
  }

  Response create_cohort(const nlohmann::json& j) {
    const auto e = engine();
    std::shared_ptr<const CohortContext> ctx;
    if (j.contains("academic")) {
      std::vector<AcademicRecord> academic;
      std::size_t i = 0;
      for (const auto& a : j.at("academic")) academic.push_back(academic_from_json(a, "academic[" + std::to_string(i++) + "]"));
      ctx = std::make_shared<CohortContext>(CohortContext::build("", std::move(academic), {}, e->config()));
    } else {
      const auto spec = cohort::spec_from_json(j.contains("spec") ? j.at("spec") : j);
      auto generated = cohort::generate_cohort(spec);
      if (generated.academic.empty()) generated.academic = cohort::generate_academic(spec.n, spec.seed + 1);
      ctx = std::make_shared<CohortContext>(
          CohortContext::build("", std::move(generated.academic), std::move(generated.rows), e->config()));
    }
    const auto id = add_cohort(ctx);
    return ok({{"cohort_id", id}, {"n", ctx->academic.size()}}, 201);
  }

  static nlohmann::json cohort_stats(const CohortContext& c) {
    nlohmann::json j = {{"cohort_id", c.id}, {"n_academic", c.academic.size()}, {"sas_calibration", c.calibration}};
    if (!c.rows.empty()) j["module_scores"] = cohort::summarize(c.rows);
    return j;
  }

  Response start_training(const nlohmann::json& j) {
    std::vector<cohort::EssayRecord> records;
    const auto e = engine();
    const auto seed = j.value("seed", std::uint64_t{42});
    if (j.contains("data")) {
      records = cohort::load_essays(json_util::get<std::string>(j, "data", ""));
    } else {
      const auto& s = j.contains("synthetic") ? j.at("synthetic") : nlohmann::json::object();
      records = cohort::generate_essays(s.value("n", std::size_t{200}), s.value("seed", std::uint64_t{42}),
                                        *e->providers().rubric);
    }
    if (records.size() < eqi::kMinTrainingRows)
      throw InsufficientDataError("EQI training needs at least 30 rows, got " + std::to_string(records.size()));
    const bool quick = j.value("grid", std::string("full")) == "quick";
    const auto save_to = j.value("save_to", std::string());

    std::lock_guard lock(mutex_);
    if (training_.state == "running") return error(409, "a training job is already running");
    if (trainer_.joinable()) trainer_.join();
    training_ = {"running", "training on " + std::to_string(records.size()) + " essays", nullptr};
    trainer_ = std::thread([this, records = std::move(records), seed, quick, save_to] {
      try {
        const auto current = engine();
        std::vector<std::pair<EssaySubmission, double>> rows;
        for (const auto& r : records) rows.push_back({{r.prompt_text, r.essay_text}, r.label});
        const auto examples = eqi::featurize(rows, current->providers());
        auto grid = eqi::default_grid();
        if (quick) grid = {grid[15]};  // depth 3, lr 0.1, 200 trees, full sampling
        eqi::TrainOptions options;
        options.seed = seed;
        auto model = std::make_shared<const eqi::TrainedModel>(eqi::train_eqi(examples, grid, options));
        if (!save_to.empty()) cohort::save_artifact(*model, save_to);
        auto next = std::make_shared<const Engine>(current->config(), current->providers(), model, current->weights());
        nlohmann::json report = {{"best_params", model->best_params},
                                 {"cv_report", {{"best_cv_neg_mse", model->best_cv_neg_mse}, {"folds", model->folds}}},
                                 {"test_report", {{"mse", model->test.mse}, {"r2", model->test.r2}}}};
        std::lock_guard done(mutex_);
        engine_ = std::move(next);
        training_ = {"succeeded", "model swapped in", report};
      } catch (const std::exception& ex) {
        std::lock_guard done(mutex_);
        training_ = {"failed", ex.what(), nullptr};
      }
    });
    return ok({{"state", "running"}}, 202);
  }

  mutable std::mutex mutex_;
  std::shared_ptr<const Engine> engine_;
  std::map<std::string, std::shared_ptr<const CohortContext>> cohorts_;
  int cohort_counter_ = 0;
  TrainingStatus training_;
  std::thread trainer_;
};

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin = "*";
};

inline void attach(httplib::Server& server, Service& service, const ServeOptions& options) {
  server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    const auto r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.Get(R"(/.*)", forward);
  server.Post(R"(/.*)", forward);
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

// Blocks until the server stops.
inline void serve(Service& service, const ServeOptions& options) {
  httplib::Server server;
  attach(server, service, options);
  if (!server.bind_to_port(options.host, options.port))
    throw ConfigError("cannot bind " + options.host + ":" + std::to_string(options.port));
  server.listen_after_bind();
}

}  // namespace caps::service
