// caps: command-line front end for scoring, training, simulation and the
// JSON service. Exit codes: 1 internal, 2 input, 3 configuration, 4 provider.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "caps/app.hpp"
#include "caps/cohort.hpp"
#include "caps/constants.hpp"
#include "caps/engine.hpp"
#include "caps/evaluation.hpp"
#include "caps/fusion.hpp"
#include "caps/service.hpp"

namespace {

using nlohmann::json;

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  const auto receipt = caps::cohort::write_file_atomic(out_path, text);
  std::cerr << "wrote " << receipt.path << " (" << receipt.bytes << " bytes, fnv1a " << receipt.digest << ")\n";
}

void add_engine_flags(CLI::App* cmd, caps::app::EngineOptions& o) {
  cmd->add_option("--config", o.config_path, "CAPS config JSON");
  cmd->add_option("--model", o.model_path, "trained EQI model (from train-eqi)");
  cmd->add_option("--weights", o.weights_path, "weight sources JSON or preset name: table4 (default), table4_printed");
  auto* live = cmd->add_flag("--live", o.live, "use the HTTP LLM provider (needs $CAPS_API_KEY)");
  cmd->add_flag("--mock", "deterministic mock providers (default)")->excludes(live);
}

int exit_code(const caps::Error& e) { return static_cast<int>(e.category()); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CAPS admissions scoring engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(caps::kLibraryVersion));

  caps::app::EngineOptions engine;
  std::string profile_path, cohort_path, out_path;

  auto* score = app.add_subcommand("score", "score one applicant profile against a cohort");
  score->add_option("--profile", profile_path, "applicant profile JSON")->required();
  score->add_option("--cohort", cohort_path, "cohort spec (.json) or academic records (.csv)")->required();
  score->add_option("--out", out_path, "write the report here instead of stdout");
  add_engine_flags(score, engine);

  auto* explain = app.add_subcommand("explain", "essay attributions and feedback for a profile");
  explain->add_option("--profile", profile_path, "applicant profile JSON")->required();
  explain->add_option("--out", out_path);
  add_engine_flags(explain, engine);

  std::string data_path;
  std::uint64_t seed = 42;
  std::size_t synthetic_n = 200;
  bool quick = false;
  auto* train = app.add_subcommand("train-eqi", "grid-search and fit the essay quality model");
  auto* data_opt = train->add_option("--data", data_path, "essays (.jsonl or .csv) with essay_text, prompt_text, label");
  train->add_option("--synthetic", synthetic_n, "generate this many synthetic essays instead of --data")->excludes(data_opt);
  train->add_option("--seed", seed, "split/boosting seed");
  std::string model_out = "eqi_model.json";
  train->add_option("--out", model_out, "model artifact path")->capture_default_str();
  train->add_flag("--quick", quick, "single grid point instead of the 72-point grid");
  add_engine_flags(train, engine);

  std::string spec_path, academic_out;
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic cohort CSV");
  simulate->add_option("--spec", spec_path, "cohort spec JSON (defaults when omitted)");
  simulate->add_option("--out", out_path, "cohort CSV path (stdout when omitted)");
  simulate->add_option("--academic-out", academic_out, "also write the academic records CSV");

  auto* essays = app.add_subcommand("simulate-essays", "generate the synthetic labelled essay set");
  essays->add_option("--n", synthetic_n)->capture_default_str();
  essays->add_option("--seed", seed)->capture_default_str();
  essays->add_option("--out", out_path, "JSONL path (stdout when omitted)");

  bool as_json = false;
  auto* evaluate = app.add_subcommand("evaluate", "tier classification report on a cohort CSV");
  evaluate->add_option("--cohort", cohort_path, "cohort CSV from simulate")->required();
  evaluate->add_option("--seed", seed)->capture_default_str();
  evaluate->add_flag("--json", as_json, "machine-readable output");
  evaluate->add_option("--out", out_path);

  bool table4 = false;
  auto* weights = app.add_subcommand("weights", "derive fused module weights");
  auto* weights_cohort = weights->add_option("--cohort", cohort_path, "cohort CSV with tiers");
  weights->add_flag("--table4", table4, "published source columns instead of derivation")->excludes(weights_cohort);
  weights->add_option("--seed", seed)->capture_default_str();
  weights->add_option("--config", engine.config_path);
  weights->add_option("--out", out_path);

  caps::service::ServeOptions serve_options;
  std::vector<std::string> preload;
  auto* serve = app.add_subcommand("serve", "run the JSON HTTP service");
  serve->add_option("--host", serve_options.host)->capture_default_str();
  serve->add_option("--port", serve_options.port)->capture_default_str();
  serve->add_option("--cors-origin", serve_options.cors_origin)->capture_default_str();
  serve->add_option("--cohort", preload, "cohort files to register at startup");
  add_engine_flags(serve, engine);

  auto* constants = app.add_subcommand("constants", "validation ranges and tables shared with clients");
  constants->add_option("--config", engine.config_path);
  constants->add_option("--out", out_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*score) {
      const auto e = caps::app::load_engine(engine);
      const auto cohort = caps::app::load_cohort_context(cohort_path, e->config());
      const auto report = e->score(caps::app::load_profile(profile_path), cohort);
      emit(json(report).dump(2) + "\n", out_path);
    } else if (*explain) {
      const auto e = caps::app::load_engine(engine);
      const auto x = e->explain(caps::app::load_profile(profile_path));
      json top = json::array();
      for (const auto& [name, value] : x.report.top_k(15)) top.push_back({{"feature", name}, {"value", value}});
      emit(json{{"explanation", x.report}, {"top_k", top}, {"feedback", x.feedback}, {"eqi_raw", x.essay.eqi_raw},
                {"eqi_final", x.essay.eqi_final}, {"provenance", e->provenance()}}
                   .dump(2) + "\n",
           out_path);
    } else if (*train) {
      const auto doc = caps::app::config_document(engine.config_path);
      const auto config = caps::merge_config(caps::CapsConfig{}, doc);
      const auto providers = caps::app::make_providers(doc, config, engine.live);
      const auto records = data_path.empty() ? caps::cohort::generate_essays(synthetic_n, seed, *providers.rubric)
                                             : caps::cohort::load_essays(data_path);
      if (records.size() < caps::eqi::kMinTrainingRows)
        throw caps::InsufficientDataError("EQI training needs at least " + std::to_string(caps::eqi::kMinTrainingRows) +
                                          " rows, got " + std::to_string(records.size()));
      caps::eqi::TrainOptions options;
      options.seed = seed;
      const auto model = caps::eqi::train_eqi(caps::app::essay_examples(records, providers),
                                              caps::app::training_grid(quick), options);
      std::cout << caps::app::training_report(model);
      const auto receipt = caps::cohort::save_artifact(model, model_out);
      std::cout << "Model: " << receipt.path << " (fnv1a " << receipt.digest << ")\n";
    } else if (*simulate) {
      const auto spec = spec_path.empty() ? caps::cohort::CohortSpec{}
                                          : caps::cohort::spec_from_json(caps::json_util::parse(
                                                caps::cohort::read_file(spec_path), spec_path));
      const auto c = caps::cohort::generate_cohort(spec);
      std::ostringstream csv;
      caps::cohort::write_cohort_csv(csv, c.rows);
      emit(csv.str(), out_path);
      if (!academic_out.empty()) {
        std::ostringstream a;
        caps::cohort::write_academic_csv(a, c.rows,
                                         c.academic.empty() ? caps::cohort::generate_academic(spec.n, spec.seed + 1)
                                                            : c.academic);
        emit(a.str(), academic_out);
      }
    } else if (*essays) {
      const auto providers = caps::mock_providers();
      std::ostringstream out;
      caps::cohort::write_essays_jsonl(out, caps::cohort::generate_essays(synthetic_n, seed, *providers.rubric));
      emit(out.str(), out_path);
    } else if (*evaluate) {
      const auto rows = caps::cohort::load_cohort_csv(cohort_path);
      const auto logistic = caps::evaluation::evaluate_logistic(rows, seed);
      const auto tree = caps::evaluation::evaluate_tree_classifier(rows, seed);
      if (as_json) {
        emit(json{{"seed", seed}, {"n", rows.size()}, {"logistic", logistic}, {"tree", tree}}.dump(2) + "\n", out_path);
      } else {
        emit(caps::evaluation::format_report(logistic, "Logistic regression (test split)") +
                 caps::evaluation::format_report(tree.train, "Boosted trees (train split)") +
                 caps::evaluation::format_report(tree.test, "Boosted trees (test split)"),
             out_path);
      }
    } else if (*weights) {
      const auto config = caps::merge_config(caps::CapsConfig{}, caps::app::config_document(engine.config_path));
      json j;
      if (table4 || cohort_path.empty()) {
        j = caps::fusion::table4_sources(config.caps_weights);
        const auto check = caps::fusion::check_table4(config.caps_weights);
        j["table4_check"] = {{"consistent", check.consistent}, {"max_abs_diff", check.max_abs_diff},
                             {"message", caps::fusion::describe(check)}};
        if (!check.consistent) std::cerr << "caps: warning: " << caps::fusion::describe(check) << '\n';
      } else {
        j = caps::fusion::derive_sources(caps::app::labelled_scores(caps::cohort::load_cohort_csv(cohort_path)), config,
                                         seed);
      }
      emit(j.dump(2) + "\n", out_path);
    } else if (*serve) {
      const auto e = caps::app::load_engine(engine);
      caps::service::Service service(e);
      for (const auto& path : preload) {
        const auto id = service.add_cohort(std::make_shared<const caps::CohortContext>(
            caps::app::load_cohort_context(path, e->config())));
        std::cerr << "registered cohort '" << id << "' from " << path << '\n';
      }
      std::cerr << "listening on " << serve_options.host << ':' << serve_options.port << '\n';
      caps::service::serve(service, serve_options);
    } else if (*constants) {
      const auto config = caps::merge_config(caps::CapsConfig{}, caps::app::config_document(engine.config_path));
      emit(caps::constants_json(config).dump(2) + "\n", out_path);
    }
  } catch (const caps::Error& e) {
    std::cerr << "caps: error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "caps: internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
