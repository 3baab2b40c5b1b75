// Trains a small EQI model on synthetic essays, builds the default cohort
// and scores the sample profile with mock providers.

#include <iostream>

#include "caps/app.hpp"
#include "caps/cohort.hpp"
#include "caps/engine.hpp"

int main(int argc, char** argv) {
  const std::string profile_path = argc > 1 ? argv[1] : CAPS_SAMPLE_DIR "/data/profile.json";
  try {
    caps::CapsConfig config;
    auto providers = caps::mock_providers();
    const auto essays = caps::cohort::generate_essays(200, 42, *providers.rubric);
    auto model = std::make_shared<const caps::eqi::TrainedModel>(
        caps::eqi::train_eqi(caps::app::essay_examples(essays, providers), caps::app::training_grid(true)));
    std::cout << caps::app::training_report(*model);

    caps::Engine engine(config, providers, model, caps::fusion::table4_sources());
    auto generated = caps::cohort::generate_cohort({});
    const auto cohort = caps::CohortContext::build("default", std::move(generated.academic), std::move(generated.rows), config);
    const auto report = engine.score(caps::app::load_profile(profile_path), cohort);

    std::cout << "SAS " << report.modules.sas << "  EQI " << report.modules.eqi << "  EIS " << report.modules.eis << '\n';
    for (const auto& c : report.caps.breakdown)
      std::cout << "  " << c.module << ": " << c.score << " x " << c.weight << " = " << c.contribution << '\n';
    std::cout << "CAPS raw " << report.caps.caps_raw << ", bonus " << report.caps.bonus_applied << ", final "
              << report.caps.caps_final << '\n';
  } catch (const caps::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.category());
  }
}
