#pragma once

#include <cmath>
#include <future>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caps/config.hpp"
#include "caps/errors.hpp"
#include "caps/log.hpp"
#include "caps/model.hpp"
#include "caps/providers.hpp"

namespace caps::eis {

inline constexpr double kTierMismatchWarning = 0.4;

inline double tier_score(Tier t) {
  switch (t) {
    case Tier::T1: return 1.0;
    case Tier::T2: return 0.8;
    case Tier::T3: return 0.6;
    case Tier::T4: return 0.4;
    case Tier::T5: return 0.2;
  }
  throw Error("unknown tier");
}

struct ActivityScore {
  double gpt_score = 0.0;
  double tier_score = 0.0;
  double fused = 0.0;
};

inline ActivityScore fuse_activity(double gpt_score, Tier tier, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("eis_gamma", "out of [0,1]");
  if (!(gpt_score >= 0.0 && gpt_score <= 1.0)) throw ValidationError("gpt_score", "out of [0,1]");
  const double t = tier_score(tier);
  return {gpt_score, t, gamma * gpt_score + (1.0 - gamma) * t};
}

// Warns (does not override) when the provider and the self-reported tier
// disagree by more than 0.4.
inline ActivityScore score_activity(const Activity& activity, double gamma, const ActivityScorer& scorer) {
  validate(activity);
  auto s = fuse_activity(scorer.activity_score(activity), activity.tier, gamma);
  if (std::abs(s.gpt_score - s.tier_score) > kTierMismatchWarning)
    log::warn("activity '" + activity.description.substr(0, 40) + "': provider score " + std::to_string(s.gpt_score) +
              " disagrees with self-reported " + to_string(activity.tier));
  return s;
}

inline double coherence_factor(double coherence) { return 0.85 + 0.15 * coherence; }

inline double eis_final(std::span<const ActivityScore> scores, double coherence) {
  if (scores.empty()) throw EmptyActivitiesError("EIS needs at least one activity");
  if (!(coherence >= 0.0 && coherence <= 1.0)) throw ValidationError("coherence", "out of [0,1]");
  double sum = 0.0;
  for (const auto& s : scores) sum += s.fused;
  return sum / static_cast<double>(scores.size()) * coherence_factor(coherence);
}

struct EisResult {
  double eis = 0.0;
  std::vector<ActivityScore> per_activity;
  double coherence = 0.0;
};

inline EisResult score_profile_eis(const std::vector<Activity>& activities, const CapsConfig& config,
                                   const Providers& providers) {
  if (activities.empty()) throw EmptyActivitiesError("EIS needs at least one activity");
  if (activities.size() > kMaxActivities) throw ValidationError("activities", "at most 10 activities");
  auto coherence = std::async(std::launch::async, [&] { return providers.coherence->coherence_score(activities); });
  std::vector<std::future<ActivityScore>> pending;
  for (const auto& a : activities)
    pending.push_back(std::async(std::launch::async,
                                 [&a, &config, &providers] { return score_activity(a, config.eis_gamma, *providers.activity); }));
  EisResult out;
  for (auto& p : pending) out.per_activity.push_back(p.get());
  out.coherence = coherence.get();
  out.eis = eis_final(out.per_activity, out.coherence);
  return out;
}

inline void to_json(nlohmann::json& j, const ActivityScore& s) {
  j = {{"gpt_score", s.gpt_score}, {"tier_score", s.tier_score}, {"fused", s.fused}};
}

inline void to_json(nlohmann::json& j, const EisResult& r) {
  j = {{"eis", r.eis}, {"coherence", r.coherence}, {"per_activity", r.per_activity}};
}

}  // namespace caps::eis
