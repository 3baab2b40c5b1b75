#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "caps/errors.hpp"
#include "caps/explanation.hpp"
#include "caps/log.hpp"
#include "caps/model.hpp"
#include "caps/resources.hpp"
#include "caps/text.hpp"

namespace caps {

// ---------------------------------------------------------------------------
// Prompts

enum class TemplateId { rubric, alignment, activity, coherence, feedback };
enum class ParseRule { rubric_lines, alignment_prefix, single_number, free_text };

inline std::string to_string(TemplateId id) {
  switch (id) {
    case TemplateId::rubric: return "rubric";
    case TemplateId::alignment: return "alignment";
    case TemplateId::activity: return "activity";
    case TemplateId::coherence: return "coherence";
    case TemplateId::feedback: return "feedback";
  }
  return "unknown";
}

inline constexpr std::string_view kPromptVersion = "v1";

inline ParseRule parse_rule_for(TemplateId id) {
  switch (id) {
    case TemplateId::rubric: return ParseRule::rubric_lines;
    case TemplateId::alignment: return ParseRule::alignment_prefix;
    case TemplateId::activity:
    case TemplateId::coherence: return ParseRule::single_number;
    case TemplateId::feedback: return ParseRule::free_text;
  }
  return ParseRule::free_text;
}

struct PromptSpec {
  TemplateId template_id;
  std::string filled_text;
  ParseRule expected_format;
};

inline std::string_view template_text(TemplateId id) {
  return resources::get("prompts/" + to_string(id) + "." + std::string(kPromptVersion) + ".txt");
}

// Single left-to-right pass over the template: substituted text is never
// re-scanned, so "{...}" inside an essay stays literal.
inline PromptSpec build_prompt(TemplateId id, const std::vector<std::pair<std::string, std::string>>& values) {
  const std::string_view tmpl = template_text(id);
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    bool replaced = false;
    if (tmpl[pos] == '{') {
      for (const auto& [name, value] : values) {
        const std::string placeholder = "{" + name + "}";
        if (tmpl.compare(pos, placeholder.size(), placeholder) == 0) {
          out += value;
          pos += placeholder.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(tmpl[pos++]);
  }
  if (text::is_blank(out)) throw Error("empty prompt for template " + to_string(id));
  return {id, std::move(out), parse_rule_for(id)};
}

inline std::string activity_list_text(const std::vector<Activity>& activities) {
  std::string out;
  for (std::size_t i = 0; i < activities.size(); ++i) {
    if (i) out += "\n";
    out += std::to_string(i + 1) + ". " + activities[i].description;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Response parsing

namespace parse {

// First decimal literal in `s` (optional sign, digits, fraction, exponent).
inline std::optional<double> first_number(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool digit = std::isdigit(static_cast<unsigned char>(s[i]));
    const bool dot_digit = s[i] == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]));
    if (!digit && !dot_digit) continue;
    std::size_t start = i;
    if (start > 0 && (s[start - 1] == '-' || s[start - 1] == '+')) --start;
    double value = 0.0;
    const char* first = s.data() + start;
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
    if (ec == std::errc{}) return value;
    i = static_cast<std::size_t>(ptr - s.data());
  }
  return std::nullopt;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline double single_number(const std::string& raw) {
  auto value = first_number(raw);
  if (!value) throw ParseError("expected a number", raw);
  return *value;
}

// Number following the literal "Alignment Score:" prefix.
inline double alignment(const std::string& raw) {
  const std::string key = "alignment score:";
  const auto pos = lower(raw).find(key);
  if (pos == std::string::npos) throw ParseError("missing \"Alignment Score:\" line", raw);
  const auto rest = std::string_view(raw).substr(pos + key.size());
  const auto end = rest.find('\n');
  auto value = first_number(rest.substr(0, end));
  if (!value) throw ParseError("no number after \"Alignment Score:\"", raw);
  return *value;
}

// Three "name: number" lines for content, language and structure.
inline RubricScores rubric(const std::string& raw) {
  std::optional<double> found[3];
  static const char* names[3] = {"content", "language", "structure"};
  std::istringstream lines(raw);
  std::string line;
  while (std::getline(lines, line)) {
    std::string l = lower(line);
    std::size_t start = 0;
    while (start < l.size() && (std::isspace(static_cast<unsigned char>(l[start])) || std::isdigit(static_cast<unsigned char>(l[start])) ||
                                l[start] == '.' || l[start] == '*' || l[start] == '-' || l[start] == '#'))
      ++start;
    for (int k = 0; k < 3; ++k) {
      const std::string name = names[k];
      if (l.compare(start, name.size(), name) != 0) continue;
      auto colon = l.find(':', start + name.size());
      if (colon == std::string::npos) continue;
      bool only_markup = true;
      for (std::size_t p = start + name.size(); p < colon; ++p)
        if (!std::isspace(static_cast<unsigned char>(l[p])) && l[p] != '*') only_markup = false;
      if (!only_markup || found[k]) continue;
      found[k] = first_number(std::string_view(line).substr(colon + 1));
    }
  }
  for (int k = 0; k < 3; ++k)
    if (!found[k]) throw ParseError(std::string("missing \"") + names[k] + ": <number>\" line", raw);
  return {*found[0], *found[1], *found[2]};
}

}  // namespace parse

// Out-of-range model outputs are clamped and reported, never propagated raw.
inline double clamp_reported(double value, double lo, double hi, std::string_view what) {
  if (!std::isfinite(value)) throw ProviderError(std::string(what) + " returned a non-finite value");
  if (value < lo || value > hi) {
    const double clamped = std::clamp(value, lo, hi);
    log::warn(std::string(what) + " value " + std::to_string(value) + " clamped to " + std::to_string(clamped));
    return clamped;
  }
  return value;
}

// ---------------------------------------------------------------------------
// Capability interfaces. Implementations must be safe for concurrent calls.

class RubricScorer {
public:
  virtual ~RubricScorer() = default;
  virtual RubricScores rubric_score(const EssaySubmission& essay) const = 0;
};

class AlignmentScorer {
public:
  virtual ~AlignmentScorer() = default;
  virtual double alignment_score(const std::string& prompt_text, const std::string& essay_text) const = 0;
};

class ActivityScorer {
public:
  virtual ~ActivityScorer() = default;
  virtual double activity_score(const Activity& activity) const = 0;
};

class CoherenceScorer {
public:
  virtual ~CoherenceScorer() = default;
  virtual double coherence_score(const std::vector<Activity>& activities) const = 0;
};

class Embedder {
public:
  virtual ~Embedder() = default;
  virtual EssayEmbedding embed_essay(const std::string& essay_text) const = 0;
};

class FeedbackWriter {
public:
  virtual ~FeedbackWriter() = default;
  virtual std::string generate_feedback(const ExplanationReport& attributions, const EssaySubmission& essay) const = 0;
};

// One implementation per capability, swappable independently.
struct Providers {
  std::shared_ptr<const RubricScorer> rubric;
  std::shared_ptr<const AlignmentScorer> alignment;
  std::shared_ptr<const ActivityScorer> activity;
  std::shared_ptr<const CoherenceScorer> coherence;
  std::shared_ptr<const Embedder> embedder;
  std::shared_ptr<const FeedbackWriter> feedback;
  std::string mode = "mock";
};

// ---------------------------------------------------------------------------
// Feedback helpers shared by the mock and live writers.

struct RubricAttribution {
  std::string dimension;  // content | language | structure
  double value = 0.0;
};

// The three rubric attributions ordered by |value| descending; ties keep the
// fixed order content, language, structure.
inline std::vector<RubricAttribution> ranked_rubric_attributions(const ExplanationReport& report) {
  std::vector<RubricAttribution> dims = {{"content", report.attribution("EssayContentScore")},
                                         {"language", report.attribution("EssayLanguageScore")},
                                         {"structure", report.attribution("EssayStructureScore")}};
  std::stable_sort(dims.begin(), dims.end(),
                   [](const auto& a, const auto& b) { return std::abs(a.value) > std::abs(b.value); });
  return dims;
}

// ---------------------------------------------------------------------------
// Deterministic offline provider.
//
// These formulas are stand-ins that make the pipeline reproducible without
// network access; they make no claim to agree with any language model.
//   rubric      1 + 4*u(seed, "rubric/<dimension>", essay_text)
//   alignment   |prompt content words found in essay| / |prompt content words|
//   activity    u(seed, "activity", description)
//   coherence   mean pairwise Jaccard of description token sets (one activity -> 1)
//   embedding   each token adds +-1 to bucket h % 384 (sign = top bit of h,
//               h = FNV-1a of decimal(seed) + '\x1f' + "embed" + '\x1f' + token),
//               then the vector is L2-normalised
// where u is text::hash_fraction.
class MockProvider final : public RubricScorer,
                           public AlignmentScorer,
                           public ActivityScorer,
                           public CoherenceScorer,
                           public Embedder,
                           public FeedbackWriter {
public:
  explicit MockProvider(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  RubricScores rubric_score(const EssaySubmission& essay) const override {
    validate(essay);
    return {1.0 + 4.0 * text::hash_fraction(seed_, "rubric/content", essay.essay_text),
            1.0 + 4.0 * text::hash_fraction(seed_, "rubric/language", essay.essay_text),
            1.0 + 4.0 * text::hash_fraction(seed_, "rubric/structure", essay.essay_text)};
  }

  double alignment_score(const std::string& prompt_text, const std::string& essay_text) const override {
    if (text::is_blank(prompt_text)) throw ValidationError("prompt_text", "must be nonempty");
    if (text::is_blank(essay_text)) throw ValidationError("essay_text", "must be nonempty");
    const auto wanted = text::content_words(prompt_text);
    if (wanted.empty()) return 0.0;
    const auto present = text::token_set(essay_text);
    std::size_t hits = 0;
    for (const auto& w : wanted) hits += present.count(w);
    return std::clamp(static_cast<double>(hits) / static_cast<double>(wanted.size()), 0.0, 1.0);
  }

  double activity_score(const Activity& activity) const override {
    validate(activity);
    return text::hash_fraction(seed_, "activity", activity.description);
  }

  double coherence_score(const std::vector<Activity>& activities) const override {
    if (activities.empty()) throw EmptyActivitiesError("coherence needs at least one activity");
    if (activities.size() == 1) return 1.0;
    std::vector<std::set<std::string>> sets;
    for (const auto& a : activities) sets.push_back(text::token_set(a.description));
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < sets.size(); ++i)
      for (std::size_t j = i + 1; j < sets.size(); ++j, ++pairs) total += text::jaccard(sets[i], sets[j]);
    return total / static_cast<double>(pairs);
  }

  EssayEmbedding embed_essay(const std::string& essay_text) const override {
    if (text::is_blank(essay_text)) throw ValidationError("essay_text", "must be nonempty");
    std::vector<double> v(kEmbeddingDim, 0.0);
    const std::string prefix = std::to_string(seed_) + "\x1f" + "embed" + "\x1f";
    for (const auto& token : text::tokenize(essay_text)) {
      const auto h = text::fnv1a64(prefix + token);
      v[h % kEmbeddingDim] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      // No tokens, or every bucket cancelled: fall back to the first axis.
      v[0] = 1.0;
    } else {
      for (double& x : v) x /= norm;
    }
    return {std::move(v)};
  }

  std::string generate_feedback(const ExplanationReport& report, const EssaySubmission& essay) const override {
    (void)essay;
    if (report.attributions.empty()) throw ValidationError("attributions", "must be nonempty");
    std::ostringstream out;
    out << "Essay feedback (rubric dimensions ordered by influence on the predicted score):\n";
    int rank = 1;
    for (const auto& d : ranked_rubric_attributions(report)) {
      out << rank++ << ". " << d.dimension << ": ";
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", std::abs(d.value));
      if (d.value < 0.0)
        out << "lowered the predicted score by " << buf << "; revise this first.\n";
      else if (d.value > 0.0)
        out << "raised the predicted score by " << buf << "; keep building on it.\n";
      else
        out << "had no measurable effect.\n";
    }
    return out.str();
  }

private:
  std::uint64_t seed_;
};

inline Providers mock_providers(std::uint64_t seed = 0) {
  auto mock = std::make_shared<const MockProvider>(seed);
  return {mock, mock, mock, mock, mock, mock, "mock"};
}

}  // namespace caps
