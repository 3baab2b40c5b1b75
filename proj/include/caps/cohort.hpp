#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caps/csv.hpp"
#include "caps/errors.hpp"
#include "caps/json_util.hpp"
#include "caps/model.hpp"
#include "caps/providers.hpp"
#include "caps/rng.hpp"
#include "caps/text.hpp"

namespace caps::cohort {

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Truncated Gaussian

struct Distribution {
  double mean = 0.5;
  double std = 0.1;
  double min = 0.0;
  double max = 1.0;
};

inline void validate(const Distribution& d, const std::string& name) {
  if (!std::isfinite(d.mean) || !std::isfinite(d.std) || !std::isfinite(d.min) || !std::isfinite(d.max))
    throw ValidationError(name, "parameters must be finite");
  if (!(d.min < d.max)) throw ValidationError(name + ".min", "must be < max");
  if (!(d.std > 0.0)) throw ValidationError(name + ".std", "must be > 0");
  if (!(d.mean > d.min && d.mean < d.max)) throw ValidationError(name + ".mean", "must lie inside (min, max)");
}

namespace detail {
inline double pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
}  // namespace detail

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and standard deviation of N(mu, sigma^2) restricted to [lo, hi].
inline Moments truncated_moments(double mu, double sigma, double lo, double hi) {
  const double a = (lo - mu) / sigma, b = (hi - mu) / sigma;
  const double z = detail::cdf(b) - detail::cdf(a);
  const double pa = detail::pdf(a), pb = detail::pdf(b);
  const double shift = (pa - pb) / z;
  const double var = sigma * sigma * (1.0 + (a * pa - b * pb) / z - shift * shift);
  return {mu + sigma * shift, std::sqrt(std::max(var, 0.0))};
}

/// Underlying (mu, sigma) whose truncation to [min, max] has the requested
/// mean and standard deviation.
inline Moments solve_underlying(const Distribution& target) {
  double mu = target.mean, sigma = target.std;
  for (int it = 0; it < 100000; ++it) {
    const auto m = truncated_moments(mu, sigma, target.min, target.max);
    const double dm = target.mean - m.mean;
    const double ratio = target.std / m.std;
    mu += dm;
    sigma *= ratio;
    if (std::abs(dm) < 1e-13 && std::abs(ratio - 1.0) < 1e-13) break;
    if (!std::isfinite(mu) || !std::isfinite(sigma) || sigma > 1e6)
      throw ValidationError("distribution", "no Gaussian truncated to [min,max] has this mean and std");
  }
  return {mu, sigma};
}

// Rejection sampling; the loop is bounded by the acceptance probability,
// which solve_underlying keeps well away from zero for valid specs.
inline double sample_truncated(Rng& rng, double mu, double sigma, double lo, double hi) {
  for (;;) {
    const double x = rng.normal(mu, sigma);
    if (x >= lo && x <= hi) return x;
  }
}

// ---------------------------------------------------------------------------
// Cohort spec and generator

enum class NoiseScope { bottom, all };

struct TierRule {
  std::array<double, 3> weights = {0.40, 0.31, 0.29};  // SAS, EQI, EIS
  double noise_sigma = 0.05;
  std::array<double, 4> quantiles = {0.05, 0.20, 0.45, 0.75};
  NoiseScope noise_scope = NoiseScope::bottom;
};

struct CohortSpec {
  std::size_t n = 500;
  std::uint64_t seed = 42;
  Distribution sas{0.742, 0.134, 0.39, 0.95};
  Distribution eqi{0.681, 0.112, 0.41, 0.84};
  Distribution eis{0.605, 0.124, 0.28, 0.81};
  TierRule tier_rule;
  bool with_academic = true;
};

inline void validate(const CohortSpec& s) {
  if (s.n < 1) throw ValidationError("n", "must be >= 1");
  validate(s.sas, "sas");
  validate(s.eqi, "eqi");
  validate(s.eis, "eis");
  if (!(s.tier_rule.noise_sigma >= 0.0)) throw ValidationError("tier_rule.noise_sigma", "must be >= 0");
  for (double w : s.tier_rule.weights)
    if (!(w >= 0.0)) throw ValidationError("tier_rule.weights", "must be >= 0");
  for (std::size_t i = 0; i < 4; ++i) {
    const double q = s.tier_rule.quantiles[i];
    if (!(q > 0.0 && q < 1.0) || (i > 0 && !(q > s.tier_rule.quantiles[i - 1])))
      throw ValidationError("tier_rule.quantiles", "must be strictly increasing inside (0,1)");
  }
}

struct CohortRow {
  std::string id;
  ModuleScores scores;
  int tier = 0;  // 0 best .. 4
};

// Linear interpolation between order statistics.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw EmptyCohortError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline int bin_tier(double composite, const std::array<double, 4>& thresholds) {
  int above = 0;
  for (double t : thresholds)
    if (composite >= t) ++above;
  return 4 - above;
}

struct Cohort {
  std::vector<CohortRow> rows;
  std::vector<AcademicRecord> academic;  // empty, or one record per row
};

namespace detail {

struct AcademicFactor {
  double mean, std, loading, lo, hi;
};

// gpa, sat, toefl, ap5_count, course_difficulty driven by one latent factor.
inline constexpr std::array<AcademicFactor, kSasFeatureCount> kAcademicFactors = {{
    {3.55, 0.35, 0.80, 2.0, 4.0},
    {1350.0, 140.0, 0.75, 900.0, 1600.0},
    {102.0, 10.0, 0.50, 60.0, 120.0},
    {4.0, 2.5, 0.70, 0.0, 13.0},
    {0.60, 0.18, 0.60, 0.05, 1.0},
}};

inline AcademicRecord draw_academic(Rng& rng) {
  const double g = rng.normal();
  std::array<double, kSasFeatureCount> v{};
  for (std::size_t j = 0; j < kSasFeatureCount; ++j) {
    const auto& f = kAcademicFactors[j];
    const double center = f.mean + f.std * f.loading * g;
    const double spread = f.std * std::sqrt(1.0 - f.loading * f.loading);
    double x = center;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      x = rng.normal(center, spread);
      if (x >= f.lo && x <= f.hi) break;
    }
    v[j] = std::clamp(x, f.lo, f.hi);
  }
  AcademicRecord r;
  r.gpa = std::round(v[0] * 100.0) / 100.0;
  r.sat = static_cast<int>(std::lround(v[1] / 10.0)) * 10;
  r.toefl = static_cast<int>(std::lround(v[2]));
  r.ap5_count = static_cast<int>(std::lround(v[3]));
  r.course_difficulty = std::round(v[4] * 1000.0) / 1000.0;
  return r;
}

}  // namespace detail

/// Academic records for n applicants (seeded; gpa/sat/toefl/ap5 correlated
/// through a single latent ability factor).
inline std::vector<AcademicRecord> generate_academic(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<AcademicRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(detail::draw_academic(rng));
  return out;
}

/// Module scores from truncated Gaussians (matched to the requested
/// observed moments), tiers from quantile bins of the weighted composite.
inline Cohort generate_cohort(const CohortSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  const auto us = solve_underlying(spec.sas), ue = solve_underlying(spec.eqi), ui = solve_underlying(spec.eis);
  Cohort c;
  c.rows.resize(spec.n);
  std::vector<double> composite(spec.n);
  const auto& w = spec.tier_rule.weights;
  for (std::size_t i = 0; i < spec.n; ++i) {
    auto& r = c.rows[i];
    r.id = "A" + std::to_string(i + 1);
    r.scores.sas = sample_truncated(rng, us.mean, us.std, spec.sas.min, spec.sas.max);
    r.scores.eqi = sample_truncated(rng, ue.mean, ue.std, spec.eqi.min, spec.eqi.max);
    r.scores.eis = sample_truncated(rng, ui.mean, ui.std, spec.eis.min, spec.eis.max);
    r.scores.sas_scaled = 100.0 * r.scores.sas;
    composite[i] = w[0] * r.scores.sas + w[1] * r.scores.eqi + w[2] * r.scores.eis;
  }

  const auto& q = spec.tier_rule.quantiles;
  const double sigma = spec.tier_rule.noise_sigma;
  if (spec.tier_rule.noise_scope == NoiseScope::all) {
    for (auto& v : composite) v += rng.normal(0.0, sigma);
    const std::array<double, 4> t = {quantile(composite, q[0]), quantile(composite, q[1]), quantile(composite, q[2]),
                                     quantile(composite, q[3])};
    for (std::size_t i = 0; i < spec.n; ++i) c.rows[i].tier = bin_tier(composite[i], t);
  } else {
    const std::array<double, 4> t = {quantile(composite, q[0]), quantile(composite, q[1]), quantile(composite, q[2]),
                                     quantile(composite, q[3])};
    for (std::size_t i = 0; i < spec.n; ++i) {
      int tier = bin_tier(composite[i], t);
      if (tier >= 3) tier = composite[i] + rng.normal(0.0, sigma) < t[0] ? 4 : 3;
      c.rows[i].tier = tier;
    }
  }
  if (spec.with_academic) c.academic = generate_academic(spec.n, spec.seed + 1);
  return c;
}

// ---------------------------------------------------------------------------
// Synthetic essay dataset

struct EssayRecord {
  std::string essay_text;
  std::string prompt_text;
  double label = 0.0;
};

inline const std::vector<std::string>& essay_prompts() {
  static const std::vector<std::string> prompts = {
      "Describe a challenge you faced and how it shaped your goals.",
      "Reflect on a community that matters to you and your place in it.",
      "Discuss an idea or topic that makes you lose track of time.",
      "Tell us about a moment when you questioned a belief you held.",
  };
  return prompts;
}

namespace detail {
inline const std::vector<std::string>& essay_vocabulary() {
  static const std::vector<std::string> words = {
      "learned", "family", "science", "community", "music", "garden", "robot", "library", "teacher", "friend",
      "question", "project", "history", "river", "summer", "coding", "debate", "team", "failure", "practice",
      "curiosity", "grandmother", "language", "kitchen", "volunteer", "research", "mountain", "notebook", "city",
      "patience", "experiment", "story", "chess", "violin", "hospital", "neighbor", "market", "bridge", "winter",
      "theater", "museum", "soccer", "newspaper", "planet", "engine", "recipe", "classroom", "mentor", "journey",
      "identity", "challenge", "growth", "belief", "idea", "moment", "goal", "place", "time", "shaped", "faced",
      "matters", "topic", "held", "questioned", "discovered", "built", "organized", "wrote", "listened", "changed",
      "worked", "struggled", "helped", "taught", "designed", "measured", "painted", "repaired", "translated"};
  return words;
}

inline std::string word_salad(Rng& rng, std::size_t words, const std::string& prompt, double prompt_share) {
  const auto& vocab = essay_vocabulary();
  const auto topic = text::content_words(prompt);
  const std::vector<std::string> prompt_words(topic.begin(), topic.end());
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    std::string w = !prompt_words.empty() && rng.uniform() < prompt_share
                        ? prompt_words[rng.uniform_int(prompt_words.size())]
                        : vocab[rng.uniform_int(vocab.size())];
    if (i % 12 == 0) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    out += w;
    out += (i % 12 == 11 || i + 1 == words) ? ". " : " ";
  }
  out.pop_back();
  return out;
}
}  // namespace detail

/// Word-salad essays in three equal length/topicality bands. Labels follow
/// clamp(0.1 content + 0.1 language + 0.05 structure + N(0, noise)) over the
/// rubric scores the given scorer assigns.
inline std::vector<EssayRecord> generate_essays(std::size_t n, std::uint64_t seed, const RubricScorer& rubric,
                                                double noise_sigma = 0.05) {
  Rng rng(seed);
  std::vector<EssayRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int band = static_cast<int>(i % 3);  // 0 high, 1 mid, 2 low
    EssayRecord r;
    r.prompt_text = essay_prompts()[rng.uniform_int(essay_prompts().size())];
    const std::size_t lo = band == 0 ? 450 : band == 1 ? 250 : 80;
    const std::size_t hi = band == 0 ? 650 : band == 1 ? 450 : 200;
    const double share = band == 0 ? 0.25 : band == 1 ? 0.1 : 0.0;
    r.essay_text = detail::word_salad(rng, lo + rng.uniform_int(hi - lo + 1), r.prompt_text, share);
    const auto s = rubric.rubric_score({r.prompt_text, r.essay_text});
    r.label = std::clamp(0.1 * s.content + 0.1 * s.language + 0.05 * s.structure + rng.normal(0.0, noise_sigma), 0.0,
                         1.0);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV / JSONL

inline void write_cohort_csv(std::ostream& out, const std::vector<CohortRow>& rows) {
  out << "# schema_version=" << csv::kSchemaVersion << "\nid,sas,eqi,eis,tier\n";
  out.precision(17);
  for (const auto& r : rows)
    out << csv::quote(r.id) << ',' << r.scores.sas << ',' << r.scores.eqi << ',' << r.scores.eis << ',' << r.tier << '\n';
}

inline std::vector<CohortRow> read_cohort_csv(std::istream& in, const std::string& source) {
  const auto table = csv::parse(in, source);
  const auto ci = table.column("id", source), cs = table.column("sas", source), cq = table.column("eqi", source),
             ce = table.column("eis", source), ct = table.column("tier", source);
  std::vector<CohortRow> rows;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    const auto at = [&](const char* field) { return source + ":" + std::to_string(table.line_numbers[r]) + ":" + field; };
    CohortRow row;
    row.id = f[ci];
    row.scores.sas = csv::to_double(f[cs], at("sas"));
    row.scores.eqi = csv::to_double(f[cq], at("eqi"));
    row.scores.eis = csv::to_double(f[ce], at("eis"));
    row.scores.sas_scaled = 100.0 * row.scores.sas;
    const auto tier = csv::to_integer(f[ct], at("tier"));
    for (const auto& [name, value] : {std::pair{"sas", row.scores.sas}, {"eqi", row.scores.eqi}, {"eis", row.scores.eis}})
      if (!(value >= 0.0 && value <= 1.0)) throw FormatError(at(name), "out of [0,1]");
    if (tier < 0 || tier > 4) throw FormatError(at("tier"), "out of 0..4");
    row.tier = static_cast<int>(tier);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw EmptyCohortError(source + ": cohort has no rows");
  return rows;
}

inline void write_academic_csv(std::ostream& out, const std::vector<CohortRow>& rows,
                               const std::vector<AcademicRecord>& academic) {
  out << "# schema_version=" << csv::kSchemaVersion << "\nid,gpa,sat,toefl,ap5_count,course_difficulty\n";
  out.precision(17);
  for (std::size_t i = 0; i < academic.size(); ++i) {
    const auto& a = academic[i];
    out << csv::quote(i < rows.size() ? rows[i].id : "A" + std::to_string(i + 1)) << ',' << a.gpa << ',' << a.sat << ','
        << a.toefl << ',' << a.ap5_count << ',' << a.course_difficulty << '\n';
  }
}

inline std::vector<AcademicRecord> read_academic_csv(std::istream& in, const std::string& source,
                                                     std::vector<std::string>* ids = nullptr) {
  const auto table = csv::parse(in, source);
  std::array<std::size_t, kSasFeatureCount> col{};
  for (std::size_t j = 0; j < kSasFeatureCount; ++j) col[j] = table.column(kSasFeatureNames[j], source);
  const auto id_col = table.column("id", source);
  std::vector<AcademicRecord> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    const auto at = [&](std::size_t j) {
      return source + ":" + std::to_string(table.line_numbers[r]) + ":" + kSasFeatureNames[j];
    };
    AcademicRecord a;
    a.gpa = csv::to_double(f[col[0]], at(0));
    a.sat = static_cast<int>(csv::to_integer(f[col[1]], at(1)));
    a.toefl = static_cast<int>(csv::to_integer(f[col[2]], at(2)));
    a.ap5_count = static_cast<int>(csv::to_integer(f[col[3]], at(3)));
    a.course_difficulty = csv::to_double(f[col[4]], at(4));
    try {
      validate(a);
    } catch (const ValidationError& e) {
      throw FormatError(source + ":" + std::to_string(table.line_numbers[r]), e.what());
    }
    if (ids) ids->push_back(f[id_col]);
    out.push_back(a);
  }
  if (out.empty()) throw EmptyCohortError(source + ": no academic records");
  return out;
}

inline void write_essays_jsonl(std::ostream& out, const std::vector<EssayRecord>& rows) {
  out << nlohmann::json{{"schema_version", kSchemaVersion}}.dump() << '\n';
  for (const auto& r : rows)
    out << nlohmann::json{{"essay_text", r.essay_text}, {"prompt_text", r.prompt_text}, {"label", r.label}}.dump() << '\n';
}

/// JSONL with essay_text, prompt_text, label per line. An optional first
/// line {"schema_version": N} is honoured.
inline std::vector<EssayRecord> read_essays_jsonl(std::istream& in, const std::string& source) {
  std::vector<EssayRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    const auto where = source + ":" + std::to_string(line_no);
    const auto j = json_util::parse(line, where);
    if (j.is_object() && j.contains("schema_version") && !j.contains("essay_text")) {
      const int v = j.at("schema_version").get<int>();
      if (v > kSchemaVersion) throw VersionError(where + ": schema_version " + std::to_string(v) + " is newer than supported");
      continue;
    }
    EssayRecord r;
    r.essay_text = json_util::get<std::string>(j, "essay_text", where);
    r.prompt_text = json_util::get<std::string>(j, "prompt_text", where);
    r.label = json_util::get<double>(j, "label", where);
    if (!std::isfinite(r.label)) throw NonFiniteLabelError(where + ": label is not finite");
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<EssayRecord> read_essays_csv(std::istream& in, const std::string& source) {
  const auto table = csv::parse(in, source);
  const auto ce = table.column("essay_text", source), cp = table.column("prompt_text", source),
             cl = table.column("label", source);
  std::vector<EssayRecord> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    out.push_back({table.rows[r][ce], table.rows[r][cp],
                   csv::to_double(table.rows[r][cl], source + ":" + std::to_string(table.line_numbers[r]) + ":label")});
  return out;
}

// ---------------------------------------------------------------------------
// Files and artifacts

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

inline std::string read_file(const std::string& path) {
  auto in = open_input(path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline std::vector<CohortRow> load_cohort_csv(const std::string& path) {
  auto in = open_input(path);
  return read_cohort_csv(in, path);
}

inline std::vector<EssayRecord> load_essays(const std::string& path) {
  auto in = open_input(path);
  if (std::filesystem::path(path).extension() == ".csv") return read_essays_csv(in, path);
  return read_essays_jsonl(in, path);
}

struct Receipt {
  std::string path;
  std::size_t bytes = 0;
  std::string digest;  // FNV-1a 64 of the written bytes
};

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
inline Receipt write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp);
    out << content;
    if (!out) throw InputError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InputError("cannot rename " + tmp + " to " + path + ": " + ec.message());
  return {path, content.size(), text::hex64(text::fnv1a64(content))};
}

template <typename T>
Receipt save_artifact(const T& artifact, const std::string& path) {
  return write_file_atomic(path, nlohmann::json(artifact).dump(1) + "\n");
}

template <typename T>
T load_artifact(const std::string& path) {
  const auto j = json_util::parse(read_file(path), path);
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path, std::string("artifact does not match its schema: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const Distribution& d) {
  j = {{"mean", d.mean}, {"std", d.std}, {"min", d.min}, {"max", d.max}};
}

inline Distribution distribution_from_json(const nlohmann::json& j, const std::string& path, Distribution d) {
  d.mean = json_util::get_or(j, "mean", path, d.mean);
  d.std = json_util::get_or(j, "std", path, d.std);
  d.min = json_util::get_or(j, "min", path, d.min);
  d.max = json_util::get_or(j, "max", path, d.max);
  return d;
}

inline void to_json(nlohmann::json& j, const CohortSpec& s) {
  j = {{"schema_version", kSchemaVersion},
       {"n", s.n},
       {"seed", s.seed},
       {"sas", s.sas},
       {"eqi", s.eqi},
       {"eis", s.eis},
       {"with_academic", s.with_academic},
       {"tier_rule",
        {{"weights", s.tier_rule.weights},
         {"noise_sigma", s.tier_rule.noise_sigma},
         {"quantiles", s.tier_rule.quantiles},
         {"noise_scope", s.tier_rule.noise_scope == NoiseScope::all ? "all" : "bottom"}}}};
}

/// Missing fields keep their defaults; unknown keys are rejected.
inline CohortSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("spec", "expected a JSON object");
  static const std::set<std::string> known = {"schema_version", "n", "seed", "sas", "eqi", "eis", "tier_rule",
                                              "with_academic"};
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw FormatError("spec." + key, "unknown field");
  const int version = json_util::get_or(j, "schema_version", "spec", kSchemaVersion);
  if (version > kSchemaVersion) throw VersionError("cohort spec schema_version " + std::to_string(version) + " is newer than supported");
  CohortSpec s;
  const auto n = json_util::get_or<long long>(j, "n", "spec", static_cast<long long>(s.n));
  if (n < 1) throw ValidationError("n", "must be >= 1");
  s.n = static_cast<std::size_t>(n);
  s.seed = json_util::get_or<std::uint64_t>(j, "seed", "spec", s.seed);
  s.with_academic = json_util::get_or(j, "with_academic", "spec", s.with_academic);
  if (j.contains("sas")) s.sas = distribution_from_json(j.at("sas"), "spec.sas", s.sas);
  if (j.contains("eqi")) s.eqi = distribution_from_json(j.at("eqi"), "spec.eqi", s.eqi);
  if (j.contains("eis")) s.eis = distribution_from_json(j.at("eis"), "spec.eis", s.eis);
  if (j.contains("tier_rule")) {
    const auto& t = j.at("tier_rule");
    s.tier_rule.weights = json_util::get_or(t, "weights", "spec.tier_rule", s.tier_rule.weights);
    s.tier_rule.noise_sigma = json_util::get_or(t, "noise_sigma", "spec.tier_rule", s.tier_rule.noise_sigma);
    s.tier_rule.quantiles = json_util::get_or(t, "quantiles", "spec.tier_rule", s.tier_rule.quantiles);
    const auto scope = json_util::get_or<std::string>(t, "noise_scope", "spec.tier_rule", "bottom");
    if (scope == "all")
      s.tier_rule.noise_scope = NoiseScope::all;
    else if (scope == "bottom")
      s.tier_rule.noise_scope = NoiseScope::bottom;
    else
      throw ValidationError("tier_rule.noise_scope", "must be 'bottom' or 'all'");
  }
  validate(s);
  return s;
}

inline void to_json(nlohmann::json& j, const CohortRow& r) {
  j = {{"id", r.id}, {"sas", r.scores.sas}, {"eqi", r.scores.eqi}, {"eis", r.scores.eis}, {"tier", r.tier}};
}

struct CohortStatsSummary {
  std::size_t n = 0;
  std::array<double, 3> mean{};
  std::array<double, 3> std{};
  std::array<double, 3> min{};
  std::array<double, 3> max{};
  std::array<std::size_t, 5> tier_counts{};
};

inline CohortStatsSummary summarize(const std::vector<CohortRow>& rows) {
  if (rows.empty()) throw EmptyCohortError("cannot summarize an empty cohort");
  CohortStatsSummary s;
  s.n = rows.size();
  s.min = {1.0, 1.0, 1.0};
  s.max = {0.0, 0.0, 0.0};
  for (const auto& r : rows) {
    const std::array<double, 3> v = {r.scores.sas, r.scores.eqi, r.scores.eis};
    for (std::size_t k = 0; k < 3; ++k) {
      s.mean[k] += v[k];
      s.min[k] = std::min(s.min[k], v[k]);
      s.max[k] = std::max(s.max[k], v[k]);
    }
    ++s.tier_counts[static_cast<std::size_t>(r.tier)];
  }
  for (auto& m : s.mean) m /= static_cast<double>(s.n);
  for (const auto& r : rows) {
    const std::array<double, 3> v = {r.scores.sas, r.scores.eqi, r.scores.eis};
    for (std::size_t k = 0; k < 3; ++k) s.std[k] += (v[k] - s.mean[k]) * (v[k] - s.mean[k]);
  }
  for (auto& d : s.std) d = std::sqrt(d / static_cast<double>(s.n));
  return s;
}

inline void to_json(nlohmann::json& j, const CohortStatsSummary& s) {
  nlohmann::json modules = nlohmann::json::object();
  const char* names[3] = {"sas", "eqi", "eis"};
  for (std::size_t k = 0; k < 3; ++k)
    modules[names[k]] = {{"mean", s.mean[k]}, {"std", s.std[k]}, {"min", s.min[k]}, {"max", s.max[k]}};
  j = {{"n", s.n}, {"modules", modules}, {"tier_counts", s.tier_counts}};
}

}  // namespace caps::cohort
