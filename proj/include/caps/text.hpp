#pragma once

#include <cctype>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace caps::text {

// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

// Deterministic fraction on [0, 1) for (seed, tag, text). The hashed message is
//   decimal(seed) + '\x1f' + tag + '\x1f' + text
// and the fraction is the top 53 bits of its FNV-1a digest scaled by 2^-53.
inline double hash_fraction(std::uint64_t seed, std::string_view tag, std::string_view text) {
  std::string message = std::to_string(seed);
  message.push_back('\x1f');
  message.append(tag);
  message.push_back('\x1f');
  message.append(text);
  return static_cast<double>(fnv1a64(message) >> 11) * 0x1.0p-53;
}

// Lowercased maximal runs of ASCII letters and digits.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline std::set<std::string> token_set(std::string_view text) {
  auto tokens = tokenize(text);
  return {tokens.begin(), tokens.end()};
}

// Whitespace-delimited token count.
inline int word_count(std::string_view text) {
  int count = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

inline bool is_blank(std::string_view text) {
  for (unsigned char c : text)
    if (!std::isspace(c)) return false;
  return true;
}

inline const std::unordered_set<std::string>& stop_words() {
  static const std::unordered_set<std::string> words = {
      "a",       "about",   "above", "after", "again", "against", "all",     "am",
      "an",      "and",     "any",   "are",   "as",    "at",      "be",      "because",
      "been",    "before",  "being", "below", "between", "both",  "but",     "by",
      "can",     "could",   "did",   "do",    "does",  "doing",   "down",    "during",
      "each",    "few",     "for",   "from",  "further", "had",   "has",     "have",
      "having",  "he",      "her",   "here",  "hers",  "herself", "him",     "himself",
      "his",     "how",     "i",     "if",    "in",    "into",    "is",      "it",
      "its",     "itself",  "just",  "me",    "more",  "most",    "my",      "myself",
      "no",      "nor",     "not",   "now",   "of",    "off",     "on",      "once",
      "only",    "or",      "other", "our",   "ours",  "ourselves", "out",   "over",
      "own",     "same",    "she",   "should", "so",   "some",    "such",    "than",
      "that",    "the",     "their", "theirs", "them", "themselves", "then", "there",
      "these",   "they",    "this",  "those", "through", "to",    "too",     "under",
      "until",   "up",      "very",  "was",   "we",    "were",    "what",    "when",
      "where",   "which",   "while", "who",   "whom",  "why",     "will",    "with",
      "would",   "you",     "your",  "yours", "yourself", "yourselves", "s", "t",
  };
  return words;
}

// Distinct tokens of `text` that are not stop-words.
inline std::set<std::string> content_words(std::string_view text) {
  std::set<std::string> out;
  const auto& stops = stop_words();
  for (auto& token : tokenize(text))
    if (!stops.contains(token)) out.insert(std::move(token));
  return out;
}

// |a ∩ b| / |a ∪ b|; two empty sets are identical, so 1.
inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& token : a) common += b.count(token);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

inline std::string hex64(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, value >>= 4) out[static_cast<std::size_t>(i)] = digits[value & 0xf];
  return out;
}

}  // namespace caps::text
