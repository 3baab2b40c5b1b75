#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "caps/errors.hpp"

namespace caps::json_util {

using nlohmann::json;

inline std::string join_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

inline const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw FormatError(path.empty() ? "$" : path, "expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(join_path(path, key), "missing field");
  return *it;
}

// Typed read that reports the dotted field path instead of nlohmann's message.
template <typename T>
T get(const json& j, const std::string& key, const std::string& path) {
  const json& value = require(j, key, path);
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw FormatError(join_path(path, key), "wrong type (" + std::string(value.type_name()) + ")");
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get<T>(j, key, path);
}

// Parses text, turning syntax errors into FormatError with the byte offset.
inline json parse(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(source + ":byte " + std::to_string(e.byte), "malformed JSON: " + std::string(e.what()));
  }
}

}  // namespace caps::json_util
