#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>

namespace caps::log {

using Sink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& mutex() {
  static std::mutex m;
  return m;
}
inline Sink& sink() {
  static Sink s = [](const std::string& message) { std::cerr << "caps: warning: " << message << '\n'; };
  return s;
}
}  // namespace detail

// Replaces the warning sink and returns the previous one.
inline Sink set_sink(Sink sink) {
  std::lock_guard lock(detail::mutex());
  std::swap(detail::sink(), sink);
  return sink;
}

inline void warn(const std::string& message) {
  std::lock_guard lock(detail::mutex());
  if (detail::sink()) detail::sink()(message);
}

}  // namespace caps::log
