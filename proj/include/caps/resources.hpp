#pragma once

#include <string>
#include <string_view>

#include "caps/errors.hpp"
#include "caps/resources_data.hpp"

namespace caps::resources {

// Text of an embedded resource, keyed by its path under resources/.
inline std::string_view get(std::string_view key) {
  for (const auto& [name, content] : detail::kEntries)
    if (name == key) return content;
  throw Error("missing embedded resource '" + std::string(key) + "'");
}

}  // namespace caps::resources
