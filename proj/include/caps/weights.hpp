#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "caps/errors.hpp"

namespace caps {

inline constexpr double kUnitSumTolerance = 1e-9;

/// Named, non-negative weights that sum to one.
///
/// Entries keep their construction order, which is the feature order used
/// by every dot product in the library. Instances can only be obtained from
/// the named constructors below, all of which establish the invariant.
class WeightVector {
public:
  using Entry = std::pair<std::string, double>;

  WeightVector() = default;

  /// Entries must already be non-negative and sum to 1 within 1e-9.
  static WeightVector exact(std::vector<Entry> entries) {
    check_names(entries);
    double sum = 0.0;
    for (const auto& [name, w] : entries) {
      if (!std::isfinite(w) || w < 0.0) throw ValidationError("weight " + name, "must be finite and >= 0");
      sum += w;
    }
    if (std::abs(sum - 1.0) > kUnitSumTolerance)
      throw ValidationError("weights", "must sum to 1 within 1e-9 (got " + std::to_string(sum) + ")");
    return WeightVector(std::move(entries));
  }

  /// Divides non-negative entries by their sum. Used for printed (rounded)
  /// weight columns and for any raw importance vector.
  static WeightVector normalized(std::vector<Entry> entries) {
    check_names(entries);
    double sum = 0.0;
    for (const auto& [name, w] : entries) {
      if (!std::isfinite(w) || w < 0.0) throw ValidationError("weight " + name, "must be finite and >= 0");
      sum += w;
    }
    if (!(sum > 0.0)) throw ValidationError("weights", "must have a positive sum");
    for (auto& entry : entries) entry.second /= sum;
    return WeightVector(std::move(entries));
  }

  /// Clamps negative entries to 0, then normalizes.
  static WeightVector clamped(std::vector<Entry> entries) {
    for (auto& entry : entries)
      if (entry.second < 0.0) entry.second = 0.0;
    return normalized(std::move(entries));
  }

  static WeightVector uniform(const std::vector<std::string>& names) {
    std::vector<Entry> entries;
    for (const auto& name : names) entries.emplace_back(name, 1.0);
    return normalized(std::move(entries));
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  double operator[](std::size_t i) const { return entries_.at(i).second; }
  const std::string& name(std::size_t i) const { return entries_.at(i).first; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.first);
    return out;
  }

  std::vector<double> values() const {
    std::vector<double> out;
    for (const auto& e : entries_) out.push_back(e.second);
    return out;
  }

  double at(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.first == name) return e.second;
    throw FeatureMismatchError("no weight named '" + name + "'");
  }

  bool same_names(const WeightVector& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (entries_[i].first != other.entries_[i].first) return false;
    return true;
  }

  double sum() const noexcept {
    double s = 0.0;
    for (const auto& e : entries_) s += e.second;
    return s;
  }

  double dot(std::span<const double> x) const {
    if (x.size() != entries_.size())
      throw FeatureMismatchError("dimension mismatch: " + std::to_string(x.size()) + " values for " +
                                 std::to_string(entries_.size()) + " weights");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += entries_[i].second * x[i];
    return s;
  }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;

private:
  explicit WeightVector(std::vector<Entry> entries) : entries_(std::move(entries)) {}

  static void check_names(const std::vector<Entry>& entries) {
    if (entries.empty()) throw ValidationError("weights", "must not be empty");
    for (std::size_t i = 0; i < entries.size(); ++i)
      for (std::size_t j = i + 1; j < entries.size(); ++j)
        if (entries[i].first == entries[j].first)
          throw ValidationError("weight " + entries[i].first, "appears twice");
  }

  std::vector<Entry> entries_;
};

// Serialized as an array of {"name", "weight"} objects so order survives.
inline void to_json(nlohmann::json& j, const WeightVector& w) {
  j = nlohmann::json::array();
  for (const auto& [name, value] : w.entries()) j.push_back({{"name", name}, {"weight", value}});
}

inline void from_json(const nlohmann::json& j, WeightVector& w) {
  std::vector<WeightVector::Entry> entries;
  if (j.is_object()) {
    for (const auto& [name, value] : j.items()) entries.emplace_back(name, value.get<double>());
  } else {
    for (const auto& item : j) entries.emplace_back(item.at("name").get<std::string>(), item.at("weight").get<double>());
  }
  w = WeightVector::exact(std::move(entries));
}

}  // namespace caps
