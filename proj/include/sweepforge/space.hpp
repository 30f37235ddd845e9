#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sweepforge/error.hpp"
#include "sweepforge/value.hpp"

namespace sweepforge {

/// Upper bound on units and points so every index stays exactly representable
/// as a double.
inline constexpr std::uint64_t kMaxIndex = std::uint64_t{1} << 53;

/// Largest number of values a single range literal may expand to.
inline constexpr std::uint64_t kMaxRangeValues = 1'000'000;

struct ParameterSpec {
  std::string name;
  std::vector<Value> values;

  bool operator==(const ParameterSpec&) const = default;
};

struct ParameterPoint {
  std::uint64_t index = 0;
  std::vector<std::pair<std::string, Value>> assignments;  // in declaration order

  const Value* find(std::string_view name) const noexcept {
    for (const auto& [k, v] : assignments)
      if (k == name) return &v;
    return nullptr;
  }

  bool operator==(const ParameterPoint&) const = default;
};

/// Cartesian product of parameter value lists. Points are numbered in
/// mixed-radix order with the last-listed parameter varying fastest.
class ParameterSpace {
 public:
  ParameterSpace() = default;

  /// Validates names, value kinds and uniqueness; throws ConfigError.
  explicit ParameterSpace(std::vector<ParameterSpec> specs) : specs_(std::move(specs)) {
    std::set<std::string, std::less<>> seen;
    std::uint64_t count = 1;
    for (const auto& spec : specs_) {
      if (!is_identifier(spec.name)) throw ConfigError("invalid parameter name '" + spec.name + "'");
      if (!seen.insert(spec.name).second) throw ConfigError("duplicate parameter '" + spec.name + "'");
      if (spec.values.empty()) throw ConfigError("parameter '" + spec.name + "' has no values");
      for (std::size_t i = 0; i < spec.values.size(); ++i) {
        if (kind_of(spec.values[i]) != kind_of(spec.values[0]))
          throw ConfigError("parameter '" + spec.name + "' mixes value kinds");
        if (const auto* d = std::get_if<double>(&spec.values[i]); d && !std::isfinite(*d))
          throw ConfigError("parameter '" + spec.name + "' has a non-finite value");
        for (std::size_t j = 0; j < i; ++j)
          if (spec.values[j] == spec.values[i])
            throw ConfigError("parameter '" + spec.name + "' lists value " +
                              display_text(spec.values[i]) + " more than once");
      }
      if (count > kMaxIndex / spec.values.size())
        throw ConfigError("parameter space exceeds 2^53 points");
      count *= spec.values.size();
    }
    point_count_ = count;
  }

  const std::vector<ParameterSpec>& specs() const noexcept { return specs_; }
  std::uint64_t point_count() const noexcept { return point_count_; }

  const ParameterSpec* find(std::string_view name) const noexcept {
    for (const auto& s : specs_)
      if (s.name == name) return &s;
    return nullptr;
  }

  /// Decodes a mixed-radix point index.
  ParameterPoint point(std::uint64_t index) const {
    if (index >= point_count_) throw std::out_of_range("point index out of range");
    ParameterPoint p;
    p.index = index;
    p.assignments.resize(specs_.size());
    for (std::size_t k = specs_.size(); k-- > 0;) {
      const auto& values = specs_[k].values;
      p.assignments[k] = {specs_[k].name, values[index % values.size()]};
      index /= values.size();
    }
    return p;
  }

  /// Inverse of point(): recomputes the index from the assignments.
  std::uint64_t index_of(const ParameterPoint& p) const {
    if (p.assignments.size() != specs_.size()) throw std::invalid_argument("point does not match space");
    std::uint64_t index = 0;
    for (std::size_t k = 0; k < specs_.size(); ++k) {
      const auto& values = specs_[k].values;
      auto it = std::find(values.begin(), values.end(), p.assignments[k].second);
      if (p.assignments[k].first != specs_[k].name || it == values.end())
        throw std::invalid_argument("point does not match space");
      index = index * values.size() + static_cast<std::uint64_t>(it - values.begin());
    }
    return index;
  }

  bool operator==(const ParameterSpace&) const = default;

 private:
  std::vector<ParameterSpec> specs_;
  std::uint64_t point_count_ = 1;
};

inline std::vector<ParameterPoint> enumerate_points(const ParameterSpace& space) {
  std::vector<ParameterPoint> out;
  out.reserve(space.point_count());
  for (std::uint64_t i = 0; i < space.point_count(); ++i) out.push_back(space.point(i));
  return out;
}

/// Expands `start : step : stop`. The count is computed once from the
/// endpoints; stop is included when it lies within 1e-9 (relative) of a whole
/// number of steps, in which case the last value is exactly `stop`.
inline std::vector<Value> expand_range(double start, double step, double stop) {
  if (!std::isfinite(start) || !std::isfinite(step) || !std::isfinite(stop))
    throw ConfigError("range bounds must be finite");
  if (step == 0) throw ConfigError("zero step in range");
  const double q = (stop - start) / step;
  const double tol = 1e-9 * std::max(1.0, std::abs(q));
  if (!std::isfinite(q)) throw ConfigError("range too large");
  if (q < -tol) throw ConfigError("range step has the wrong sign");
  const double nearest = std::round(q);
  const bool includes_stop = std::abs(q - nearest) <= tol;
  const double last = includes_stop ? nearest : std::floor(q);
  if (last + 1 > static_cast<double>(kMaxRangeValues)) throw ConfigError("range too large");
  const auto n = static_cast<std::uint64_t>(std::max(0.0, last)) + 1;
  std::vector<Value> out;
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    double v = (includes_stop && i + 1 == n) ? stop : start + static_cast<double>(i) * step;
    out.emplace_back(v);
  }
  return out;
}

/// Integer variant used when all three range bounds are integer literals.
inline std::vector<Value> expand_range(std::int64_t start, std::int64_t step, std::int64_t stop) {
  if (step == 0) throw ConfigError("zero step in range");
  const long double span = static_cast<long double>(stop) - static_cast<long double>(start);
  if ((span > 0 && step < 0) || (span < 0 && step > 0))
    throw ConfigError("range step has the wrong sign");
  const long double n = std::floor(span / static_cast<long double>(step)) + 1;
  if (n > static_cast<long double>(kMaxRangeValues)) throw ConfigError("range too large");
  std::vector<Value> out;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) out.emplace_back(start + i * step);
  return out;
}

}  // namespace sweepforge
