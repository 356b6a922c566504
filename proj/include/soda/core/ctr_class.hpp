#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace soda {

/// Tertile CTR class. Declaration order is the ordinal order.
enum class CtrClass : int { BelowAverage = 0, Average = 1, AboveAverage = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<CtrClass, kNumClasses> kAllClasses = {
    CtrClass::BelowAverage, CtrClass::Average, CtrClass::AboveAverage};

constexpr int index_of(CtrClass c) { return static_cast<int>(c); }
constexpr CtrClass class_from_index(int i) { return static_cast<CtrClass>(i); }

inline std::string_view to_string(CtrClass c) {
  switch (c) {
    case CtrClass::BelowAverage: return "below_average";
    case CtrClass::Average: return "average";
    case CtrClass::AboveAverage: return "above_average";
  }
  return "average";
}

inline std::optional<CtrClass> parse_ctr_class(std::string_view s) {
  for (auto c : kAllClasses) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

}  // namespace soda
