#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rsc/error.hpp"

namespace rsc {

/// Ground-truth snow coverage, ordered by increasing coverage.
enum class FiveClassLabel : std::uint8_t { Bare = 0, Lt25 = 1, P25to50 = 2, P50to75 = 3, Gt75 = 4 };

inline constexpr std::array<FiveClassLabel, 5> kAllFiveClass = {FiveClassLabel::Bare, FiveClassLabel::Lt25,
                                                                  FiveClassLabel::P25to50, FiveClassLabel::P50to75,
                                                                  FiveClassLabel::Gt75};

enum class LabelScheme { Five, Three, Two };

inline std::string_view token(FiveClassLabel l) {
  static constexpr std::array<std::string_view, 5> names = {"bare", "lt25", "p25to50", "p50to75", "gt75"};
  return names[static_cast<std::size_t>(l)];
}

inline FiveClassLabel parse_five_class(std::string_view s) {
  for (auto l : kAllFiveClass)
    if (token(l) == s) return l;
  throw FormatError("unknown five-class label '" + std::string(s) + "'");
}

inline std::string_view token(LabelScheme s) {
  switch (s) {
    case LabelScheme::Five: return "five";
    case LabelScheme::Three: return "three";
    case LabelScheme::Two: return "two";
  }
  return "?";
}

inline LabelScheme parse_scheme(std::string_view s) {
  for (auto v : {LabelScheme::Five, LabelScheme::Three, LabelScheme::Two})
    if (token(v) == s) return v;
  throw UsageError("unknown label scheme '" + std::string(s) + "'");
}

inline std::size_t num_classes(LabelScheme s) {
  switch (s) {
    case LabelScheme::Five: return 5;
    case LabelScheme::Three: return 3;
    case LabelScheme::Two: return 2;
  }
  return 0;
}

inline std::vector<std::string> class_names(LabelScheme s) {
  switch (s) {
    case LabelScheme::Five: return {"Bare", "<25", "25 to 50", "50 to 75", "Fully Snow Covered"};
    case LabelScheme::Three: return {"Bare", "Partly Snow Covered", "Fully Snow Covered"};
    case LabelScheme::Two: return {"Bare", "With Snow Covered"};
  }
  return {};
}

/// Coarse class index of a five-class label.
///   Three: Bare -> 0; <25, 25-50, 50-75 -> 1 (partly); >75 -> 2 (fully)
///   Two:   Bare -> 0; everything else -> 1 (with snow)
inline std::size_t map_label(FiveClassLabel l, LabelScheme s) {
  const auto v = static_cast<std::size_t>(l);
  switch (s) {
    case LabelScheme::Five: return v;
    case LabelScheme::Three: return v == 0 ? 0 : (v == 4 ? 2 : 1);
    case LabelScheme::Two: return v == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace rsc
