#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace promptforge {

/// Label of a reference patch: its center lies on the reference mask or not.
enum class PatchLabel : std::uint8_t { Positive, Negative };

/// Class of a prompt point handed to the segmenter. HardNegative behaves as a
/// negative for geometry but stays distinguishable so it can be dropped or kept
/// independently of background negatives.
enum class PromptClass : std::uint8_t { Positive, Negative, HardNegative };

inline constexpr std::array<PromptClass, 3> kAllPromptClasses = {
    PromptClass::Positive, PromptClass::Negative, PromptClass::HardNegative};

inline std::string_view to_string(PromptClass cls) {
  switch (cls) {
    case PromptClass::Positive: return "positive";
    case PromptClass::Negative: return "negative";
    case PromptClass::HardNegative: return "hard_negative";
  }
  return "unknown";
}

inline PromptClass to_prompt_class(PatchLabel label) {
  return label == PatchLabel::Positive ? PromptClass::Positive : PromptClass::Negative;
}

inline bool is_negative(PromptClass cls) { return cls != PromptClass::Positive; }

struct PromptPoint {
  int x = 0;
  int y = 0;
  PromptClass cls = PromptClass::Positive;

  friend bool operator==(const PromptPoint&, const PromptPoint&) = default;
};

inline double squared_distance(const PromptPoint& a, const PromptPoint& b) {
  const double dx = static_cast<double>(a.x) - b.x;
  const double dy = static_cast<double>(a.y) - b.y;
  return dx * dx + dy * dy;
}

/// Labeled point set for one image. Points are kept in insertion order; two
/// schemes compare equal when their per-class sequences match, which is the
/// identity preserved by the JSON form (it groups points by class).
struct PromptScheme {
  int image_width = 0;
  int image_height = 0;
  std::vector<PromptPoint> points;

  bool in_bounds(const PromptPoint& p) const {
    return p.x >= 0 && p.y >= 0 && p.x < image_width && p.y < image_height;
  }

  bool contains(int x, int y, PromptClass cls) const {
    return std::any_of(points.begin(), points.end(), [&](const PromptPoint& p) {
      return p.x == x && p.y == y && p.cls == cls;
    });
  }

  /// Appends unless an identical (x, y, class) point is already present.
  bool add(const PromptPoint& p) {
    if (contains(p.x, p.y, p.cls)) return false;
    points.push_back(p);
    return true;
  }

  std::vector<PromptPoint> of_class(PromptClass cls) const {
    std::vector<PromptPoint> out;
    std::copy_if(points.begin(), points.end(), std::back_inserter(out),
                 [cls](const PromptPoint& p) { return p.cls == cls; });
    return out;
  }

  std::size_t count(PromptClass cls) const {
    return static_cast<std::size_t>(std::count_if(
        points.begin(), points.end(), [cls](const PromptPoint& p) { return p.cls == cls; }));
  }

  friend bool operator==(const PromptScheme& a, const PromptScheme& b) {
    if (a.image_width != b.image_width || a.image_height != b.image_height) return false;
    return std::all_of(kAllPromptClasses.begin(), kAllPromptClasses.end(),
                       [&](PromptClass cls) { return a.of_class(cls) == b.of_class(cls); });
  }
};

}  // namespace promptforge
