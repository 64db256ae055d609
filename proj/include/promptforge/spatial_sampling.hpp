#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "promptforge/error.hpp"
#include "promptforge/prompt.hpp"

namespace promptforge {

/// A radius expressed as a fraction of the image size.
struct RadiusSpec {
  double fraction = 0.0;

  bool valid() const { return fraction >= 0.0 && fraction <= 1.0; }
};

/// Which image dimension a RadiusSpec fraction refers to.
enum class RadiusBase { Min, Max, GeometricMean };

inline double resolve_radius(RadiusSpec spec, int image_width, int image_height,
                             RadiusBase base = RadiusBase::Min) {
  const double w = image_width;
  const double h = image_height;
  switch (base) {
    case RadiusBase::Min: return spec.fraction * std::min(w, h);
    case RadiusBase::Max: return spec.fraction * std::max(w, h);
    case RadiusBase::GeometricMean: return spec.fraction * std::sqrt(w * h);
  }
  return 0.0;
}

namespace detail {

inline void check_radius(double radius) {
  if (!(radius >= 0.0)) throw Error(ErrorKind::InvalidArgument, "radius must be >= 0");
}

// Negative and HardNegative form one geometric class.
inline bool same_group(PromptClass a, PromptClass b) { return is_negative(a) == is_negative(b); }

}  // namespace detail

/// Drops every negative (plain or hard) lying in the closed disk of `radius`
/// around any positive. Positives pass through untouched.
inline PromptScheme exclusive_sampling(const PromptScheme& scheme, double radius) {
  detail::check_radius(radius);
  const double r2 = radius * radius;
  const auto positives = scheme.of_class(PromptClass::Positive);
  PromptScheme out{scheme.image_width, scheme.image_height, {}};
  out.points.reserve(scheme.points.size());
  for (const auto& p : scheme.points) {
    const bool blocked =
        is_negative(p.cls) && std::any_of(positives.begin(), positives.end(), [&](const auto& q) {
          return squared_distance(p, q) <= r2;
        });
    if (!blocked) out.points.push_back(p);
  }
  return out;
}

/// Thins one class (Negative and HardNegative count as one) so that no two
/// retained points are within `radius`. Candidates are visited in descending
/// mean distance to the opposite class, ties by (y, x), and accepted greedily.
/// Retained points keep their input order; other classes are untouched.
inline PromptScheme sparse_sampling(const PromptScheme& scheme, PromptClass class_to_sparsify,
                                    double radius) {
  detail::check_radius(radius);
  if (radius == 0.0) return scheme;

  std::vector<std::size_t> members;
  std::vector<std::size_t> opposite;
  for (std::size_t i = 0; i < scheme.points.size(); ++i) {
    (detail::same_group(scheme.points[i].cls, class_to_sparsify) ? members : opposite).push_back(i);
  }

  std::vector<double> mean_opposite(scheme.points.size(), 0.0);
  if (!opposite.empty()) {
    for (auto i : members) {
      double sum = 0.0;
      for (auto k : opposite) sum += std::sqrt(squared_distance(scheme.points[i], scheme.points[k]));
      mean_opposite[i] = sum / static_cast<double>(opposite.size());
    }
  }

  std::vector<std::size_t> order = members;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (mean_opposite[a] != mean_opposite[b]) return mean_opposite[a] > mean_opposite[b];
    const auto& pa = scheme.points[a];
    const auto& pb = scheme.points[b];
    if (pa.y != pb.y) return pa.y < pb.y;
    if (pa.x != pb.x) return pa.x < pb.x;
    return a < b;
  });

  const double r2 = radius * radius;
  std::vector<char> keep(scheme.points.size(), 1);
  std::vector<std::size_t> accepted;
  for (auto i : order) {
    const bool crowded = std::any_of(accepted.begin(), accepted.end(), [&](std::size_t a) {
      return squared_distance(scheme.points[i], scheme.points[a]) <= r2;
    });
    if (crowded) {
      keep[i] = 0;
    } else {
      accepted.push_back(i);
    }
  }

  PromptScheme out{scheme.image_width, scheme.image_height, {}};
  for (std::size_t i = 0; i < scheme.points.size(); ++i) {
    if (keep[i]) out.points.push_back(scheme.points[i]);
  }
  return out;
}

/// Adds hard negatives (skipping any location already holding a negative), then
/// re-applies exclusion so none sits within `radius_exclusive` of a positive.
inline PromptScheme merge_hard_negatives(const PromptScheme& scheme,
                                         std::span<const PromptPoint> hard,
                                         double radius_exclusive) {
  detail::check_radius(radius_exclusive);
  if (hard.empty()) return scheme;
  PromptScheme out = scheme;
  for (const auto& h : hard) {
    if (h.cls != PromptClass::HardNegative) {
      throw Error(ErrorKind::InvalidArgument, "merge_hard_negatives expects HardNegative points");
    }
    if (!out.in_bounds(h)) {
      throw Error(ErrorKind::OutOfRange, "hard negative (" + std::to_string(h.x) + "," +
                                             std::to_string(h.y) + ") outside image");
    }
    const bool occupied = std::any_of(out.points.begin(), out.points.end(), [&](const auto& p) {
      return is_negative(p.cls) && p.x == h.x && p.y == h.y;
    });
    if (!occupied) out.points.push_back(h);
  }
  return exclusive_sampling(out, radius_exclusive);
}

}  // namespace promptforge
