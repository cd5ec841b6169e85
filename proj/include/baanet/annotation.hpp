#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "baanet/detector.hpp"

namespace baanet {

/// none: fully visible; partial: up to 35% hidden; heavy: more than that.
enum class OcclusionTag { none, partial, heavy };

inline constexpr double kPartialOcclusionLimit = 0.35;

inline OcclusionTag occlusion_tag(double fraction) {
  if (fraction <= 0.0) return OcclusionTag::none;
  return fraction <= kPartialOcclusionLimit ? OcclusionTag::partial : OcclusionTag::heavy;
}

inline std::string_view to_string(OcclusionTag t) {
  switch (t) {
    case OcclusionTag::none:
      return "none";
    case OcclusionTag::partial:
      return "partial";
    case OcclusionTag::heavy:
      return "heavy";
  }
  return "none";
}

inline OcclusionTag occlusion_from_string(std::string_view s) {
  if (s == "none") return OcclusionTag::none;
  if (s == "partial") return OcclusionTag::partial;
  if (s == "heavy") return OcclusionTag::heavy;
  throw std::invalid_argument("unknown occlusion tag: " + std::string(s));
}

struct GroundTruth {
  BoundingBox box;
  double height_px = 0.0;
  OcclusionTag occlusion = OcclusionTag::none;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

}  // namespace baanet
