#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "baanet/annotation.hpp"
#include "baanet/illumination.hpp"
#include "baanet/tensor.hpp"

namespace baanet {

struct ObjectSpec {
  BoundingBox box;
  double temperature_contrast = 0.4;   // TIR object minus background
  double reflectance_contrast = 0.3;   // RGB object minus background, may be negative
  double occlusion = 0.0;              // fraction of the height hidden from the bottom, [0,1)
};

/// Non-target clutter rendered like an object but never annotated.
struct DistractorSpec {
  BoundingBox box;
  double temperature_contrast = 0.0;
  double reflectance_contrast = 0.0;
};

/// Generative description of one paired RGB/TIR frame.
struct SceneSpec {
  std::size_t width = 64;
  std::size_t height = 64;
  Illumination regime = Illumination::day;
  std::vector<ObjectSpec> objects;
  std::vector<DistractorSpec> distractors;
  double rgb_night_contrast_collapse = 0.0;  // RGB contrast scaled by (1 - this) at night
  double tir_iso_temperature = 0.0;          // TIR object temperature blended toward background
  double rgb_noise_sigma = 0.0;
  double tir_noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (width < 8 || height < 8) throw std::invalid_argument("scene: image must be at least 8x8");
    auto unit = [](double v, const char* what) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string("scene: ") + what + " must lie in [0,1]");
    };
    unit(rgb_night_contrast_collapse, "rgb_night_contrast_collapse");
    unit(tir_iso_temperature, "tir_iso_temperature");
    if (!(rgb_noise_sigma >= 0.0) || !(tir_noise_sigma >= 0.0)) {
      throw std::invalid_argument("scene: noise sigmas must be non-negative");
    }
    auto inside = [&](const BoundingBox& b, const char* what) {
      if (!(b.w > 0.0 && b.h > 0.0)) throw std::invalid_argument(std::string("scene: ") + what + " has empty extent");
      if (b.x0() < 0.0 || b.y0() < 0.0 || b.x1() > static_cast<double>(width) ||
          b.y1() > static_cast<double>(height)) {
        throw std::invalid_argument(std::string("scene: ") + what + " lies outside the image");
      }
    };
    for (const auto& o : objects) {
      inside(o.box, "object");
      if (!(o.occlusion >= 0.0 && o.occlusion < 1.0)) {
        throw std::invalid_argument("scene: occlusion fraction must lie in [0,1)");
      }
    }
    for (const auto& d : distractors) inside(d.box, "distractor");
  }
};

struct Sample {
  std::string id;
  Tensor rgb;  // [3,H,W]
  Tensor tir;  // [1,H,W]
  std::vector<GroundTruth> gts;
  Illumination illumination = Illumination::day;
};

inline constexpr double kDayRgbBackground = 0.55;
inline constexpr double kNightRgbBackground = 0.12;
inline constexpr double kTirBackground = 0.35;

namespace detail {

/// Fraction of pixel column/row [p, p+1) covered by the interval [lo, hi).
inline double coverage_1d(double p, double lo, double hi) {
  return std::clamp(std::min(p + 1.0, hi) - std::max(p, lo), 0.0, 1.0);
}

/// Per-pixel coverage of a rectangle (area-weighted, so edges are soft).
inline std::vector<double> coverage(const BoundingBox& b, double visible_bottom, std::size_t w, std::size_t h) {
  std::vector<double> cov(w * h, 0.0);
  const std::size_t y_begin = static_cast<std::size_t>(std::max(0.0, std::floor(b.y0())));
  const std::size_t y_end = std::min(h, static_cast<std::size_t>(std::ceil(visible_bottom)));
  const std::size_t x_begin = static_cast<std::size_t>(std::max(0.0, std::floor(b.x0())));
  const std::size_t x_end = std::min(w, static_cast<std::size_t>(std::ceil(b.x1())));
  for (std::size_t y = y_begin; y < y_end; ++y) {
    const double cy = coverage_1d(static_cast<double>(y), b.y0(), visible_bottom);
    for (std::size_t x = x_begin; x < x_end; ++x) {
      cov[y * w + x] = cy * coverage_1d(static_cast<double>(x), b.x0(), b.x1());
    }
  }
  return cov;
}

}  // namespace detail

/// Renders a scene. RGB: background plus object contrast, collapsed at night;
/// TIR: object temperature blended toward the background. Gaussian sensor
/// noise is seeded from the spec, then pixels are clamped to [0,1].
inline Sample render(const SceneSpec& spec) {
  spec.validate();
  const std::size_t w = spec.width, h = spec.height, plane = w * h;
  const bool night = spec.regime == Illumination::night;
  const double rgb_bg = night ? kNightRgbBackground : kDayRgbBackground;
  const double rgb_gain = night ? 1.0 - spec.rgb_night_contrast_collapse : 1.0;
  const double tir_gain = 1.0 - spec.tir_iso_temperature;

  Sample s;
  s.illumination = spec.regime;
  s.rgb = Tensor(Shape{3, h, w}, rgb_bg);
  s.tir = Tensor(Shape{1, h, w}, kTirBackground);

  auto paint = [&](const BoundingBox& box, double visible_bottom, double reflectance, double temperature) {
    const auto cov = detail::coverage(box, visible_bottom, w, h);
    for (std::size_t p = 0; p < plane; ++p) {
      if (cov[p] == 0.0) continue;
      for (std::size_t c = 0; c < 3; ++c) s.rgb[c * plane + p] += cov[p] * rgb_gain * reflectance;
      s.tir[p] += cov[p] * tir_gain * temperature;
    }
  };
  for (const auto& d : spec.distractors) paint(d.box, d.box.y1(), d.reflectance_contrast, d.temperature_contrast);
  for (const auto& o : spec.objects) {
    paint(o.box, o.box.y1() - o.occlusion * o.box.h, o.reflectance_contrast, o.temperature_contrast);
    s.gts.push_back({o.box, o.box.h, occlusion_tag(o.occlusion)});
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  if (spec.rgb_noise_sigma > 0.0)
    for (double& v : s.rgb.data()) v += spec.rgb_noise_sigma * gauss(rng);
  if (spec.tir_noise_sigma > 0.0)
    for (double& v : s.tir.data()) v += spec.tir_noise_sigma * gauss(rng);
  for (double& v : s.rgb.data()) v = std::clamp(v, 0.0, 1.0);
  for (double& v : s.tir.data()) v = std::clamp(v, 0.0, 1.0);
  return s;
}

/// Ranges the scene sampler draws noise levels from.
struct NoiseProfile {
  std::string name = "default";
  double night_collapse_min = 0.80;
  double night_collapse_max = 0.95;
  double day_iso_min = 0.0;
  double day_iso_max = 0.85;
  double night_iso_min = 0.0;
  double night_iso_max = 0.25;
  double rgb_sigma_day = 0.02;
  double rgb_sigma_night = 0.05;
  double tir_sigma = 0.03;

  static NoiseProfile standard() { return {}; }

  /// Every noise level zero: both modalities show their nominal contrast.
  static NoiseProfile clean() {
    NoiseProfile p;
    p.name = "clean";
    p.night_collapse_min = p.night_collapse_max = 0.0;
    p.day_iso_min = p.day_iso_max = 0.0;
    p.night_iso_min = p.night_iso_max = 0.0;
    p.rgb_sigma_day = p.rgb_sigma_night = p.tir_sigma = 0.0;
    return p;
  }

  static NoiseProfile from_name(const std::string& name) {
    if (name == "default") return standard();
    if (name == "clean") return clean();
    throw std::invalid_argument("unknown noise profile: " + name);
  }
};

/// Scene content distribution. Heights are uniform on [min_height, max_height].
struct SceneDistribution {
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t min_objects = 1;
  std::size_t max_objects = 4;
  double min_height = 8.0;
  double max_height = 40.0;
  double aspect = 0.41;
  std::size_t max_distractors = 2;
};

inline SceneSpec sample_scene(Illumination regime, const NoiseProfile& noise, const SceneDistribution& dist,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };

  SceneSpec s;
  s.width = dist.width;
  s.height = dist.height;
  s.regime = regime;
  const bool night = regime == Illumination::night;
  s.rgb_night_contrast_collapse = night ? uni(noise.night_collapse_min, noise.night_collapse_max) : 0.0;
  s.tir_iso_temperature = night ? uni(noise.night_iso_min, noise.night_iso_max)
                                : uni(noise.day_iso_min, noise.day_iso_max);
  s.rgb_noise_sigma = night ? noise.rgb_sigma_night : noise.rgb_sigma_day;
  s.tir_noise_sigma = noise.tir_sigma;

  const std::size_t count = pick(dist.min_objects, dist.max_objects);
  for (std::size_t i = 0; i < count; ++i) {
    ObjectSpec o;
    const double h = uni(dist.min_height, dist.max_height);
    const double w = std::max(1.0, dist.aspect * h * uni(0.9, 1.1));
    o.box = {uni(w / 2, static_cast<double>(dist.width) - w / 2), uni(h / 2, static_cast<double>(dist.height) - h / 2),
             w, h};
    o.temperature_contrast = uni(0.3, 0.6);
    o.reflectance_contrast = (uni(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * uni(0.2, 0.4);
    const double occ = uni(0.0, 1.0);
    o.occlusion = occ < 0.7 ? 0.0 : occ < 0.9 ? uni(0.05, kPartialOcclusionLimit) : uni(0.4, 0.7);
    s.objects.push_back(o);
  }
  const std::size_t clutter = pick(0, dist.max_distractors);
  for (std::size_t i = 0; i < clutter; ++i) {
    DistractorSpec d;
    const double h = uni(6.0, 16.0);
    const double w = std::min(static_cast<double>(dist.width) - 1.0, h * uni(1.5, 3.0));
    d.box = {uni(w / 2, static_cast<double>(dist.width) - w / 2), uni(h / 2, static_cast<double>(dist.height) - h / 2),
             w, h};
    // Clutter shows up in one modality only: painted signs in RGB, warm machinery in TIR.
    if (uni(0.0, 1.0) < 0.5) {
      d.reflectance_contrast = (uni(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * uni(0.2, 0.4);
    } else {
      d.temperature_contrast = uni(0.3, 0.6);
    }
    s.distractors.push_back(d);
  }
  s.seed = splitmix64(seed ^ 0xa5a5a5a5ULL);
  return s;
}

}  // namespace baanet
