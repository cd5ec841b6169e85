#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "baanet/evaluator.hpp"

namespace baanet::test_support {

struct FixtureImage {
  std::vector<ScoredBox> dets;
  std::vector<EvalGt> gts;
};

inline double ref_iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2));
  const double iy = std::max(0.0, std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2));
  const double inter = ix * iy;
  return inter == 0.0 ? 0.0 : inter / (a.w * a.h + b.w * b.h - inter);
}

/// Reference: for every candidate threshold, re-match each image from scratch
/// using only detections scoring at least the threshold, then sample the
/// resulting step curve at the log-spaced FPPI points.
inline double brute_force_mr2(const std::vector<FixtureImage>& images, const EvalConfig& cfg) {
  std::set<double> thresholds = {INFINITY};
  std::size_t n_gt = 0;
  for (const auto& im : images) {
    for (const auto& d : im.dets) thresholds.insert(d.score);
    for (const auto& g : im.gts) n_gt += g.ignore ? 0 : 1;
  }
  std::vector<std::pair<double, double>> points;  // (fppi, miss)
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (const auto& im : images) {
      std::vector<std::size_t> kept;
      for (std::size_t i = 0; i < im.dets.size(); ++i)
        if (im.dets[i].score >= t) kept.push_back(i);
      std::stable_sort(kept.begin(), kept.end(),
                       [&](std::size_t a, std::size_t b) { return im.dets[a].score > im.dets[b].score; });
      std::vector<bool> used(im.gts.size(), false);
      for (std::size_t i : kept) {
        int best = -1;
        double best_v = -1.0;
        bool on_ignored = false;
        for (std::size_t g = 0; g < im.gts.size(); ++g) {
          const double v = ref_iou(im.dets[i].box, im.gts[g].box);
          if (v < cfg.iou_threshold) continue;
          if (im.gts[g].ignore) on_ignored = true;
          else if (!used[g] && v > best_v) best = static_cast<int>(g), best_v = v;
        }
        if (best >= 0) used[static_cast<std::size_t>(best)] = true, ++tp;
        else if (!on_ignored) ++fp;
      }
    }
    points.emplace_back(static_cast<double>(fp) / images.size(), 1.0 - static_cast<double>(tp) / n_gt);
  }
  double log_sum = 0.0;
  for (std::size_t k = 0; k < cfg.n_points; ++k) {
    const double ref = std::pow(10.0, std::log10(cfg.fppi_min) + (std::log10(cfg.fppi_max) - std::log10(cfg.fppi_min)) *
                                                                   k / (cfg.n_points - 1.0));
    double m = 1.0;
    for (auto [f, miss] : points)
      if (f <= ref) m = std::min(m, miss);
    log_sum += std::log(std::max(m, 1e-10));
  }
  return std::exp(log_sum / cfg.n_points);
}

inline std::vector<FixtureImage> random_fixture(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_img(1, 5), n_box(0, 5), coin(0, 3);
  std::uniform_real_distribution<double> pos(10, 50), size(6, 20), jitter(-3, 3);
  std::vector<FixtureImage> images(static_cast<std::size_t>(n_img(rng)));
  std::size_t total_gt = 0;
  for (auto& im : images) {
    const int g = n_box(rng);
    for (int i = 0; i < g; ++i) im.gts.push_back({{pos(rng), pos(rng), size(rng), size(rng)}, coin(rng) == 0});
    total_gt += im.gts.size();
    const int d = n_box(rng);
    for (int i = 0; i < d; ++i) {
      BoundingBox b;
      if (!im.gts.empty() && coin(rng) != 0) {
        b = im.gts[static_cast<std::size_t>(rng() % im.gts.size())].box;
        b.cx += jitter(rng);
        b.cy += jitter(rng);
      } else {
        b = {pos(rng), pos(rng), size(rng), size(rng)};
      }
      // Coarse scores so ties across images occur.
      im.dets.push_back({b, std::round(std::uniform_real_distribution<double>(0, 1)(rng) * 10) / 10});
    }
  }
  if (total_gt == 0 || std::all_of(images.begin(), images.end(), [](const FixtureImage& im) {
        return std::all_of(im.gts.begin(), im.gts.end(), [](const EvalGt& g) { return g.ignore; });
      })) {
    images[0].gts.push_back({{30, 30, 10, 10}, false});
  }
  return images;
}

}  // namespace baanet::test_support
