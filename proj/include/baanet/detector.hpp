#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "baanet/losses.hpp"

namespace baanet {

/// Axis-aligned box in pixel coordinates, centre/size parameterization.
struct BoundingBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  [[nodiscard]] double x0() const { return cx - 0.5 * w; }
  [[nodiscard]] double y0() const { return cy - 0.5 * h; }
  [[nodiscard]] double x1() const { return cx + 0.5 * w; }
  [[nodiscard]] double y1() const { return cy + 0.5 * h; }
  [[nodiscard]] double area() const { return w * h; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

using BoxOffsets = std::array<double, 4>;

/// log-size offsets are clamped to this magnitude when decoding
inline constexpr double kMaxLogScale = 4.135166556742356;  // log(1000 / 16)

/// (dcx / aw, dcy / ah, log(w / aw), log(h / ah))
inline BoxOffsets encode_box(const BoundingBox& anchor, const BoundingBox& box) {
  return {(box.cx - anchor.cx) / anchor.w, (box.cy - anchor.cy) / anchor.h, std::log(box.w / anchor.w),
          std::log(box.h / anchor.h)};
}

inline BoundingBox decode_box(const BoundingBox& anchor, const BoxOffsets& d) {
  return {anchor.cx + d[0] * anchor.w, anchor.cy + d[1] * anchor.h,
          anchor.w * std::exp(std::clamp(d[2], -kMaxLogScale, kMaxLogScale)),
          anchor.h * std::exp(std::clamp(d[3], -kMaxLogScale, kMaxLogScale))};
}

struct Anchor {
  BoundingBox box;
  std::size_t cell = 0;   // y * grid_w + x
  std::size_t scale = 0;  // index into the configured anchor heights
};

/// Anchors of an H x W feature grid. Anchor index = scale * (H*W) + cell, which
/// matches the flat layout of an [1, scales, H, W] score tensor.
inline std::vector<Anchor> make_anchors(std::size_t grid_h, std::size_t grid_w, double stride,
                                        std::span<const double> heights, double ratio) {
  if (!(ratio > 0.0) || !(stride > 0.0)) throw std::invalid_argument("make_anchors: ratio and stride must be positive");
  std::vector<Anchor> out;
  out.reserve(heights.size() * grid_h * grid_w);
  for (std::size_t k = 0; k < heights.size(); ++k) {
    if (!(heights[k] > 0.0)) throw std::invalid_argument("make_anchors: anchor heights must be positive");
    for (std::size_t y = 0; y < grid_h; ++y)
      for (std::size_t x = 0; x < grid_w; ++x) {
        const BoundingBox b{(static_cast<double>(x) + 0.5) * stride, (static_cast<double>(y) + 0.5) * stride,
                            heights[k] * ratio, heights[k]};
        out.push_back({b, y * grid_w + x, k});
      }
  }
  return out;
}

/// Flat index of offset coordinate j of anchor a inside an [1, 4*scales, H, W] tensor.
inline std::size_t offset_element(std::size_t anchor, std::size_t coord, std::size_t grid_cells) {
  const std::size_t scale = anchor / grid_cells, cell = anchor % grid_cells;
  return (4 * scale + coord) * grid_cells + cell;
}

struct MatchResult {
  std::vector<AnchorLabel> labels;
  std::vector<std::ptrdiff_t> gt_index;  // -1 unless positive
  std::vector<double> best_iou;
};

/// IoU >= pos -> positive (best-overlapping GT), IoU < neg -> negative,
/// otherwise ignore. Each GT additionally claims its single best anchor.
inline MatchResult match_anchors(std::span<const BoundingBox> anchors, std::span<const BoundingBox> gts, double neg,
                                 double pos) {
  if (neg > pos) throw std::invalid_argument("match_anchors: negative threshold exceeds positive threshold");
  MatchResult r;
  r.labels.assign(anchors.size(), AnchorLabel::negative);
  r.gt_index.assign(anchors.size(), -1);
  r.best_iou.assign(anchors.size(), 0.0);
  if (gts.empty()) return r;

  std::vector<double> gt_best(gts.size(), 0.0);
  std::vector<std::ptrdiff_t> gt_best_anchor(gts.size(), -1);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    std::ptrdiff_t best = -1;
    double best_v = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(anchors[a], gts[g]);
      if (best < 0 || v > best_v) {
        best = static_cast<std::ptrdiff_t>(g);
        best_v = v;
      }
      if (v > gt_best[g]) {
        gt_best[g] = v;
        gt_best_anchor[g] = static_cast<std::ptrdiff_t>(a);
      }
    }
    r.best_iou[a] = best_v;
    if (best_v >= pos) {
      r.labels[a] = AnchorLabel::positive;
      r.gt_index[a] = best;
    } else if (best_v >= neg) {
      r.labels[a] = AnchorLabel::ignore;
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gt_best_anchor[g] < 0) continue;
    const auto a = static_cast<std::size_t>(gt_best_anchor[g]);
    r.labels[a] = AnchorLabel::positive;
    r.gt_index[a] = static_cast<std::ptrdiff_t>(g);
  }
  return r;
}

struct Detection {
  BoundingBox box;
  double score = 0.0;
  double c1 = 0.0;
  double c_r = 0.0;
  double c_t = 0.0;
};

/// c_final = c1 * (w_R * c_R + w_T * c_T)
inline double cascade_score(double c1, double c_r, double c_t, double w_r, double w_t) {
  return c1 * (w_r * c_r + w_t * c_t);
}

/// Greedy NMS. Output is sorted by descending score, ties by input order.
inline std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<Detection> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (iou(k.box, dets[i].box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(dets[i]);
  }
  return kept;
}

/// Per-anchor values read off the two cascade stages.
struct CascadeOutputs {
  std::vector<double> c1;
  std::vector<double> c_r;
  std::vector<double> c_t;
  std::vector<BoxOffsets> b1;
  std::vector<BoxOffsets> b2;
};

struct CascadeSettings {
  double w_r = 0.5;
  double w_t = 0.5;
  double score_floor = 0.01;
  double nms_iou = 0.5;
  std::size_t max_detections = 100;
};

/// Fuses stage scores, decodes anchor + b1 + b2, drops low scores, applies NMS.
inline std::vector<Detection> decode_and_cascade(const CascadeOutputs& out, std::span<const Anchor> anchors,
                                                 const CascadeSettings& s) {
  const std::size_t n = anchors.size();
  if (out.c1.size() != n || out.c_r.size() != n || out.c_t.size() != n || out.b1.size() != n || out.b2.size() != n) {
    throw ShapeError("decode_and_cascade: head outputs do not cover every anchor");
  }
  std::vector<Detection> dets;
  for (std::size_t a = 0; a < n; ++a) {
    const double score = cascade_score(out.c1[a], out.c_r[a], out.c_t[a], s.w_r, s.w_t);
    if (score < s.score_floor) continue;
    BoxOffsets d;
    for (std::size_t j = 0; j < 4; ++j) d[j] = out.b1[a][j] + out.b2[a][j];
    dets.push_back({decode_box(anchors[a].box, d), score, out.c1[a], out.c_r[a], out.c_t[a]});
  }
  auto kept = nms(dets, s.nms_iou);
  if (kept.size() > s.max_detections) kept.resize(s.max_detections);
  return kept;
}

}  // namespace baanet
