#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "baanet/annotation.hpp"
#include "baanet/detector.hpp"
#include "baanet/illumination.hpp"

namespace baanet {

struct EvalConfig {
  double iou_threshold = 0.5;
  double fppi_min = 1e-2;
  double fppi_max = 1.0;
  std::size_t n_points = 9;
  /// Scaled stand-in for a 55 px minimum at full KAIST resolution.
  double reasonable_min_height = 14.0;
  std::set<OcclusionTag> allowed_occlusion = {OcclusionTag::none, OcclusionTag::partial};

  void validate() const {
    if (!(fppi_min > 0.0 && fppi_max > fppi_min)) throw std::invalid_argument("eval: FPPI range must be positive");
    if (n_points < 2) throw std::invalid_argument("eval: need at least two FPPI sample points");
  }

  [[nodiscard]] bool reasonable(const GroundTruth& g) const {
    return g.height_px >= reasonable_min_height && allowed_occlusion.count(g.occlusion) != 0;
  }
};

/// Ground truth as seen by the matcher: ignored boxes absorb detections
/// without counting as hits or misses.
struct EvalGt {
  BoundingBox box;
  bool ignore = false;
};

struct ScoredBox {
  BoundingBox box;
  double score = 0.0;
};

enum class MatchOutcome { true_positive, false_positive, ignored };

struct ImageMatch {
  std::vector<double> scores;  // descending
  std::vector<MatchOutcome> outcomes;
  std::size_t gt_count = 0;  // non-ignored GTs
  std::size_t matched = 0;

  [[nodiscard]] std::size_t tp() const {
    return static_cast<std::size_t>(std::count(outcomes.begin(), outcomes.end(), MatchOutcome::true_positive));
  }
  [[nodiscard]] std::size_t fp() const {
    return static_cast<std::size_t>(std::count(outcomes.begin(), outcomes.end(), MatchOutcome::false_positive));
  }
  [[nodiscard]] std::size_t missed() const { return gt_count - matched; }
};

/// Greedy matching in descending score order (ties: lower detection index
/// first). Each detection takes the unmatched, non-ignored GT of highest IoU
/// at or above the threshold; failing that, a detection overlapping an
/// ignored GT is itself ignored; otherwise it is a false positive.
inline ImageMatch match_image(std::span<const ScoredBox> dets, std::span<const EvalGt> gts, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  ImageMatch m;
  std::vector<bool> taken(gts.size(), false);
  for (const EvalGt& g : gts) m.gt_count += g.ignore ? 0 : 1;
  for (std::size_t i : order) {
    std::ptrdiff_t best = -1;
    double best_iou = iou_threshold;
    bool hits_ignored = false;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(dets[i].box, gts[g].box);
      if (v < iou_threshold) continue;
      if (gts[g].ignore) {
        hits_ignored = true;
      } else if (!taken[g] && (best < 0 || v > best_iou)) {
        best = static_cast<std::ptrdiff_t>(g);
        best_iou = v;
      }
    }
    m.scores.push_back(dets[i].score);
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = true;
      ++m.matched;
      m.outcomes.push_back(MatchOutcome::true_positive);
    } else {
      m.outcomes.push_back(hits_ignored ? MatchOutcome::ignored : MatchOutcome::false_positive);
    }
  }
  return m;
}

struct CurvePoint {
  double fppi = 0.0;
  double miss_rate = 1.0;
};

struct EvalResult {
  std::vector<CurvePoint> curve;    // one point per distinct score threshold, plus the empty prefix
  std::vector<CurvePoint> sampled;  // at the log-spaced reference FPPI values
  double mr2 = 1.0;
  std::size_t gt_count = 0;
  std::size_t image_count = 0;
};

inline constexpr double kMissRateFloor = 1e-10;

inline std::vector<double> reference_fppi(const EvalConfig& cfg) {
  std::vector<double> refs(cfg.n_points);
  const double lo = std::log10(cfg.fppi_min), hi = std::log10(cfg.fppi_max);
  for (std::size_t i = 0; i < cfg.n_points; ++i) {
    refs[i] = std::pow(10.0, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_points - 1));
  }
  return refs;
}

/// Samples a (fppi, miss) curve at the reference points, taking the lowest
/// miss rate among points with fppi <= reference, then averages in log space.
inline void sample_curve(EvalResult& r, const EvalConfig& cfg) {
  r.sampled.clear();
  double log_sum = 0.0;
  for (double ref : reference_fppi(cfg)) {
    double best = 1.0;
    for (const CurvePoint& p : r.curve)
      if (p.fppi <= ref) best = std::min(best, p.miss_rate);
    r.sampled.push_back({ref, best});
    log_sum += std::log(std::max(best, kMissRateFloor));
  }
  r.mr2 = std::exp(log_sum / static_cast<double>(cfg.n_points));
}

/// Miss rate versus FPPI over every distinct detection score, and MR^-2.
inline EvalResult mr_fppi_curve(std::span<const ImageMatch> images, const EvalConfig& cfg = {}) {
  cfg.validate();
  EvalResult r;
  r.image_count = images.size();
  struct Entry {
    double score;
    MatchOutcome outcome;
  };
  std::vector<Entry> all;
  for (const ImageMatch& m : images) {
    r.gt_count += m.gt_count;
    for (std::size_t i = 0; i < m.scores.size(); ++i) all.push_back({m.scores[i], m.outcomes[i]});
  }
  if (r.gt_count == 0) throw std::invalid_argument("mr_fppi_curve: no ground truth in the evaluated set");
  if (images.empty()) throw std::invalid_argument("mr_fppi_curve: no images");
  std::stable_sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score > b.score; });

  const double n_img = static_cast<double>(images.size());
  const double n_gt = static_cast<double>(r.gt_count);
  std::size_t tp = 0, fp = 0;
  r.curve.push_back({0.0, 1.0});
  for (std::size_t i = 0; i < all.size();) {
    const double s = all[i].score;
    for (; i < all.size() && all[i].score == s; ++i) {
      if (all[i].outcome == MatchOutcome::true_positive) ++tp;
      if (all[i].outcome == MatchOutcome::false_positive) ++fp;
    }
    r.curve.push_back({static_cast<double>(fp) / n_img, 1.0 - static_cast<double>(tp) / n_gt});
  }
  sample_curve(r, cfg);
  return r;
}

/// One frame's detections and annotations for subset evaluation.
struct EvalImage {
  std::string id;
  Illumination illumination = Illumination::day;
  std::vector<ScoredBox> detections;
  std::vector<GroundTruth> gts;
};

struct SubsetResult {
  std::string name;
  std::optional<EvalResult> result;  // absent when the subset holds no ground truth
};

/// Height tercile cut points over the reasonable GTs: far < lo <= medium < hi <= near.
struct ScaleCuts {
  double lo = 0.0;
  double hi = 0.0;
};

inline ScaleCuts scale_terciles(std::span<const EvalImage> images, const EvalConfig& cfg) {
  std::vector<double> h;
  for (const auto& im : images)
    for (const auto& g : im.gts)
      if (cfg.reasonable(g)) h.push_back(g.height_px);
  if (h.empty()) return {};
  std::sort(h.begin(), h.end());
  return {h[h.size() / 3], h[(2 * h.size()) / 3]};
}

inline const std::vector<std::string>& subset_names() {
  static const std::vector<std::string> names = {"all", "day", "night", "near", "medium", "far",
                                                 "occ-none", "occ-partial"};
  return names;
}

/// Evaluates one subset: images failing `keep_image` are dropped; GTs failing
/// `keep_gt` (or outside the reasonable filter) are marked ignore.
inline std::optional<EvalResult> evaluate_subset(std::span<const EvalImage> images, const EvalConfig& cfg,
                                                 const std::function<bool(const EvalImage&)>& keep_image,
                                                 const std::function<bool(const GroundTruth&)>& keep_gt) {
  std::vector<ImageMatch> matches;
  std::size_t gt_total = 0;
  for (const auto& im : images) {
    if (!keep_image(im)) continue;
    std::vector<EvalGt> gts;
    for (const auto& g : im.gts) gts.push_back({g.box, !(cfg.reasonable(g) && keep_gt(g))});
    matches.push_back(match_image(im.detections, gts, cfg.iou_threshold));
    gt_total += matches.back().gt_count;
  }
  if (matches.empty() || gt_total == 0) return std::nullopt;
  return mr_fppi_curve(matches, cfg);
}

/// Day/night subsets filter images; scale and occlusion subsets filter GTs.
inline std::vector<SubsetResult> subset_eval(std::span<const EvalImage> images, const EvalConfig& cfg = {}) {
  const ScaleCuts cuts = scale_terciles(images, cfg);
  auto any_image = [](const EvalImage&) { return true; };
  auto any_gt = [](const GroundTruth&) { return true; };
  auto regime = [](Illumination il) { return [il](const EvalImage& im) { return im.illumination == il; }; };
  auto occlusion = [](OcclusionTag t) { return [t](const GroundTruth& g) { return g.occlusion == t; }; };

  std::vector<SubsetResult> out;
  out.push_back({"all", evaluate_subset(images, cfg, any_image, any_gt)});
  out.push_back({"day", evaluate_subset(images, cfg, regime(Illumination::day), any_gt)});
  out.push_back({"night", evaluate_subset(images, cfg, regime(Illumination::night), any_gt)});
  out.push_back({"near", evaluate_subset(images, cfg, any_image,
                                         [cuts](const GroundTruth& g) { return g.height_px >= cuts.hi; })});
  out.push_back({"medium", evaluate_subset(images, cfg, any_image, [cuts](const GroundTruth& g) {
                   return g.height_px >= cuts.lo && g.height_px < cuts.hi;
                 })});
  out.push_back({"far", evaluate_subset(images, cfg, any_image,
                                        [cuts](const GroundTruth& g) { return g.height_px < cuts.lo; })});
  out.push_back({"occ-none", evaluate_subset(images, cfg, any_image, occlusion(OcclusionTag::none))});
  out.push_back({"occ-partial", evaluate_subset(images, cfg, any_image, occlusion(OcclusionTag::partial))});
  return out;
}

inline const SubsetResult* find_subset(std::span<const SubsetResult> results, const std::string& name) {
  for (const auto& r : results)
    if (r.name == name) return &r;
  return nullptr;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// CSV: header `subset,fppi,miss_rate`, one row per sampled point of every
/// present subset, then `summary,<subset>,<mr2>` rows.
inline void write_eval_csv(std::ostream& os, std::span<const SubsetResult> results) {
  os << "subset,fppi,miss_rate\n";
  for (const auto& r : results) {
    if (!r.result) continue;
    for (const auto& p : r.result->sampled) os << r.name << ',' << format_double(p.fppi) << ',' << format_double(p.miss_rate) << '\n';
  }
  for (const auto& r : results) {
    if (!r.result) continue;
    os << "summary," << r.name << ',' << format_double(r.result->mr2) << '\n';
  }
}

}  // namespace baanet
