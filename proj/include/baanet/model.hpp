#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "baanet/annotation.hpp"
#include "baanet/detector.hpp"
#include "baanet/gate.hpp"
#include "baanet/graph.hpp"
#include "baanet/illumination.hpp"
#include "baanet/losses.hpp"
#include "baanet/ops.hpp"

namespace baanet {

/// baa_gate: gates + illumination weighting; baa_gate_no_illum: gates with
/// even modality weights; concat_baseline: no gates, the two branches are
/// concatenated for the heads.
enum class FusionMode { baa_gate, baa_gate_no_illum, concat_baseline };

inline std::string_view to_string(FusionMode m) {
  switch (m) {
    case FusionMode::baa_gate:
      return "baa_gate";
    case FusionMode::baa_gate_no_illum:
      return "baa_gate_no_illum";
    case FusionMode::concat_baseline:
      return "concat_baseline";
  }
  return "baa_gate";
}

inline FusionMode fusion_from_string(std::string_view s) {
  if (s == "baa_gate") return FusionMode::baa_gate;
  if (s == "baa_gate_no_illum") return FusionMode::baa_gate_no_illum;
  if (s == "concat_baseline") return FusionMode::concat_baseline;
  throw std::invalid_argument("unknown fusion mode: " + std::string(s));
}

struct ModelConfig {
  std::vector<std::size_t> stage_channels = {8, 16, 32};
  std::size_t rgb_channels = 3;
  std::size_t tir_channels = 1;
  std::vector<double> anchor_heights = {12.0, 19.0, 30.0};
  double anchor_ratio = 0.41;
  double stage1_neg_iou = 0.3;
  double stage1_pos_iou = 0.5;
  double stage2_neg_iou = 0.5;
  double stage2_pos_iou = 0.7;
  double nms_iou = 0.5;
  double score_floor = 0.01;
  std::size_t max_detections = 100;
  std::size_t gate_reduction = 4;
  /// Initial foreground probability of the classification heads.
  double cls_prior = 0.01;
  FusionMode fusion = FusionMode::baa_gate;

  void validate() const {
    if (stage_channels.empty()) throw std::invalid_argument("model: need at least one backbone stage");
    if (anchor_heights.empty()) throw std::invalid_argument("model: need at least one anchor height");
    if (!(stage1_neg_iou <= stage1_pos_iou) || !(stage2_neg_iou <= stage2_pos_iou)) {
      throw std::invalid_argument("model: negative IoU threshold must not exceed positive threshold");
    }
    if (!(cls_prior > 0.0 && cls_prior < 1.0)) throw std::invalid_argument("model: cls_prior must lie in (0,1)");
  }

  [[nodiscard]] std::size_t stride() const { return std::size_t{1} << stage_channels.size(); }
  [[nodiscard]] std::size_t scales() const { return anchor_heights.size(); }
  [[nodiscard]] bool gated() const { return fusion != FusionMode::concat_baseline; }
  [[nodiscard]] bool uses_illumination() const { return fusion == FusionMode::baa_gate; }
};

struct BackboneOutput {
  Var fused;
  Var r_final;
  Var t_final;
  std::vector<GateOutput> gates;
};

struct ModelForward {
  BackboneOutput backbone;
  Var cls1;    // [1,A,h,w] logits, stage 1
  Var reg1;    // [1,4A,h,w] offsets b1
  Var cls_r;   // [1,A,h,w] logits, RGB stage-2 score
  Var cls_t;   // [1,A,h,w] logits, TIR stage-2 score
  Var reg2;    // [1,4A,h,w] offsets b2
  Var illum_probs;  // [1,2] or empty
  IlluminationWeights illum;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

struct ModelLoss {
  Var total;
  LossTerms terms;
  std::size_t positives1 = 0;
  std::size_t positives2 = 0;
};

class BaaNet {
 public:
  BaaNet(ModelConfig cfg, IllumConfig illum_cfg, std::uint64_t seed) : cfg_(std::move(cfg)), illum_cfg_(illum_cfg) {
    cfg_.validate();
    illum_cfg_.validate();
    std::mt19937_64 rng(seed);
    build(rng, false);
  }

  /// Wraps parameters loaded from a checkpoint; names and shapes must match
  /// what `cfg` would create.
  BaaNet(ModelConfig cfg, IllumConfig illum_cfg, ParamStore params)
      : cfg_(std::move(cfg)), illum_cfg_(illum_cfg) {
    cfg_.validate();
    illum_cfg_.validate();
    std::mt19937_64 rng(0);
    build(rng, false);
    if (params.size() != params_.size()) {
      throw std::invalid_argument("model: parameter count " + std::to_string(params.size()) +
                                  " does not match configuration (" + std::to_string(params_.size()) + ")");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const std::size_t j = params.index_of(params_.name(i));
      if (!(params.value(j).shape() == params_.value(i).shape())) {
        throw ShapeError("model: parameter '" + params_.name(i) + "' has shape " + params.value(j).shape().str() +
                         ", expected " + params_.value(i).shape().str());
      }
      params_.value(i) = params.value(j);
    }
  }

  /// Gate parameters all zero (other parameters still randomly initialized).
  static BaaNet with_zero_gates(ModelConfig cfg, IllumConfig illum_cfg, std::uint64_t seed) {
    BaaNet net(std::move(cfg), illum_cfg);
    std::mt19937_64 rng(seed);
    net.build(rng, true);
    return net;
  }

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] const IllumConfig& illum_config() const { return illum_cfg_; }
  [[nodiscard]] ParamStore& params() { return params_; }
  [[nodiscard]] const ParamStore& params() const { return params_; }
  [[nodiscard]] const std::vector<GateParams>& gates() const { return gates_; }
  [[nodiscard]] const std::optional<IllumNetParams>& illum_net() const { return illum_net_; }

  /// Modality weights used by the gates, the feature fusion and the stage-2
  /// score. Without the illumination head they are fixed at what the modified
  /// sigmoid gives an uninformative prediction, (0.5, 0.5).
  [[nodiscard]] std::pair<double, double> fusion_weights(const IlluminationWeights& w) const {
    if (cfg_.fusion == FusionMode::baa_gate) return {w.w_r, w.w_t};
    return {0.5, 0.5};
  }

  /// Per stage: conv-relu (stride 2) on each modality, then a gate. After the
  /// last stage the branches are fused by the modality weights (or
  /// concatenated in the baseline).
  [[nodiscard]] BackboneOutput backbone_forward(Graph& g, Var rgb, Var tir, const IlluminationWeights& w) const {
    BackboneOutput out;
    Var r = rgb, t = tir;
    const auto [wr, wt] = fusion_weights(w);
    for (std::size_t s = 0; s < cfg_.stage_channels.size(); ++s) {
      const std::string p = "backbone.s" + std::to_string(s);
      r = relu(conv2d(r, g.param(p + ".rgb_w"), g.param(p + ".rgb_b"), 2, 1));
      t = relu(conv2d(t, g.param(p + ".tir_w"), g.param(p + ".tir_b"), 2, 1));
      if (cfg_.gated()) {
        GateOutput go = gate_forward(r, t, gates_[s], wr, wt);
        r = go.r_out;
        t = go.t_out;
        out.gates.push_back(go);
      }
    }
    out.r_final = r;
    out.t_final = t;
    if (cfg_.gated()) {
      out.fused = add(scale(r, wr), scale(t, wt));
    } else {
      out.fused = concat_channels(r, t);
    }
    return out;
  }

  /// Full forward pass on one image pair given as [1,C,H,W] tensors. When
  /// `fixed_weights` is set the illumination weights are taken from it instead
  /// of the (non-differentiated) illumination head output.
  [[nodiscard]] ModelForward forward(Graph& g, const Tensor& rgb, const Tensor& tir,
                                     std::optional<IlluminationWeights> fixed_weights = std::nullopt) const {
    if (rgb.rank() != 4 || tir.rank() != 4 || rgb.dim(0) != 1 || tir.dim(0) != 1) {
      throw ShapeError("model: expected single [1,C,H,W] image pair, got " + rgb.shape().str() + " and " +
                       tir.shape().str());
    }
    if (rgb.dim(2) != tir.dim(2) || rgb.dim(3) != tir.dim(3)) {
      throw ShapeError("model: RGB " + rgb.shape().str() + " and TIR " + tir.shape().str() + " are not aligned");
    }
    ModelForward f;
    if (illum_net_) {
      f.illum_probs = illum_forward(g, rgb, tir, *illum_net_, illum_cfg_);
      const Tensor& p = f.illum_probs.value();
      f.illum = modified_sigmoid(p[0], p[1], illum_cfg_);
    }
    if (fixed_weights) f.illum = *fixed_weights;

    f.backbone = backbone_forward(g, g.input(rgb), g.input(tir), f.illum);
    Var feat = f.backbone.fused;
    auto head = [&](Var x, const std::string& stem) {
      return conv2d(x, g.param("head." + stem + "_w"), g.param("head." + stem + "_b"), 1, 1);
    };
    f.cls1 = head(feat, "cls1");
    f.reg1 = head(feat, "reg1");
    f.cls_r = head(f.backbone.r_final, "cls_r");
    f.cls_t = head(f.backbone.t_final, "cls_t");
    f.reg2 = head(feat, "reg2");
    f.grid_h = feat.shape()[2];
    f.grid_w = feat.shape()[3];
    return f;
  }

  [[nodiscard]] std::vector<Anchor> anchors(std::size_t grid_h, std::size_t grid_w) const {
    return make_anchors(grid_h, grid_w, static_cast<double>(cfg_.stride()), cfg_.anchor_heights, cfg_.anchor_ratio);
  }

  /// Objective L_I + L_cls1 + L_cls2 + L_reg1 + L_reg2 for one image pair.
  /// Stage 2 is labelled by matching the stage-1 refined boxes; its
  /// regression target applies to the summed offsets b1 + b2.
  [[nodiscard]] ModelLoss loss(const ModelForward& f, std::span<const GroundTruth> gts, Illumination label,
                               const LossConfig& lcfg = {}) const {
    const auto anchor_list = anchors(f.grid_h, f.grid_w);
    const std::size_t cells = f.grid_h * f.grid_w;
    std::vector<BoundingBox> anchor_boxes, gt_boxes;
    for (const auto& a : anchor_list) anchor_boxes.push_back(a.box);
    for (const auto& gt : gts) gt_boxes.push_back(gt.box);

    const MatchResult m1 = match_anchors(anchor_boxes, gt_boxes, cfg_.stage1_neg_iou, cfg_.stage1_pos_iou);
    const Tensor& b1 = f.reg1.value();
    std::vector<BoundingBox> refined(anchor_boxes.size());
    for (std::size_t a = 0; a < anchor_boxes.size(); ++a) {
      BoxOffsets d;
      for (std::size_t j = 0; j < 4; ++j) d[j] = b1[offset_element(a, j, cells)];
      refined[a] = decode_box(anchor_boxes[a], d);
    }
    const MatchResult m2 = match_anchors(refined, gt_boxes, cfg_.stage2_neg_iou, cfg_.stage2_pos_iou);

    auto regression_targets = [&](const MatchResult& m, std::vector<std::size_t>& idx, std::vector<double>& tgt) {
      std::size_t positives = 0;
      for (std::size_t a = 0; a < m.labels.size(); ++a) {
        if (m.labels[a] != AnchorLabel::positive) continue;
        ++positives;
        const BoxOffsets t = encode_box(anchor_boxes[a], gt_boxes[static_cast<std::size_t>(m.gt_index[a])]);
        for (std::size_t j = 0; j < 4; ++j) {
          idx.push_back(offset_element(a, j, cells));
          tgt.push_back(t[j]);
        }
      }
      return positives;
    };

    ModelLoss out;
    Var l_cls1 = focal_loss(sigmoid(f.cls1), m1.labels, lcfg);
    const auto [wr, wt] = fusion_weights(f.illum);
    Var c2 = add(scale(sigmoid(f.cls_r), wr), scale(sigmoid(f.cls_t), wt));
    Var l_cls2 = focal_loss(c2, m2.labels, lcfg);

    std::vector<std::size_t> idx1, idx2;
    std::vector<double> tgt1, tgt2;
    out.positives1 = regression_targets(m1, idx1, tgt1);
    out.positives2 = regression_targets(m2, idx2, tgt2);
    Var l_reg1 = smooth_l1(f.reg1, idx1, tgt1, out.positives1);
    Var l_reg2 = smooth_l1(add(f.reg1, f.reg2), idx2, tgt2, out.positives2);

    Var l_illum;
    if (f.illum_probs.valid()) {
      const Illumination labels[1] = {label};
      l_illum = illum_loss(f.illum_probs, labels);
    }
    out.total = total_loss(l_illum, l_cls1, l_cls2, l_reg1, l_reg2, lcfg);
    out.terms.illum = l_illum.valid() ? l_illum.value()[0] : 0.0;
    out.terms.cls1 = l_cls1.value()[0];
    out.terms.cls2 = l_cls2.value()[0];
    out.terms.reg1 = l_reg1.value()[0];
    out.terms.reg2 = l_reg2.value()[0];
    return out;
  }

  /// Per-anchor stage outputs read off a forward pass.
  [[nodiscard]] CascadeOutputs cascade_outputs(const ModelForward& f) const {
    const std::size_t cells = f.grid_h * f.grid_w;
    const std::size_t n = cells * cfg_.scales();
    CascadeOutputs o;
    o.c1.resize(n);
    o.c_r.resize(n);
    o.c_t.resize(n);
    o.b1.resize(n);
    o.b2.resize(n);
    const Tensor &c1 = f.cls1.value(), &cr = f.cls_r.value(), &ct = f.cls_t.value();
    const Tensor &b1 = f.reg1.value(), &b2 = f.reg2.value();
    for (std::size_t a = 0; a < n; ++a) {
      o.c1[a] = detail::sigmoid(c1[a]);
      o.c_r[a] = detail::sigmoid(cr[a]);
      o.c_t[a] = detail::sigmoid(ct[a]);
      for (std::size_t j = 0; j < 4; ++j) {
        o.b1[a][j] = b1[offset_element(a, j, cells)];
        o.b2[a][j] = b2[offset_element(a, j, cells)];
      }
    }
    return o;
  }

  /// Inference on a single image pair ([C,H,W] or [1,C,H,W] tensors).
  [[nodiscard]] std::vector<Detection> detect(const Tensor& rgb, const Tensor& tir,
                                              IlluminationWeights* weights_out = nullptr) const {
    Graph g(&params_);
    const ModelForward f = forward(g, batched(rgb), batched(tir));
    if (weights_out) *weights_out = f.illum;
    CascadeSettings s;
    std::tie(s.w_r, s.w_t) = fusion_weights(f.illum);
    s.score_floor = cfg_.score_floor;
    s.nms_iou = cfg_.nms_iou;
    s.max_detections = cfg_.max_detections;
    return decode_and_cascade(cascade_outputs(f), anchors(f.grid_h, f.grid_w), s);
  }

  static Tensor batched(const Tensor& t) {
    if (t.rank() == 4) return t;
    if (t.rank() != 3) throw ShapeError("model: expected [C,H,W] image, got " + t.shape().str());
    return t.reshaped(Shape{1, t.dim(0), t.dim(1), t.dim(2)});
  }

 private:
  BaaNet(ModelConfig cfg, IllumConfig illum_cfg) : cfg_(std::move(cfg)), illum_cfg_(illum_cfg) {}

  template <typename Rng>
  void build(Rng& rng, bool zero_gates) {
    params_ = ParamStore();
    gates_.clear();
    illum_net_.reset();
    auto conv = [&](const std::string& stem, std::size_t cin, std::size_t cout, std::size_t k, double bias) {
      params_.add(stem + "_w", xavier_uniform(Shape{cout, cin, k, k}, cin * k * k, cout * k * k, rng));
      params_.add(stem + "_b", Tensor(Shape{cout}, bias));
    };
    std::size_t rc = cfg_.rgb_channels, tc = cfg_.tir_channels;
    for (std::size_t s = 0; s < cfg_.stage_channels.size(); ++s) {
      const std::string p = "backbone.s" + std::to_string(s);
      const std::size_t c = cfg_.stage_channels[s];
      conv(p + ".rgb", rc, c, 3, 0.0);
      conv(p + ".tir", tc, c, 3, 0.0);
      rc = tc = c;
      if (cfg_.gated()) {
        const std::string gp = "gate" + std::to_string(s);
        gates_.push_back(zero_gates ? GateParams::create_zero(params_, gp, c, cfg_.gate_reduction)
                                    : GateParams::create(params_, gp, c, cfg_.gate_reduction, rng));
      }
    }
    const std::size_t feat = cfg_.gated() ? rc : 2 * rc;
    const std::size_t a = cfg_.scales();
    const double prior = -std::log((1.0 - cfg_.cls_prior) / cfg_.cls_prior);
    conv("head.cls1", feat, a, 3, prior);
    conv("head.reg1", feat, 4 * a, 3, 0.0);
    conv("head.cls_r", rc, a, 3, prior);
    conv("head.cls_t", tc, a, 3, prior);
    conv("head.reg2", feat, 4 * a, 3, 0.0);
    if (cfg_.uses_illumination()) illum_net_ = IllumNetParams::create(params_, illum_cfg_, rng);
  }

  ModelConfig cfg_;
  IllumConfig illum_cfg_;
  ParamStore params_;
  std::vector<GateParams> gates_;
  std::optional<IllumNetParams> illum_net_;
};

}  // namespace baanet
