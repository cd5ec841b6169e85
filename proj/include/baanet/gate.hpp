#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

#include "baanet/graph.hpp"
#include "baanet/ops.hpp"
#include "baanet/tensor.hpp"

namespace baanet {

/// Names and sizes of one bi-directional attention gate's parameters inside a
/// ParamStore.
///
/// Layout for C channels per modality and hidden width M = max(1, 2C / r):
///   mlp_w1 [M,2C], mlp_b1 [M]          shared reduction over the pooled concat
///   head_t_w2 [C,M], head_t_b2 [C]     TIR channel gate
///   head_r_w2 [C,M], head_r_b2 [C]     RGB channel gate
///   spatial_t_w [1,2C,1,1], spatial_t_b [1]   spatial gate applied to TIR
///   spatial_r_w [1,2C,1,1], spatial_r_b [1]   spatial gate applied to RGB
struct GateParams {
  std::string prefix;
  std::size_t channels = 0;
  std::size_t hidden = 0;

  [[nodiscard]] std::string name(std::string_view field) const { return prefix + "." + std::string(field); }

  static std::size_t hidden_width(std::size_t channels, std::size_t reduction) {
    if (channels == 0 || reduction == 0) throw std::invalid_argument("gate: channels and reduction must be positive");
    const std::size_t wide = 2 * channels;
    if (wide >= reduction && wide % reduction != 0) {
      throw std::invalid_argument("gate: reduction ratio " + std::to_string(reduction) + " does not divide 2C = " +
                                  std::to_string(wide));
    }
    return std::max<std::size_t>(1, wide / reduction);
  }

  /// Registers the gate's tensors. Weights are Xavier-uniform; biases start at zero.
  template <typename Rng>
  static GateParams create(ParamStore& store, std::string prefix, std::size_t channels, std::size_t reduction,
                           Rng& rng) {
    GateParams g{std::move(prefix), channels, hidden_width(channels, reduction)};
    const std::size_t c = channels, m = g.hidden;
    store.add(g.name("mlp_w1"), xavier_uniform(Shape{m, 2 * c}, 2 * c, m, rng));
    store.add(g.name("mlp_b1"), Tensor(Shape{m}));
    store.add(g.name("head_t_w2"), xavier_uniform(Shape{c, m}, m, c, rng));
    store.add(g.name("head_t_b2"), Tensor(Shape{c}));
    store.add(g.name("head_r_w2"), xavier_uniform(Shape{c, m}, m, c, rng));
    store.add(g.name("head_r_b2"), Tensor(Shape{c}));
    store.add(g.name("spatial_t_w"), xavier_uniform(Shape{1, 2 * c, 1, 1}, 2 * c, 1, rng));
    store.add(g.name("spatial_t_b"), Tensor(Shape{1}));
    store.add(g.name("spatial_r_w"), xavier_uniform(Shape{1, 2 * c, 1, 1}, 2 * c, 1, rng));
    store.add(g.name("spatial_r_b"), Tensor(Shape{1}));
    return g;
  }

  /// Registers the gate's tensors with every element zero.
  static GateParams create_zero(ParamStore& store, std::string prefix, std::size_t channels, std::size_t reduction) {
    GateParams g{std::move(prefix), channels, hidden_width(channels, reduction)};
    const std::size_t c = channels, m = g.hidden;
    store.add(g.name("mlp_w1"), Tensor(Shape{m, 2 * c}));
    store.add(g.name("mlp_b1"), Tensor(Shape{m}));
    store.add(g.name("head_t_w2"), Tensor(Shape{c, m}));
    store.add(g.name("head_t_b2"), Tensor(Shape{c}));
    store.add(g.name("head_r_w2"), Tensor(Shape{c, m}));
    store.add(g.name("head_r_b2"), Tensor(Shape{c}));
    store.add(g.name("spatial_t_w"), Tensor(Shape{1, 2 * c, 1, 1}));
    store.add(g.name("spatial_t_b"), Tensor(Shape{1}));
    store.add(g.name("spatial_r_w"), Tensor(Shape{1, 2 * c, 1, 1}));
    store.add(g.name("spatial_r_b"), Tensor(Shape{1}));
    return g;
  }
};

struct ChannelDistillation {
  Var pooled;  // [N,2C,1,1], GAP of the RGB/TIR concat
  Var w_tc;    // [N,C,1,1]
  Var w_rc;
  Var t_dis;
  Var r_dis;
};

struct Recalibration {
  Var r_rec;
  Var t_rec;
};

struct GateOutput {
  Var r_out;
  Var t_out;
  Var w_tc, w_rc;
  Var w_ts, w_rs;
  Var t_dis, r_dis;
  Var r_rec, t_rec;
};

namespace detail {

inline void require_same_modality_dims(Var r, Var t, const char* op) {
  if (r.value().rank() != 4 || !(r.shape() == t.shape())) {
    throw ShapeError(std::string(op) + ": RGB and TIR features must share [N,C,H,W] dims, got " + r.shape().str() +
                     " and " + t.shape().str());
  }
}

inline void require_weight(double w, const char* name) {
  if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument(std::string("gate: ") + name + " must lie in [0,1]");
}

}  // namespace detail

/// Channel distilling: both channel gates come from the same pooled
/// cross-modal descriptor, before either modality is recalibrated.
inline ChannelDistillation channel_distill(Var r_in, Var t_in, const GateParams& p) {
  detail::require_same_modality_dims(r_in, t_in, "channel_distill");
  if (r_in.shape()[1] != p.channels) {
    throw ShapeError("channel_distill: features have " + std::to_string(r_in.shape()[1]) + " channels, gate expects " +
                     std::to_string(p.channels));
  }
  Graph& g = *r_in.graph();
  const std::size_t n = r_in.shape()[0], c = p.channels;

  Var pooled = global_avg_pool(concat_channels(r_in, t_in));
  Var hidden = relu(fully_connected(reshape(pooled, Shape{n, 2 * c}), g.param(p.name("mlp_w1")),
                                    g.param(p.name("mlp_b1"))));
  auto head = [&](std::string_view w, std::string_view b) {
    Var logits = fully_connected(hidden, g.param(p.name(w)), g.param(p.name(b)));
    return reshape(sigmoid(logits), Shape{n, c, 1, 1});
  };
  Var w_tc = head("head_t_w2", "head_t_b2");
  Var w_rc = head("head_r_w2", "head_r_b2");
  return {pooled, w_tc, w_rc, combine(w_tc, t_in, CombineKind::mul_channelwise),
          combine(w_rc, r_in, CombineKind::mul_channelwise)};
}

/// R_rec = R_in + w_T * T_dis and T_rec = T_in + w_R * R_dis.
inline Recalibration recalibrate(Var r_in, Var t_in, Var t_dis, Var r_dis, double w_r, double w_t) {
  detail::require_weight(w_r, "w_R");
  detail::require_weight(w_t, "w_T");
  return {add(r_in, scale(t_dis, w_t)), add(t_in, scale(r_dis, w_r))};
}

/// Spatial aggregation over the recalibrated pair. Fills r_out, t_out,
/// w_ts, w_rs, r_rec, t_rec of the result.
inline GateOutput spatial_aggregate(Var r_rec, Var t_rec, const GateParams& p, double w_r, double w_t) {
  detail::require_same_modality_dims(r_rec, t_rec, "spatial_aggregate");
  detail::require_weight(w_r, "w_R");
  detail::require_weight(w_t, "w_T");
  Graph& g = *r_rec.graph();
  Var both = concat_channels(r_rec, t_rec);
  Var w_ts = sigmoid(conv2d(both, g.param(p.name("spatial_t_w")), g.param(p.name("spatial_t_b"))));
  Var w_rs = sigmoid(conv2d(both, g.param(p.name("spatial_r_w")), g.param(p.name("spatial_r_b"))));

  GateOutput out;
  out.r_rec = r_rec;
  out.t_rec = t_rec;
  out.w_ts = w_ts;
  out.w_rs = w_rs;
  out.r_out = add(r_rec, scale(combine(w_ts, t_rec, CombineKind::mul_spatialwise), w_t));
  out.t_out = add(t_rec, scale(combine(w_rs, r_rec, CombineKind::mul_spatialwise), w_r));
  return out;
}

/// Full gate: channel distilling, recalibration, spatial aggregation.
inline GateOutput gate_forward(Var r_in, Var t_in, const GateParams& p, double w_r, double w_t) {
  ChannelDistillation dist = channel_distill(r_in, t_in, p);
  Recalibration rec = recalibrate(r_in, t_in, dist.t_dis, dist.r_dis, w_r, w_t);
  GateOutput out = spatial_aggregate(rec.r_rec, rec.t_rec, p, w_r, w_t);
  out.w_tc = dist.w_tc;
  out.w_rc = dist.w_rc;
  out.t_dis = dist.t_dis;
  out.r_dis = dist.r_dis;
  return out;
}

}  // namespace baanet
