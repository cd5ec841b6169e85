#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "baanet/gate.hpp"
#include "baanet/gradcheck.hpp"
#include "baanet/illumination.hpp"
#include "baanet/losses.hpp"
#include "baanet/model.hpp"
#include "baanet/ops.hpp"
#include "baanet/synthdata.hpp"

namespace baanet {

struct NamedGradCheck {
  std::string module;  // "ops", "gate", "illum" or "model"
  std::string name;
  GradCheckReport report;
};

namespace detail {

/// Contracts `x` with fixed random coefficients so every output element gets
/// a distinct upstream gradient.
inline Var probe_sum(Graph& g, Var x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(combine(g.input(Tensor::uniform(x.shape(), -1.0, 1.0, rng)), x, CombineKind::mul_elementwise));
}

inline std::vector<AnchorLabel> random_labels(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<AnchorLabel> labels(n);
  for (auto& l : labels) {
    const auto u = rng() % 4;
    l = u == 0 ? AnchorLabel::positive : u == 1 ? AnchorLabel::ignore : AnchorLabel::negative;
  }
  labels[0] = AnchorLabel::positive;
  return labels;
}

}  // namespace detail

/// One check per primitive op: each builds its own parameter store with
/// random inputs and contracts the op output to a scalar.
inline std::vector<NamedGradCheck> gradcheck_ops(double tolerance, const GradCheckOptions& opts = {}) {
  std::vector<NamedGradCheck> out;
  std::mt19937_64 rng(11);
  auto u = [&](Shape s, double lo = -1.0, double hi = 1.0) { return Tensor::uniform(s, lo, hi, rng); };
  auto run = [&](const std::string& name, ParamStore store, const std::function<Var(Graph&)>& f) {
    out.push_back({"ops", name, grad_check(store, f, tolerance, opts)});
  };
  using detail::probe_sum;

  for (std::size_t stride : {1, 2}) {
    ParamStore s;
    s.add("x", u(Shape{2, 3, 7, 6}));
    s.add("w", u(Shape{4, 3, 3, 3}));
    s.add("b", u(Shape{4}));
    run("conv2d_3x3_s" + std::to_string(stride), std::move(s), [stride](Graph& g) {
      return probe_sum(g, conv2d(g.param("x"), g.param("w"), g.param("b"), stride, 1), 1);
    });
  }
  {
    ParamStore s;
    s.add("x", u(Shape{1, 4, 5, 5}));
    s.add("w", u(Shape{2, 4, 1, 1}));
    s.add("b", u(Shape{2}));
    run("conv2d_1x1", std::move(s),
        [](Graph& g) { return probe_sum(g, conv2d(g.param("x"), g.param("w"), g.param("b")), 2); });
  }
  {
    ParamStore s;
    s.add("x", u(Shape{2, 3, 4, 5}));
    run("global_avg_pool", std::move(s), [](Graph& g) { return probe_sum(g, global_avg_pool(g.param("x")), 3); });
  }
  {
    ParamStore s;
    s.add("x", u(Shape{3, 5}));
    s.add("w", u(Shape{4, 5}));
    s.add("b", u(Shape{4}));
    run("fully_connected", std::move(s), [](Graph& g) {
      return probe_sum(g, fully_connected(g.param("x"), g.param("w"), g.param("b")), 4);
    });
  }
  for (auto [kind, name] : {std::pair{Activation::sigmoid, "sigmoid"}, std::pair{Activation::relu, "relu"},
                            std::pair{Activation::softmax_lastdim, "softmax"}}) {
    ParamStore s;
    s.add("x", u(Shape{2, 3, 4}, -2.0, 2.0));
    run(std::string("activate_") + name, std::move(s),
        [kind = kind](Graph& g) { return probe_sum(g, activate(g.param("x"), kind), 5); });
  }
  {
    struct Case {
      CombineKind kind;
      const char* name;
      Shape a, b;
    };
    const Case cases[] = {
        {CombineKind::add, "combine_add", Shape{2, 3, 4, 4}, Shape{2, 3, 4, 4}},
        {CombineKind::mul_elementwise, "combine_mul_elementwise", Shape{2, 3, 4, 4}, Shape{2, 3, 4, 4}},
        {CombineKind::mul_channelwise, "combine_mul_channelwise", Shape{2, 3, 1, 1}, Shape{2, 3, 4, 4}},
        {CombineKind::mul_spatialwise, "combine_mul_spatialwise", Shape{2, 1, 4, 4}, Shape{2, 3, 4, 4}},
        {CombineKind::concat_channels, "combine_concat_channels", Shape{2, 3, 4, 4}, Shape{2, 2, 4, 4}},
    };
    for (const Case& c : cases) {
      ParamStore s;
      s.add("a", u(c.a));
      s.add("b", u(c.b));
      run(c.name, std::move(s),
          [kind = c.kind](Graph& g) { return probe_sum(g, combine(g.param("a"), g.param("b"), kind), 6); });
    }
  }
  {
    ParamStore s;
    s.add("x", u(Shape{2, 6}));
    run("scale_reshape_sum", std::move(s), [](Graph& g) {
      return probe_sum(g, reshape(scale(g.param("x"), -1.7), Shape{3, 4}), 7);
    });
  }
  {
    ParamStore s;
    s.add("x", u(Shape{1, 3, 4, 4}, -3.0, 3.0));
    run("focal_loss", std::move(s), [](Graph& g) {
      const auto labels = detail::random_labels(48, 8);
      return focal_loss(sigmoid(g.param("x")), labels);
    });
  }
  {
    ParamStore s;
    s.add("x", u(Shape{1, 8, 3, 3}, -2.0, 2.0));
    // Targets keep every residual away from the |x| = 1 kink.
    const std::vector<std::size_t> idx = {0, 5, 17, 30, 44, 71};
    const double shifts[] = {0.3, -0.4, 1.8, -2.5, 0.05, 3.0};
    std::vector<double> tgt;
    for (std::size_t k = 0; k < idx.size(); ++k) tgt.push_back(s.value("x")[idx[k]] + shifts[k]);
    run("smooth_l1", std::move(s), [idx, tgt](Graph& g) {
      return smooth_l1(g.param("x"), idx, tgt, 3);
    });
  }
  {
    ParamStore s;
    s.add("logits", u(Shape{3, 2}));
    run("illum_loss", std::move(s), [](Graph& g) {
      const Illumination labels[] = {Illumination::day, Illumination::night, Illumination::night};
      return illum_loss(softmax(g.param("logits")), labels);
    });
  }
  {
    ParamStore s;
    for (const char* t : {"a", "b", "c", "d", "e"}) s.add(t, u(Shape{1}, 0.1, 1.0));
    run("total_loss", std::move(s), [](Graph& g) {
      LossConfig cfg;
      cfg.weight_reg2 = 0.5;
      return total_loss(g.param("a"), g.param("b"), g.param("c"), g.param("d"), g.param("e"), cfg);
    });
  }
  return out;
}

/// Gate forward on a [1,4,6,6] pair, inputs included as checked parameters,
/// followed by a focal loss on sigmoid of both gated outputs.
inline std::vector<NamedGradCheck> gradcheck_gate(double tolerance, const GradCheckOptions& opts = {}) {
  std::mt19937_64 rng(21);
  ParamStore s;
  s.add("r_in", Tensor::uniform(Shape{1, 4, 6, 6}, -1.0, 1.0, rng));
  s.add("t_in", Tensor::uniform(Shape{1, 4, 6, 6}, -1.0, 1.0, rng));
  const GateParams p = GateParams::create(s, "gate", 4, 4, rng);
  const auto labels = detail::random_labels(2 * 4 * 36, 22);
  auto f = [p, labels](Graph& g) {
    GateOutput o = gate_forward(g.param("r_in"), g.param("t_in"), p, 0.3, 0.7);
    return focal_loss(sigmoid(concat_channels(o.r_out, o.t_out)), labels);
  };
  return {{"gate", "gate_forward", grad_check(s, f, tolerance, opts)}};
}

inline std::vector<NamedGradCheck> gradcheck_illum(double tolerance, const GradCheckOptions& opts = {}) {
  std::mt19937_64 rng(31);
  IllumConfig cfg;
  cfg.resize_hw = 16;
  ParamStore s;
  const IllumNetParams p = IllumNetParams::create(s, cfg, rng);
  const Tensor rgb = Tensor::uniform(Shape{2, 3, 20, 20}, 0.0, 1.0, rng);
  const Tensor tir = Tensor::uniform(Shape{2, 1, 20, 20}, 0.0, 1.0, rng);
  auto f = [&](Graph& g) {
    const Illumination labels[] = {Illumination::day, Illumination::night};
    return illum_loss(illum_forward(g, rgb, tir, p, cfg), labels);
  };
  return {{"illum", "illum_forward", grad_check(s, f, tolerance, opts)}};
}

/// Compact model configuration used by the full-model check (32x32 input).
inline ModelConfig gradcheck_model_config() {
  ModelConfig m;
  m.stage_channels = {4, 8};
  m.anchor_heights = {8.0, 14.0};
  return m;
}

/// Full model and total loss on one synthetic 32x32 sample. The illumination
/// weights enter the forward pass as constants, so they are frozen at their
/// unperturbed values for the finite differences as well.
inline std::vector<NamedGradCheck> gradcheck_model(double tolerance, const GradCheckOptions& opts = {}) {
  IllumConfig icfg;
  icfg.resize_hw = 16;
  BaaNet net(gradcheck_model_config(), icfg, 41);
  SceneDistribution dist;
  dist.width = dist.height = 32;
  dist.min_height = 8.0;
  dist.max_height = 20.0;
  const Sample sample = render(sample_scene(Illumination::night, NoiseProfile::standard(), dist, 42));
  const Tensor rgb = BaaNet::batched(sample.rgb), tir = BaaNet::batched(sample.tir);
  IlluminationWeights frozen;
  {
    Graph g(&net.params());
    frozen = net.forward(g, rgb, tir).illum;
  }
  auto f = [&](Graph& g) {
    const ModelForward fw = net.forward(g, rgb, tir, frozen);
    return net.loss(fw, sample.gts, sample.illumination).total;
  };
  return {{"model", "baanet_total_loss", grad_check(net.params(), f, tolerance, opts)}};
}

inline const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> m = {"ops", "gate", "illum", "model"};
  return m;
}

/// Runs the named module, or every module for "all".
inline std::vector<NamedGradCheck> run_gradcheck(const std::string& module, double tolerance,
                                                 const GradCheckOptions& opts = {}) {
  std::vector<NamedGradCheck> out;
  auto append = [&](std::vector<NamedGradCheck> v) {
    for (auto& c : v) out.push_back(std::move(c));
  };
  const bool all = module == "all";
  bool known = all;
  if (all || module == "ops") known = true, append(gradcheck_ops(tolerance, opts));
  if (all || module == "gate") known = true, append(gradcheck_gate(tolerance, opts));
  if (all || module == "illum") known = true, append(gradcheck_illum(tolerance, opts));
  if (all || module == "model") known = true, append(gradcheck_model(tolerance, opts));
  if (!known) throw std::invalid_argument("unknown gradcheck module: " + module);
  return out;
}

}  // namespace baanet
