#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "baanet/graph.hpp"
#include "baanet/ops.hpp"
#include "baanet/tensor.hpp"

namespace baanet {

enum class Illumination { day, night };

inline std::string_view to_string(Illumination i) { return i == Illumination::day ? "day" : "night"; }

inline Illumination illumination_from_string(std::string_view s) {
  if (s == "day") return Illumination::day;
  if (s == "night") return Illumination::night;
  throw std::invalid_argument("unknown illumination label: " + std::string(s));
}

/// Day/night probabilities and the modality weights derived from them.
struct IlluminationWeights {
  double w_d = 0.5;
  double w_n = 0.5;
  double w_r = 0.5;
  double w_t = 0.5;
};

struct IllumConfig {
  double k1 = 0.5;  // steepness when day is more likely
  double k2 = 3.0;  // steepness when night is more likely
  std::size_t resize_hw = 56;

  void validate() const {
    if (!(k1 > 0.0) || !(k2 > 0.0)) throw std::invalid_argument("illumination: k1 and k2 must be positive");
    if (resize_hw < 8) throw std::invalid_argument("illumination: resize side must be at least 8");
  }
};

/// Piecewise sigmoid mapping (w_D, w_N) to (w_R, w_T): gentle slope k1 on the
/// day side, steep slope k2 on the night side, w_T = 1 - w_R.
inline IlluminationWeights modified_sigmoid(double w_d, double w_n, const IllumConfig& cfg = {}) {
  const double diff = w_d - w_n;
  const double k = diff > 0.0 ? cfg.k1 : cfg.k2;
  IlluminationWeights out;
  out.w_d = w_d;
  out.w_n = w_n;
  out.w_r = 1.0 / (1.0 + std::exp(-k * diff));
  out.w_t = 1.0 - out.w_r;
  return out;
}

/// Bilinear resize with corner-aligned sampling: output corners land exactly
/// on input corners.
inline Tensor resize_bilinear(const Tensor& img, std::size_t side) {
  if (side < 1) throw std::invalid_argument("resize_bilinear: target side must be >= 1");
  if (img.rank() != 4) throw ShapeError("resize_bilinear: expected [N,C,H,W], got " + img.shape().str());
  const std::size_t n = img.dim(0), c = img.dim(1), h = img.dim(2), w = img.dim(3);
  if (h < 2 || w < 2) throw ShapeError("resize_bilinear: input H and W must be >= 2, got " + img.shape().str());

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [side](std::size_t extent) {
    std::vector<Tap> t(side);
    const double scale = side > 1 ? static_cast<double>(extent - 1) / static_cast<double>(side - 1) : 0.0;
    for (std::size_t i = 0; i < side; ++i) {
      const double src = static_cast<double>(i) * scale;
      std::size_t lo = std::min(static_cast<std::size_t>(std::floor(src)), extent - 1);
      const std::size_t hi = std::min(lo + 1, extent - 1);
      t[i] = {lo, hi, src - static_cast<double>(lo)};
    }
    return t;
  };
  const auto ty = taps(h), tx = taps(w);

  Tensor out(Shape{n, c, side, side});
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = img.raw() + plane * h * w;
    double* dst = out.raw() + plane * side * side;
    for (std::size_t y = 0; y < side; ++y) {
      const Tap& a = ty[y];
      for (std::size_t x = 0; x < side; ++x) {
        const Tap& b = tx[x];
        const double top = src[a.lo * w + b.lo] * (1.0 - b.frac) + src[a.lo * w + b.hi] * b.frac;
        const double bottom = src[a.hi * w + b.lo] * (1.0 - b.frac) + src[a.hi * w + b.hi] * b.frac;
        dst[y * side + x] = top * (1.0 - a.frac) + bottom * a.frac;
      }
    }
  }
  return out;
}

/// Parameters of the illumination sub-network: per modality two 3x3 stride-2
/// convs (8 then 16 channels), then two fully connected layers (32, 2).
struct IllumNetParams {
  std::string prefix = "illum";
  std::size_t resize_hw = 56;
  std::size_t rgb_channels = 3;
  std::size_t tir_channels = 1;

  static constexpr std::size_t kConv1 = 8;
  static constexpr std::size_t kConv2 = 16;
  static constexpr std::size_t kHidden = 32;

  [[nodiscard]] std::string name(std::string_view field) const { return prefix + "." + std::string(field); }

  [[nodiscard]] std::size_t pooled_side() const {
    return conv_output_extent(conv_output_extent(resize_hw, 3, 2, 1), 3, 2, 1);
  }
  [[nodiscard]] std::size_t flat_features() const { return 2 * kConv2 * pooled_side() * pooled_side(); }

  template <typename Rng>
  static IllumNetParams create(ParamStore& store, const IllumConfig& cfg, Rng& rng, std::string prefix = "illum") {
    cfg.validate();
    IllumNetParams p;
    p.prefix = std::move(prefix);
    p.resize_hw = cfg.resize_hw;
    auto conv = [&](std::string_view stem, std::size_t cin, std::size_t cout) {
      store.add(p.name(std::string(stem) + "_w"), xavier_uniform(Shape{cout, cin, 3, 3}, cin * 9, cout * 9, rng));
      store.add(p.name(std::string(stem) + "_b"), Tensor(Shape{cout}));
    };
    conv("rgb_conv1", p.rgb_channels, kConv1);
    conv("rgb_conv2", kConv1, kConv2);
    conv("tir_conv1", p.tir_channels, kConv1);
    conv("tir_conv2", kConv1, kConv2);
    const std::size_t flat = p.flat_features();
    store.add(p.name("fc1_w"), xavier_uniform(Shape{kHidden, flat}, flat, kHidden, rng));
    store.add(p.name("fc1_b"), Tensor(Shape{kHidden}));
    store.add(p.name("fc2_w"), xavier_uniform(Shape{2, kHidden}, kHidden, 2, rng));
    store.add(p.name("fc2_b"), Tensor(Shape{2}));
    return p;
  }
};

/// Day/night probabilities [N,2] (column 0 = day) for full-resolution image pairs.
inline Var illum_forward(Graph& g, const Tensor& rgb, const Tensor& tir, const IllumNetParams& p,
                         const IllumConfig& cfg = {}) {
  if (rgb.rank() != 4 || tir.rank() != 4 || rgb.dim(0) != tir.dim(0)) {
    throw ShapeError("illum_forward: expected batched [N,C,H,W] pair, got " + rgb.shape().str() + " and " +
                     tir.shape().str());
  }
  if (cfg.resize_hw != p.resize_hw) throw std::invalid_argument("illum_forward: config resize side differs from params");
  const std::size_t n = rgb.dim(0);
  auto branch = [&](const Tensor& img, std::string_view stem) {
    const std::string s(stem);
    Var x = g.input(resize_bilinear(img, p.resize_hw));
    x = relu(conv2d(x, g.param(p.name(s + "_conv1_w")), g.param(p.name(s + "_conv1_b")), 2, 1));
    return relu(conv2d(x, g.param(p.name(s + "_conv2_w")), g.param(p.name(s + "_conv2_b")), 2, 1));
  };
  Var both = concat_channels(branch(rgb, "rgb"), branch(tir, "tir"));
  Var flat = reshape(both, Shape{n, p.flat_features()});
  Var hidden = relu(fully_connected(flat, g.param(p.name("fc1_w")), g.param(p.name("fc1_b"))));
  Var logits = fully_connected(hidden, g.param(p.name("fc2_w")), g.param(p.name("fc2_b")));
  return softmax(logits);
}

inline constexpr double kProbabilityClamp = 1e-12;

/// Cross-entropy against the one-hot day/night label, single pair.
inline double illum_loss_value(double w_d, double w_n, Illumination label) {
  const double p = label == Illumination::day ? w_d : w_n;
  return -std::log(std::max(p, kProbabilityClamp));
}

/// Mean illumination cross-entropy over a batch of [N,2] probabilities.
inline Var illum_loss(Var probs, std::span<const Illumination> labels) {
  const Tensor& pv = probs.value();
  if (pv.rank() != 2 || pv.dim(1) != 2 || pv.dim(0) != labels.size()) {
    throw ShapeError("illum_loss: expected [N,2] probabilities for " + std::to_string(labels.size()) +
                     " labels, got " + pv.shape().str());
  }
  const std::size_t n = labels.size();
  std::vector<std::size_t> cols(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cols[i] = labels[i] == Illumination::day ? 0 : 1;
    total += -std::log(std::max(pv[i * 2 + cols[i]], kProbabilityClamp));
  }
  return probs.graph()->record(Tensor::scalar(total / static_cast<double>(n)), {probs},
                               [probs, cols, n](const Tensor& gout, GradSlots gin) {
                                 const Tensor& pvv = probs.value();
                                 for (std::size_t i = 0; i < n; ++i) {
                                   const double p = pvv[i * 2 + cols[i]];
                                   if (p > kProbabilityClamp)
                                     (*gin[0])[i * 2 + cols[i]] -= gout[0] / (static_cast<double>(n) * p);
                                 }
                               });
}

}  // namespace baanet
