#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "baanet/graph.hpp"
#include "baanet/tensor.hpp"

namespace baanet {

enum class AnchorLabel : std::uint8_t { negative, ignore, positive };

struct LossConfig {
  double alpha = 0.25;
  double gamma = 2.0;
  double weight_illum = 1.0;
  double weight_cls1 = 1.0;
  double weight_cls2 = 1.0;
  double weight_reg1 = 1.0;
  double weight_reg2 = 1.0;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("loss: alpha must lie in (0,1)");
    if (!(gamma >= 0.0)) throw std::invalid_argument("loss: gamma must be non-negative");
  }
};

inline constexpr double kScoreClamp = 1e-12;

/// Focal loss contribution of one anchor and its derivative w.r.t. the score.
/// Scores are clamped to [1e-12, 1 - 1e-12]; clamped scores get zero slope.
inline std::pair<double, double> focal_term(double score, AnchorLabel label, const LossConfig& cfg) {
  if (label == AnchorLabel::ignore) return {0.0, 0.0};
  const bool clamped = score < kScoreClamp || score > 1.0 - kScoreClamp;
  const double c = std::clamp(score, kScoreClamp, 1.0 - kScoreClamp);
  const double a = cfg.alpha, gm = cfg.gamma;
  if (label == AnchorLabel::positive) {
    const double q = 1.0 - c;
    const double value = -a * std::pow(q, gm) * std::log(c);
    double slope = a * std::pow(q, gm) / c * -1.0;
    if (gm != 0.0) slope += a * gm * std::pow(q, gm - 1.0) * std::log(c);
    return {value, clamped ? 0.0 : slope};
  }
  const double value = -(1.0 - a) * std::pow(c, gm) * std::log1p(-c);
  double slope = (1.0 - a) * std::pow(c, gm) / (1.0 - c);
  if (gm != 0.0) slope -= (1.0 - a) * gm * std::pow(c, gm - 1.0) * std::log1p(-c);
  return {value, clamped ? 0.0 : slope};
}

inline std::size_t count_positives(std::span<const AnchorLabel> labels) {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), AnchorLabel::positive));
}

/// Sum of focal terms over labelled anchors, divided by max(1, #positives).
inline double focal_loss_value(std::span<const double> scores, std::span<const AnchorLabel> labels,
                               const LossConfig& cfg = {}) {
  if (scores.size() != labels.size()) throw ShapeError("focal_loss: scores and labels differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += focal_term(scores[i], labels[i], cfg).first;
  return total / static_cast<double>(std::max<std::size_t>(1, count_positives(labels)));
}

/// Focal loss over every element of a score tensor; element i is anchor i.
inline Var focal_loss(Var scores, std::span<const AnchorLabel> labels, const LossConfig& cfg = {}) {
  const Tensor& s = scores.value();
  if (s.numel() != labels.size()) {
    throw ShapeError("focal_loss: " + std::to_string(labels.size()) + " labels for score tensor " + s.shape().str());
  }
  const double norm = static_cast<double>(std::max<std::size_t>(1, count_positives(labels)));
  auto slopes = std::make_shared<std::vector<double>>(labels.size());
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [v, d] = focal_term(s[i], labels[i], cfg);
    total += v;
    (*slopes)[i] = d / norm;
  }
  return scores.graph()->record(Tensor::scalar(total / norm), {scores}, [slopes](const Tensor& gout, GradSlots gin) {
    for (std::size_t i = 0; i < slopes->size(); ++i) (*gin[0])[i] += gout[0] * (*slopes)[i];
  });
}

inline double smooth_l1_value(double x) {
  const double ax = std::abs(x);
  return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

inline double smooth_l1_slope(double x) {
  if (x >= 1.0) return 1.0;
  if (x <= -1.0) return -1.0;
  return x;
}

/// Smooth-L1 between selected elements of `pred` and `targets`, summed and
/// divided by max(1, positives). `indices[k]` picks the element compared with
/// `targets[k]`; only positive anchors' coordinates should be listed.
inline Var smooth_l1(Var pred, std::span<const std::size_t> indices, std::span<const double> targets,
                     std::size_t positives) {
  if (indices.size() != targets.size()) throw ShapeError("smooth_l1: indices and targets differ in length");
  const Tensor& p = pred.value();
  const double norm = static_cast<double>(std::max<std::size_t>(1, positives));
  auto slopes = std::make_shared<std::vector<std::pair<std::size_t, double>>>();
  slopes->reserve(indices.size());
  double total = 0.0;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= p.numel()) throw ShapeError("smooth_l1: index out of range for " + p.shape().str());
    const double x = p[indices[k]] - targets[k];
    total += smooth_l1_value(x);
    slopes->emplace_back(indices[k], smooth_l1_slope(x) / norm);
  }
  return pred.graph()->record(Tensor::scalar(total / norm), {pred}, [slopes](const Tensor& gout, GradSlots gin) {
    for (const auto& [i, d] : *slopes) (*gin[0])[i] += gout[0] * d;
  });
}

/// The five terms of the detection objective.
struct LossTerms {
  double illum = 0.0;
  double cls1 = 0.0;
  double cls2 = 0.0;
  double reg1 = 0.0;
  double reg2 = 0.0;

  [[nodiscard]] double total() const { return illum + cls1 + cls2 + reg1 + reg2; }

  LossTerms& operator+=(const LossTerms& o) {
    illum += o.illum;
    cls1 += o.cls1;
    cls2 += o.cls2;
    reg1 += o.reg1;
    reg2 += o.reg2;
    return *this;
  }
};

inline const std::array<const char*, 5> kLossTermNames = {"L_I", "L_cls1", "L_cls2", "L_reg1", "L_reg2"};

namespace detail {

inline void require_finite_terms(const std::array<double, 5>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string("total_loss: term ") + kLossTermNames[i] + " is not finite");
    }
  }
}

}  // namespace detail

inline double total_loss_value(const LossTerms& t, const LossConfig& cfg = {}) {
  detail::require_finite_terms({t.illum, t.cls1, t.cls2, t.reg1, t.reg2});
  return cfg.weight_illum * t.illum + cfg.weight_cls1 * t.cls1 + cfg.weight_cls2 * t.cls2 +
         cfg.weight_reg1 * t.reg1 + cfg.weight_reg2 * t.reg2;
}

/// Weighted sum L_I + L_cls1 + L_cls2 + L_reg1 + L_reg2. Any term may be an
/// empty Var (treated as absent, e.g. no illumination head).
inline Var total_loss(Var illum, Var cls1, Var cls2, Var reg1, Var reg2, const LossConfig& cfg = {}) {
  const std::array<Var, 5> terms = {illum, cls1, cls2, reg1, reg2};
  const std::array<double, 5> weights = {cfg.weight_illum, cfg.weight_cls1, cfg.weight_cls2, cfg.weight_reg1,
                                         cfg.weight_reg2};
  Graph* g = nullptr;
  std::array<double, 5> values{};
  std::vector<Var> inputs;
  std::vector<double> used_weights;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (!terms[i].valid()) continue;
    if (terms[i].value().numel() != 1) {
      throw ShapeError(std::string("total_loss: term ") + kLossTermNames[i] + " is not scalar");
    }
    g = terms[i].graph();
    values[i] = terms[i].value()[0];
    inputs.push_back(terms[i]);
    used_weights.push_back(weights[i]);
  }
  if (!g) throw std::invalid_argument("total_loss: no terms");
  detail::require_finite_terms(values);
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) total += weights[i] * values[i];
  return g->record(Tensor::scalar(total), inputs, [used_weights](const Tensor& gout, GradSlots gin) {
    for (std::size_t k = 0; k < gin.size(); ++k)
      if (gin[k]) (*gin[k])[0] += gout[0] * used_weights[k];
  });
}

}  // namespace baanet
