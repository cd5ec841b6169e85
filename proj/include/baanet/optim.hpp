#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "baanet/graph.hpp"
#include "baanet/tensor.hpp"

namespace baanet {

/// Adam optimizer state with bias-corrected moments.
struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

/// Applies one Adam update to every parameter in `params`. Every parameter
/// must have a gradient; a missing one is an error.
inline void adam_step(AdamState& state, ParamStore& params, const ParamGrads& grads) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("adam_step: got " + std::to_string(grads.size()) + " gradient slots for " +
                                std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i]) throw std::invalid_argument("adam_step: missing gradient for parameter '" + params.name(i) + "'");
    if (!(grads[i]->shape() == params.value(i).shape())) {
      throw ShapeError("adam_step: gradient " + grads[i]->shape().str() + " does not match parameter '" +
                       params.name(i) + "' " + params.value(i).shape().str());
    }
  }
  if (state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment.emplace_back(params.value(i).shape(), 0.0);
      state.second_moment.emplace_back(params.value(i).shape(), 0.0);
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.value(i);
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    const Tensor& g = *grads[i];
    for (std::size_t k = 0; k < p.numel(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace baanet
