#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "baanet/graph.hpp"
#include "baanet/tensor.hpp"

namespace baanet {

struct GradCheckOptions {
  double step = 1e-5;
  /// Parameters with more elements than this are checked on a random subsample.
  std::size_t full_check_limit = 10000;
  std::size_t subsample_size = 1000;
  std::uint64_t seed = 0x5eed;
  /// Denominator floor of the relative error, so exactly-zero gradients compare absolutely.
  double denominator_floor = 1e-6;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;

  [[nodiscard]] const GradCheckEntry* worst() const {
    if (entries.empty()) return nullptr;
    return &*std::max_element(entries.begin(), entries.end(),
                              [](const auto& a, const auto& b) { return a.max_rel_error < b.max_rel_error; });
  }
};

/// Relative error |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares reverse-mode gradients of a scalar loss against central finite
/// differences for every parameter in `params`. `build_loss` must rebuild
/// the loss from the current parameter values each time it is called.
inline GradCheckReport grad_check(ParamStore& params, const std::function<Var(Graph&)>& build_loss,
                                  double tolerance, const GradCheckOptions& opts = {}) {
  ParamGrads analytic;
  {
    Graph g(&params);
    Var loss = build_loss(g);
    if (loss.value().numel() != 1) {
      throw ShapeError("grad_check: loss must be scalar, got " + loss.shape().str());
    }
    g.backward(loss);
    analytic = g.param_grads();
  }
  auto eval = [&] {
    Graph g(&params);
    return build_loss(g).value()[0];
  };

  GradCheckReport report;
  report.tolerance = tolerance;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.value(i);
    const std::size_t count = p.numel();
    Tensor zero_grad(p.shape(), 0.0);
    const Tensor& a = analytic[i] ? *analytic[i] : zero_grad;

    std::vector<std::size_t> indices(count);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (count > opts.full_check_limit) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(opts.subsample_size);
      std::sort(indices.begin(), indices.end());
    }

    GradCheckEntry entry;
    entry.name = params.name(i);
    for (std::size_t k : indices) {
      const double saved = p[k];
      p[k] = saved + opts.step;
      const double plus = eval();
      p[k] = saved - opts.step;
      const double minus = eval();
      p[k] = saved;
      const double numeric = (plus - minus) / (2.0 * opts.step);
      const double err = relative_error(a[k], numeric, opts.denominator_floor);
      if (entry.checked == 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = k;
        entry.analytic = a[k];
        entry.numeric = numeric;
      }
      ++entry.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace baanet
