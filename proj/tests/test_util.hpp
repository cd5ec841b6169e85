#pragma once

#include <random>

#include "baanet/graph.hpp"
#include "baanet/tensor.hpp"

namespace baanet::test_support {

inline Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  std::mt19937_64 rng(seed);
  return Tensor::uniform(s, lo, hi, rng);
}

/// Evaluates a unary graph function on a constant input.
template <typename F>
Tensor eval1(const Tensor& x, F f) {
  Graph g;
  return f(g.input(x)).value();
}

}  // namespace baanet::test_support
