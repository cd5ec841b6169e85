#include <gtest/gtest.h>

#include <cmath>

#include "baanet/graph.hpp"
#include "baanet/ops.hpp"
#include "baanet/tensor.hpp"
#include "test_util.hpp"

using namespace baanet;

TEST(Shape, NumelAndRankLimits) {
  EXPECT_EQ((Shape{2, 3, 4, 5}).numel(), 120u);
  EXPECT_EQ((Shape{7}).rank(), 1u);
  EXPECT_THROW((Shape{2, 0}), ShapeError);
  EXPECT_THROW((Shape{1, 1, 1, 1, 1}), ShapeError);
}

TEST(Tensor, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor t(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
  EXPECT_EQ(t.numel(), t.shape().numel());
}

TEST(Tensor, XavierBound) {
  std::mt19937_64 rng(3);
  const Tensor w = xavier_uniform(Shape{16, 8}, 8, 16, rng);
  const double bound = std::sqrt(6.0 / 24.0);
  for (double v : w.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Tensor, DeriveSeedSeparatesStreams) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(9, 4), derive_seed(9, 4));
}

TEST(Graph, TapeIsTopological) {
  ParamStore ps;
  ps.add("w", Tensor(Shape{2}, 1.0));
  Graph g(&ps);
  Var a = g.param("w");
  Var b = sigmoid(a);
  Var c = add(b, a);
  EXPECT_LT(a.id(), b.id());
  EXPECT_LT(b.id(), c.id());
  EXPECT_EQ(g.param("w").id(), a.id());
}

TEST(Graph, ReachableParamsGetGradOfSameShape) {
  ParamStore ps;
  ps.add("x", test_support::random_tensor(Shape{1, 2, 3, 3}, 1));
  ps.add("unused", Tensor(Shape{4}));
  ps.add("w", test_support::random_tensor(Shape{3, 2, 3, 3}, 2));
  ps.add("b", Tensor(Shape{3}));
  Graph g(&ps);
  g.param("unused");
  Var y = sum(relu(conv2d(g.param("x"), g.param("w"), g.param("b"), 1, 1)));
  g.backward(y);
  const ParamGrads grads = g.param_grads();
  ASSERT_EQ(grads.size(), ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ASSERT_TRUE(grads[i].has_value()) << ps.name(i);
    EXPECT_EQ(grads[i]->shape(), ps.value(i).shape());
  }
  for (double v : grads[1]->data()) EXPECT_EQ(v, 0.0);
}

TEST(Graph, BackwardNeedsScalarLoss) {
  Graph g;
  Var x = g.variable(Tensor(Shape{3}, 1.0));
  EXPECT_THROW(g.backward(x), ShapeError);
}
