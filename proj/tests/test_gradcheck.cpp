#include <gtest/gtest.h>

#include "baanet/gradcheck.hpp"
#include "baanet/gradcheck_suite.hpp"
#include "baanet/ops.hpp"

using namespace baanet;

TEST(GradCheck, IdentityOfScalarHasZeroError) {
  ParamStore ps;
  ps.add("p", Tensor::scalar(0.7));
  const auto r = grad_check(ps, [](Graph& g) { return g.param("p"); }, 1e-4);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheck, CorruptedSigmoidBackwardIsCaught) {
  ParamStore ps;
  ps.add("x", Tensor(Shape{4}, std::vector<double>{-1.0, -0.2, 0.3, 1.5}));
  auto bad_sigmoid = [](Var x) {
    Tensor y = x.value();
    for (double& v : y.data()) v = detail::sigmoid(v);
    return x.graph()->record(y, {x}, [y](const Tensor& gout, GradSlots gin) {
      for (std::size_t i = 0; i < y.numel(); ++i) (*gin[0])[i] += 2.0 * gout[i] * y[i] * (1.0 - y[i]);
    });
  };
  const auto r = grad_check(ps, [&](Graph& g) { return sum(bad_sigmoid(g.param("x"))); }, 1e-4);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_rel_error, 0.4);
}

TEST(GradCheck, NonScalarLossRejected) {
  ParamStore ps;
  ps.add("x", Tensor(Shape{3}));
  EXPECT_THROW((void)grad_check(ps, [](Graph& g) { return g.param("x"); }, 1e-4), ShapeError);
}

TEST(GradCheck, LargeTensorsAreSubsampled) {
  ParamStore ps;
  ps.add("x", Tensor(Shape{20000}, 0.5));
  GradCheckOptions opts;
  opts.subsample_size = 50;
  const auto r = grad_check(ps, [](Graph& g) { return sum(baanet::sigmoid(g.param("x"))); }, 1e-4, opts);
  EXPECT_EQ(r.entries.at(0).checked, 50u);
  EXPECT_TRUE(r.passed);
}

TEST(GradCheckSuite, OpsPass) {
  for (const auto& c : gradcheck_ops(1e-4)) EXPECT_TRUE(c.report.passed) << c.name << " " << c.report.max_rel_error;
}

TEST(GradCheckSuite, GateForwardWithFocalLossPasses) {
  for (const auto& c : gradcheck_gate(1e-4)) EXPECT_TRUE(c.report.passed) << c.report.max_rel_error;
}

TEST(GradCheckSuite, IlluminationNetPasses) {
  for (const auto& c : gradcheck_illum(1e-4)) EXPECT_TRUE(c.report.passed) << c.report.max_rel_error;
}

TEST(GradCheckSuite, FullModelPasses) {
  for (const auto& c : gradcheck_model(1e-4)) EXPECT_TRUE(c.report.passed) << c.report.max_rel_error;
}

TEST(GradCheckSuite, ZeroToleranceFails) {
  bool any_failed = false;
  for (const auto& c : gradcheck_gate(0.0)) any_failed = any_failed || !c.report.passed;
  EXPECT_TRUE(any_failed);
}

TEST(GradCheckSuite, UnknownModuleRejected) { EXPECT_THROW((void)run_gradcheck("nope", 1e-4), std::invalid_argument); }
