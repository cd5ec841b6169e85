#include <gtest/gtest.h>

#include "baanet/model.hpp"
#include "baanet/synthdata.hpp"
#include "test_util.hpp"

using namespace baanet;

namespace {

IllumConfig small_illum() {
  IllumConfig c;
  c.resize_hw = 16;
  return c;
}

Sample night_sample(std::uint64_t seed = 3) {
  return render(sample_scene(Illumination::night, NoiseProfile::standard(), SceneDistribution{}, seed));
}

}  // namespace

TEST(Model, OutputGridIsInputOverStride) {
  const BaaNet net(ModelConfig{}, small_illum(), 1);
  const Sample s = night_sample();
  Graph g(&net.params());
  const ModelForward f = net.forward(g, BaaNet::batched(s.rgb), BaaNet::batched(s.tir));
  EXPECT_EQ(f.grid_h, 64u / 8u);
  EXPECT_EQ(f.grid_w, 64u / 8u);
  const std::size_t a = net.config().scales();
  EXPECT_EQ(f.cls1.shape(), (Shape{1, a, 8, 8}));
  EXPECT_EQ(f.reg1.shape(), (Shape{1, 4 * a, 8, 8}));
  EXPECT_EQ(f.cls_r.shape(), (Shape{1, a, 8, 8}));
  EXPECT_EQ(f.reg2.shape(), (Shape{1, 4 * a, 8, 8}));
  EXPECT_EQ(f.backbone.gates.size(), 3u);
  EXPECT_EQ(f.illum.w_r + f.illum.w_t, 1.0);
}

TEST(Model, ZeroGatesAndEvenWeightsFuseToBranchMean) {
  ModelConfig cfg;
  cfg.fusion = FusionMode::baa_gate_no_illum;
  const BaaNet net = BaaNet::with_zero_gates(cfg, small_illum(), 2);
  const Sample s = night_sample();
  Graph g(&net.params());
  const ModelForward f = net.forward(g, BaaNet::batched(s.rgb), BaaNet::batched(s.tir));
  for (const GateOutput& go : f.backbone.gates) {
    for (Var v : {go.w_tc, go.w_rc, go.w_ts, go.w_rs})
      for (double x : v.value().data()) EXPECT_EQ(x, 0.5);
  }
  const Tensor& r = f.backbone.r_final.value();
  const Tensor& t = f.backbone.t_final.value();
  const Tensor& fused = f.backbone.fused.value();
  for (std::size_t i = 0; i < fused.numel(); ++i) EXPECT_NEAR(fused[i], 0.5 * (r[i] + t[i]), 1e-15);
  EXPECT_FALSE(f.illum_probs.valid());
}

TEST(Model, ConcatBaselineHasNoGatesAndDoubleWidth) {
  ModelConfig cfg;
  cfg.fusion = FusionMode::concat_baseline;
  const BaaNet net(cfg, small_illum(), 3);
  EXPECT_TRUE(net.gates().empty());
  EXPECT_FALSE(net.illum_net().has_value());
  const Sample s = night_sample();
  Graph g(&net.params());
  const ModelForward f = net.forward(g, BaaNet::batched(s.rgb), BaaNet::batched(s.tir));
  EXPECT_EQ(f.backbone.fused.shape()[1], 2 * cfg.stage_channels.back());
}

TEST(Model, LossFiniteWithPositives) {
  const BaaNet net(ModelConfig{}, small_illum(), 4);
  const Sample s = night_sample(11);
  Graph g(&net.params());
  const ModelForward f = net.forward(g, BaaNet::batched(s.rgb), BaaNet::batched(s.tir));
  const ModelLoss l = net.loss(f, s.gts, s.illumination);
  EXPECT_TRUE(std::isfinite(l.total.value()[0]));
  EXPECT_GT(l.positives1, 0u);
  EXPECT_GT(l.terms.illum, 0.0);
  EXPECT_NEAR(l.total.value()[0], total_loss_value(l.terms), 1e-12);
}

TEST(Model, DetectRespectsSettings) {
  const BaaNet net(ModelConfig{}, small_illum(), 5);
  const Sample s = night_sample();
  IlluminationWeights w;
  const auto dets = net.detect(s.rgb, s.tir, &w);
  EXPECT_LE(dets.size(), net.config().max_detections);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    EXPECT_GE(dets[i].score, net.config().score_floor);
    EXPECT_LE(dets[i].score, 1.0);
    if (i > 0) {
      EXPECT_GE(dets[i - 1].score, dets[i].score);
    }
    EXPECT_NEAR(dets[i].score, cascade_score(dets[i].c1, dets[i].c_r, dets[i].c_t, w.w_r, w.w_t), 1e-15);
  }
}

TEST(Model, ClassifierBiasEncodesPrior) {
  const BaaNet net(ModelConfig{}, small_illum(), 6);
  const double b = net.params().value("head.cls1_b")[0];
  EXPECT_NEAR(1.0 / (1.0 + std::exp(-b)), 0.01, 1e-12);
}

TEST(Model, RebuildFromParamsChecksNamesAndShapes) {
  const BaaNet net(ModelConfig{}, small_illum(), 7);
  const BaaNet copy(ModelConfig{}, small_illum(), net.params());
  EXPECT_TRUE(copy.params() == net.params());
  ModelConfig other;
  other.stage_channels = {8, 16, 24};
  EXPECT_THROW(BaaNet(other, small_illum(), net.params()), ShapeError);
  ModelConfig concat;
  concat.fusion = FusionMode::concat_baseline;
  EXPECT_THROW(BaaNet(concat, small_illum(), net.params()), std::invalid_argument);
}

TEST(Model, MisalignedPairRejected) {
  const BaaNet net(ModelConfig{}, small_illum(), 8);
  Graph g(&net.params());
  EXPECT_THROW((void)net.forward(g, Tensor(Shape{1, 3, 64, 64}), Tensor(Shape{1, 1, 64, 32})), ShapeError);
}

TEST(Model, FusionModeNames) {
  for (FusionMode m : {FusionMode::baa_gate, FusionMode::baa_gate_no_illum, FusionMode::concat_baseline})
    EXPECT_EQ(fusion_from_string(to_string(m)), m);
  EXPECT_THROW(fusion_from_string("late_fusion"), std::invalid_argument);
}
