#include <gtest/gtest.h>

#include "baanet/config.hpp"

using namespace baanet;

TEST(RunConfig, DefaultsFollowTrainingRecipe) {
  const RunConfig c;
  EXPECT_EQ(c.epochs, 8u);
  EXPECT_EQ(c.batch_size, 8u);
  EXPECT_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.model.fusion, FusionMode::baa_gate);
  EXPECT_EQ(c.loss.alpha, 0.25);
  EXPECT_EQ(c.loss.gamma, 2.0);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig c;
  c.epochs = 3;
  c.learning_rate = 2.5e-3;
  c.seed = 99;
  c.model.fusion = FusionMode::concat_baseline;
  c.model.stage_channels = {4, 8};
  c.illum.k2 = 2.0;
  c.eval.allowed_occlusion = {OcclusionTag::none};
  const RunConfig back = parse_config_text(to_json(c).dump());
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.model.stage_channels, c.model.stage_channels);
  EXPECT_EQ(back.eval.allowed_occlusion, c.eval.allowed_occlusion);
}

TEST(RunConfig, PartialConfigOverridesOnlyItsKeys) {
  const RunConfig c = parse_config_text(R"({"train.epochs": 2, "model.fusion": "baa_gate_no_illum"})");
  EXPECT_EQ(c.epochs, 2u);
  EXPECT_EQ(c.model.fusion, FusionMode::baa_gate_no_illum);
  EXPECT_EQ(c.batch_size, 8u);
}

TEST(RunConfig, RejectsBadInput) {
  EXPECT_THROW(parse_config_text(R"({"train.epoch": 2})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"train.epochs": "two"})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"model.fusion": "late"})"), ConfigError);
  EXPECT_THROW(parse_config_text("[1, 2]"), ConfigError);
  EXPECT_THROW(parse_config_text("{"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"train.epochs": 0})").validate(), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"loss.alpha": 1.5})").validate(), ConfigError);
}

TEST(RunConfig, UnknownKeyNamed) {
  try {
    (void)parse_config_text(R"({"model.dropout": 0.1})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.dropout"), std::string::npos);
  }
}
