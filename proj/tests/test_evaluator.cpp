#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "baanet/evaluator.hpp"
#include "eval_oracle.hpp"

using namespace baanet;
using namespace baanet::test_support;

namespace {

EvalResult run(const std::vector<FixtureImage>& images, const EvalConfig& cfg = {}) {
  std::vector<ImageMatch> m;
  for (const auto& im : images) m.push_back(match_image(im.dets, im.gts, cfg.iou_threshold));
  return mr_fppi_curve(m, cfg);
}

GroundTruth gt(double cx, double cy, double h, OcclusionTag occ = OcclusionTag::none) {
  return {{cx, cy, 0.41 * h, h}, h, occ};
}

}  // namespace

TEST(Evaluator, MatchesBruteForceReference) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const auto images = random_fixture(rng);
    EXPECT_NEAR(run(images).mr2, brute_force_mr2(images, {}), 1e-12) << "trial " << trial;
  }
}

TEST(Evaluator, HandBuiltThreeImageFixture) {
  const BoundingBox a{20, 20, 10, 20}, b{40, 40, 10, 20};
  std::vector<FixtureImage> images(3);
  images[0] = {{{a, 0.9}, {{5, 5, 4, 4}, 0.7}}, {{a, false}}};
  images[1] = {{{{50, 10, 6, 6}, 0.95}, {b, 0.6}}, {{b, false}, {a, false}}};
  images[2] = {{{{30, 30, 8, 8}, 0.5}}, {}};
  const EvalResult r = run(images);
  EXPECT_EQ(r.gt_count, 3u);
  EXPECT_NEAR(r.mr2, brute_force_mr2(images, {}), 1e-12);
  // Curve by hand: thresholds 0.95 .. 0.5 over 3 images and 3 GTs.
  const std::vector<std::pair<double, double>> expect = {
      {0, 1}, {1.0 / 3, 1}, {1.0 / 3, 2.0 / 3}, {2.0 / 3, 2.0 / 3}, {2.0 / 3, 1.0 / 3}, {1, 1.0 / 3}};
  ASSERT_EQ(r.curve.size(), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) {
    EXPECT_NEAR(r.curve[i].fppi, expect[i].first, 1e-15);
    EXPECT_NEAR(r.curve[i].miss_rate, expect[i].second, 1e-15);
  }
}

TEST(Evaluator, PerfectAndEmptyDetectors) {
  std::vector<FixtureImage> images(3);
  for (std::size_t i = 0; i < 3; ++i) {
    const BoundingBox b{10.0 + 10 * i, 20, 8, 20};
    images[i].gts.push_back({b, false});
    images[i].dets.push_back({b, 0.9});
  }
  EXPECT_LE(run(images).mr2, 1e-9);
  for (auto& im : images) im.dets.clear();
  EXPECT_EQ(run(images).mr2, 1.0);
}

TEST(Evaluator, EmptyGroundTruthIsError) {
  const std::vector<FixtureImage> images(2);
  EXPECT_THROW(run(images), std::invalid_argument);
}

TEST(Match, SingleHit) {
  const BoundingBox b{10, 10, 4, 10};
  const ScoredBox d[] = {{b, 0.5}};
  const EvalGt g[] = {{b, false}};
  const ImageMatch m = match_image(d, g, 0.5);
  EXPECT_EQ(m.tp(), 1u);
  EXPECT_EQ(m.fp(), 0u);
  EXPECT_EQ(m.missed(), 0u);
}

TEST(Match, IgnoredGtAbsorbsDetection) {
  const BoundingBox b{10, 10, 4, 10};
  const ScoredBox d[] = {{b, 0.5}};
  const EvalGt g[] = {{b, true}};
  const ImageMatch m = match_image(d, g, 0.5);
  EXPECT_EQ(m.tp(), 0u);
  EXPECT_EQ(m.fp(), 0u);
  EXPECT_EQ(m.gt_count, 0u);
}

TEST(Match, DuplicateDetectionIsFalsePositive) {
  const BoundingBox b{10, 10, 4, 10};
  const ScoredBox d[] = {{{10.2, 10, 4, 10}, 0.8}, {b, 0.9}};
  const EvalGt g[] = {{b, false}};
  const ImageMatch m = match_image(d, g, 0.5);
  EXPECT_EQ(m.tp(), 1u);
  EXPECT_EQ(m.fp(), 1u);
  ASSERT_EQ(m.scores.size(), 2u);
  EXPECT_EQ(m.scores[0], 0.9);
  EXPECT_EQ(m.outcomes[0], MatchOutcome::true_positive);
}

TEST(Match, EqualScoreOrderIndependent) {
  const BoundingBox g0{10, 10, 4, 10};
  const ScoredBox fwd[] = {{g0, 0.7}, {{30, 30, 4, 4}, 0.7}};
  const ScoredBox rev[] = {fwd[1], fwd[0]};
  const EvalGt g[] = {{g0, false}};
  const ImageMatch a = match_image(fwd, g, 0.5), b = match_image(rev, g, 0.5);
  EXPECT_EQ(a.tp(), b.tp());
  EXPECT_EQ(a.fp(), b.fp());
  const ImageMatch ma[] = {a}, mb[] = {b};
  EXPECT_EQ(mr_fppi_curve(ma).mr2, mr_fppi_curve(mb).mr2);
}

TEST(Evaluator, TopFalsePositiveNeverHelps) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto images = random_fixture(rng);
    const double before = run(images).mr2;
    images[0].dets.push_back({{1, 1, 1, 1}, 2.0});
    EXPECT_GE(run(images).mr2, before - 1e-15);
  }
}

TEST(Evaluator, Mr2Bounds) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const double v = run(random_fixture(rng)).mr2;
    EXPECT_GE(v, 1e-10);
    EXPECT_LE(v, 1.0);
  }
}

TEST(SubsetEval, DayNightPartitionAndAbsence) {
  std::vector<EvalImage> images;
  for (int i = 0; i < 6; ++i) {
    EvalImage im;
    im.id = std::to_string(i);
    im.illumination = i % 2 ? Illumination::night : Illumination::day;
    im.gts = {gt(20, 20, 15.0 + i), gt(40, 30, 30.0 + 2 * i, OcclusionTag::partial), gt(40, 40, 10)};
    images.push_back(im);
  }
  const auto res = subset_eval(images);
  const auto count = [&](const std::string& n) { return find_subset(res, n)->result->gt_count; };
  EXPECT_EQ(count("day") + count("night"), count("all"));
  EXPECT_EQ(count("all"), 12u);  // the 10 px boxes fall below the reasonable height
  EXPECT_EQ(count("near") + count("medium") + count("far"), count("all"));
  EXPECT_EQ(count("occ-none") + count("occ-partial"), count("all"));

  for (auto& im : images) im.illumination = Illumination::day;
  const auto day_only = subset_eval(images);
  EXPECT_FALSE(find_subset(day_only, "night")->result.has_value());
  EXPECT_TRUE(find_subset(day_only, "day")->result.has_value());
}

TEST(SubsetEval, ScaleTercilesPartitionRandomHeights) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> h(8, 40);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<EvalImage> images(4);
    std::size_t reasonable = 0;
    for (auto& im : images) {
      for (int k = 0; k < 5; ++k) {
        const double hh = std::round(h(rng));  // rounding creates ties at the cut points
        im.gts.push_back(gt(30, 30, hh));
        reasonable += hh >= 14.0;
      }
    }
    if (reasonable == 0) continue;
    const auto res = subset_eval(images);
    std::size_t sum = 0;
    for (const char* n : {"near", "medium", "far"}) {
      const auto* s = find_subset(res, n);
      if (s->result) sum += s->result->gt_count;
    }
    EXPECT_EQ(sum, reasonable);
  }
}

TEST(EvalCsv, Schema) {
  std::vector<EvalImage> images(1);
  images[0].gts = {gt(20, 20, 20)};
  images[0].detections = {{images[0].gts[0].box, 0.8}};
  const auto res = subset_eval(images);
  std::ostringstream os;
  write_eval_csv(os, res);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "subset,fppi,miss_rate");
  std::size_t rows = 0, summaries = 0;
  while (std::getline(in, line)) {
    if (line.rfind("summary,", 0) == 0) ++summaries;
    else ++rows;
  }
  std::size_t present = 0;
  for (const auto& r : res) present += r.result.has_value();
  EXPECT_EQ(summaries, present);
  EXPECT_EQ(rows, present * 9);
}
