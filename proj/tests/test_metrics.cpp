#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixture.hpp"
#include "mvgwhiten/core_stats.hpp"
#include "mvgwhiten/errors.hpp"
#include "mvgwhiten/metrics.hpp"
#include "oracles.hpp"

namespace mvgw {
namespace {

ScoredPixels random_pixels(std::size_t n, std::uint64_t seed, bool with_ties)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.3);
  ScoredPixels px;
  for (std::size_t i = 0; i < n; ++i) {
    const bool positive = coin(rng);
    double s = normal(rng) + (positive ? 0.8 : 0.0);
    if (with_ties) s = std::round(s * 4.0) / 4.0;
    px.scores.push_back(s);
    px.labels.push_back(positive ? 1 : 0);
  }
  return px;
}

ScoreMap make_scores(std::size_t b, std::size_t h, std::size_t w, std::vector<double> values)
{
  ScoreMap s;
  s.batch = b;
  s.height = h;
  s.width = w;
  s.scores = std::move(values);
  return s;
}

PixelLabels make_labels(std::size_t b, std::size_t h, std::size_t w, std::vector<std::uint8_t> masks)
{
  PixelLabels l;
  l.batch = b;
  l.height = h;
  l.width = w;
  l.masks = std::move(masks);
  l.image_ids = default_image_ids(b);
  return l;
}

// One h x w image with a filled rectangle; scores noisy and tie-free.
void rectangle_case(std::size_t h, std::size_t w, std::uint64_t seed, ScoreMap& scores, PixelLabels& labels)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni;
  std::vector<double> s(h * w);
  std::vector<std::uint8_t> m(h * w, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const bool inside = y >= h / 4 && y < h / 2 && x >= w / 3 && x < (2 * w) / 3;
      m[y * w + x] = inside ? 1 : 0;
      s[y * w + x] = uni(rng) + (inside ? 0.4 : 0.0);
    }
  }
  scores = make_scores(1, h, w, std::move(s));
  labels = make_labels(1, h, w, std::move(m));
}

TEST(Auroc, HandExamples)
{
  EXPECT_EQ(auroc({{1, 2, 3, 4}, {0, 0, 1, 1}}), 1.0);
  EXPECT_EQ(auroc({{4, 3, 2, 1}, {0, 0, 1, 1}}), 0.0);
  EXPECT_EQ(auroc({{5, 5, 5, 5}, {0, 1, 0, 1}}), 0.5);
  EXPECT_EQ(auroc({{1, 2, 2, 3}, {0, 0, 1, 1}}), 0.875);
}

TEST(Auroc, MatchesPairCountingOracle)
{
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const ScoredPixels px = random_pixels(200, seed, seed % 2 == 0);
    EXPECT_NEAR(auroc(px), oracle::auroc_pairs(px.scores, px.labels), 1e-12) << "seed " << seed;
  }
}

TEST(Auroc, SingleClassIsUndefined)
{
  EXPECT_THROW(auroc({{1, 2, 3}, {0, 0, 0}}), MetricUndefinedError);
  EXPECT_THROW(auroc({{1, 2, 3}, {1, 1, 1}}), MetricUndefinedError);
  EXPECT_THROW(auroc({{}, {}}), MetricUndefinedError);
}

TEST(Auroc, InvariantUnderIncreasingTransform)
{
  ScoredPixels px = random_pixels(300, 3, false);
  for (auto& s : px.scores) s = std::abs(s) + 0.01;
  ScoredPixels cubed = px;
  for (auto& s : cubed.scores) s = s * s * s;
  EXPECT_EQ(auroc(px), auroc(cubed));
}

TEST(Auroc, NegatedScoresAreComplementary)
{
  const ScoredPixels px = random_pixels(300, 4, false);
  ScoredPixels neg = px;
  for (auto& s : neg.scores) s = -s;
  EXPECT_NEAR(auroc(px) + auroc(neg), 1.0, 1e-12);
}

TEST(Aupr, HandExamples)
{
  EXPECT_EQ(aupr({{1, 2, 3, 4}, {0, 0, 1, 1}}), 1.0);
  EXPECT_DOUBLE_EQ(aupr({{7, 7, 7, 7, 7}, {0, 1, 0, 0, 1}}), 0.4);
  // Descending: 4(+) 3(-) 2(+) 1(-): AP = 0.5 * 1 + 0.5 * 2/3.
  EXPECT_DOUBLE_EQ(aupr({{4, 3, 2, 1}, {1, 0, 1, 0}}), 0.5 + 1.0 / 3.0);
  EXPECT_THROW(aupr({{1, 2}, {0, 0}}), MetricUndefinedError);
}

TEST(Aupr, MatchesThresholdSweepOracle)
{
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const ScoredPixels px = random_pixels(200, 100 + seed, seed % 2 == 1);
    EXPECT_NEAR(aupr(px), oracle::aupr_sweep(px.scores, px.labels), 1e-12) << "seed " << seed;
  }
}

TEST(LabelRegions, EightConnectivity)
{
  // Diagonal neighbours join; the far pixel is its own region.
  const std::vector<std::uint8_t> mask = {
      1, 0, 0, 0,
      0, 1, 0, 1,
      0, 0, 0, 0,
  };
  int count = 0;
  const std::vector<int> labels = label_regions(mask.data(), 3, 4, count);
  EXPECT_EQ(count, 2);
  EXPECT_EQ(labels[0], 0);
  EXPECT_EQ(labels[5], 0);
  EXPECT_EQ(labels[7], 1);
  EXPECT_EQ(labels[1], -1);

  // An anti-diagonal chain is still one region.
  const std::vector<std::uint8_t> chain = {0, 0, 1, 0, 1, 0, 1, 0, 0};
  label_regions(chain.data(), 3, 3, count);
  EXPECT_EQ(count, 1);
}

TEST(Aupro, PerfectAndConstantDetectors)
{
  std::vector<std::uint8_t> mask(64, 0);
  for (std::size_t i : {18u, 19u, 26u, 27u}) mask[i] = 1;
  const PixelLabels labels = make_labels(1, 8, 8, mask);
  std::vector<double> as_mask(mask.begin(), mask.end());
  EXPECT_DOUBLE_EQ(aupro(make_scores(1, 8, 8, as_mask), labels), 1.0);
  EXPECT_DOUBLE_EQ(aupro(make_scores(1, 8, 8, std::vector<double>(64, 2.0)), labels, 1.0), 0.5);
}

TEST(Aupro, Errors)
{
  const PixelLabels none = make_labels(1, 2, 2, {0, 0, 0, 0});
  const ScoreMap s = make_scores(1, 2, 2, {1, 2, 3, 4});
  EXPECT_THROW(aupro(s, none), MetricUndefinedError);
  const PixelLabels some = make_labels(1, 2, 2, {0, 1, 0, 0});
  EXPECT_THROW(aupro(s, some, 0.0), ArgumentError);
  EXPECT_THROW(aupro(s, some, 1.5), ArgumentError);
  EXPECT_NO_THROW(aupro(s, some, 1.0));
}

TEST(Aupro, SingleRegionMatchesExhaustiveSweep)
{
  ScoreMap scores;
  PixelLabels labels;
  rectangle_case(16, 16, 21, scores, labels);
  for (double limit : {0.05, 0.3, 1.0}) {
    EXPECT_NEAR(aupro(scores, labels, limit),
                oracle::aupro_sweep(scores.scores, labels.masks, 1, 16, 16, limit), 1e-10)
        << "limit " << limit;
  }
}

TEST(Aupro, SeveralRegionsAndImagesMatchExhaustiveSweep)
{
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni;
  const std::size_t b = 3;
  const std::size_t h = 12;
  const std::size_t w = 10;
  std::vector<std::uint8_t> masks(b * h * w, 0);
  std::vector<double> s(b * h * w);
  for (std::size_t i = 0; i < masks.size(); ++i) masks[i] = uni(rng) < 0.12 ? 1 : 0;
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::round((uni(rng) + 0.5 * masks[i]) * 64.0) / 64.0;
  const ScoreMap scores = make_scores(b, h, w, s);
  const PixelLabels labels = make_labels(b, h, w, masks);
  for (double limit : {0.1, 0.3, 1.0}) {
    EXPECT_NEAR(aupro(scores, labels, limit), oracle::aupro_sweep(s, masks, b, h, w, limit), 1e-10);
  }
}

TEST(Aupro, QuantileThresholdsStayCloseToExhaustiveSweep)
{
  ScoreMap scores;
  PixelLabels labels;
  rectangle_case(80, 80, 8, scores, labels);  // 6400 distinct scores
  EXPECT_NEAR(aupro(scores, labels), oracle::aupro_sweep(scores.scores, labels.masks, 1, 80, 80, 0.3), 2e-3);
}

TEST(Aupro, SingleRegionAtFullRangeEqualsAuroc)
{
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    ScoreMap scores;
    PixelLabels labels;
    rectangle_case(20, 24, seed, scores, labels);
    const double roc = auroc({scores.scores, labels.masks});
    EXPECT_NEAR(aupro(scores, labels, 1.0), roc, 1e-12);
  }
}

WhitenedStack squares_stack(std::size_t c, std::size_t h, std::size_t w, const std::vector<std::vector<double>>& planes)
{
  WhitenedStack s;
  s.batch = 1;
  s.channels = c;
  s.height = h;
  s.width = w;
  for (const auto& p : planes) s.y_sq.insert(s.y_sq.end(), p.begin(), p.end());
  s.y = s.y_sq;
  return s;
}

TEST(RankComponents, IndicatorBeatsConstant)
{
  const std::vector<std::uint8_t> mask = {0, 1, 1, 0, 0, 0, 0, 0, 0};
  const WhitenedStack s = squares_stack(2, 3, 3, {{0, 1, 1, 0, 0, 0, 0, 0, 0}, std::vector<double>(9, 3.0)});
  const auto ranking = rank_components(s, make_labels(1, 3, 3, mask));
  ASSERT_EQ(ranking.size(), 2u);
  EXPECT_EQ(ranking[0].component, 0u);
  EXPECT_EQ(ranking[0].auroc, 1.0);
  EXPECT_EQ(ranking[1].component, 1u);
  EXPECT_EQ(ranking[1].auroc, 0.5);
}

TEST(RankComponents, TiesKeepAscendingIndex)
{
  const std::vector<double> plane = {0.3, 0.9, 0.1, 0.4};
  const WhitenedStack s = squares_stack(4, 2, 2, {plane, plane, plane, plane});
  const auto ranking = rank_components(s, make_labels(1, 2, 2, {0, 1, 0, 1}));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(ranking[i].component, i);
    EXPECT_EQ(ranking[i].auroc, ranking[0].auroc);
  }
}

TEST(RankComponents, PlantedComponentRanksFirst)
{
  for (std::size_t k : {0u, 3u, 7u}) {
    testing::FixtureSpec spec;
    spec.anomaly_component = k;
    const auto fx = testing::make_fixture(spec);
    const MvgModel model = build_model(fx.train);
    const auto ranking = rank_components(whiten(fx.test, model), fx.test_labels);
    ASSERT_EQ(ranking.size(), 8u);
    EXPECT_EQ(ranking.front().component, k);

    std::vector<bool> seen(8, false);
    for (const auto& r : ranking) seen.at(r.component) = true;
    EXPECT_EQ(std::count(seen.begin(), seen.end(), true), 8);

    const auto again = rank_components(whiten(fx.test, model), fx.test_labels);
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_EQ(again[i].component, ranking[i].component);
      EXPECT_EQ(again[i].auroc, ranking[i].auroc);
    }
  }
}

TEST(Evaluate, PlantedFixtureReportAndJsonRoundTrip)
{
  const auto fx = testing::make_fixture({});
  const MvgModel model = build_model(fx.train);
  const WhitenedStack w = whiten(fx.test, model);
  const ScoreMap scores = score_map(w);
  const MetricsReport report = evaluate(scores, w, fx.test_labels);

  const ScoredPixels px = pair_pixels(upsample_scores(scores, fx.test_labels.height, fx.test_labels.width), fx.test_labels);
  EXPECT_NEAR(report.auroc, oracle::auroc_pairs(px.scores, px.labels), 1e-10);
  EXPECT_GE(report.auroc, 0.99);
  for (double m : {report.auroc, report.aupr, report.aupro}) {
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
  }
  EXPECT_EQ(report.fpr_limit, kDefaultFprLimit);

  const auto doc = report.to_json();
  EXPECT_TRUE(doc.at("per_component_auroc").at(0).is_array());
  const MetricsReport back = MetricsReport::from_json(nlohmann::json::parse(doc.dump()));
  EXPECT_EQ(back.auroc, report.auroc);
  EXPECT_EQ(back.aupro, report.aupro);
  ASSERT_EQ(back.per_component_auroc.size(), report.per_component_auroc.size());
  EXPECT_EQ(back.per_component_auroc[0].component, report.per_component_auroc[0].component);
}

TEST(Evaluate, PerfectDetectorScoresOne)
{
  const std::vector<std::uint8_t> mask = {0, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0};
  const PixelLabels labels = make_labels(1, 4, 4, mask);
  const ScoreMap scores = make_scores(1, 4, 4, std::vector<double>(mask.begin(), mask.end()));
  const WhitenedStack w = squares_stack(1, 4, 4, {scores.scores});
  const MetricsReport r = evaluate(scores, w, labels);
  EXPECT_EQ(r.auroc, 1.0);
  EXPECT_EQ(r.aupr, 1.0);
  EXPECT_DOUBLE_EQ(r.aupro, 1.0);
}

TEST(Evaluate, NullAnomalyIsNearChance)
{
  testing::FixtureSpec spec;
  spec.shift = 0.0;
  const auto fx = testing::make_fixture(spec);
  const WhitenedStack w = whiten(fx.test, build_model(fx.train));
  const MetricsReport r = evaluate(score_map(w), w, fx.test_labels);
  EXPECT_NEAR(r.auroc, 0.5, 0.1);
}

}  // namespace
}  // namespace mvgw
