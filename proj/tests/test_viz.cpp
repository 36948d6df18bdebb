#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "fixture.hpp"
#include "mvgwhiten/core_stats.hpp"
#include "mvgwhiten/errors.hpp"
#include "mvgwhiten/image.hpp"
#include "mvgwhiten/viz.hpp"
#include "oracles.hpp"

namespace mvgw::viz {
namespace {

std::vector<double> one_to(std::size_t n)
{
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), 1.0);
  return v;
}

Grid grid(std::size_t h, std::size_t w, std::vector<double> values) { return {h, w, std::move(values)}; }

TEST(InfernoLut, EndpointsMatchPublishedTable)
{
  const auto& lut = inferno_lut();
  EXPECT_EQ(lut[0], (Rgb{0, 0, 4}));
  EXPECT_EQ(lut[255], (Rgb{252, 255, 164}));
  // Luminance climbs almost monotonically along inferno.
  EXPECT_LT(lut[64].r + lut[64].g + lut[64].b, lut[192].r + lut[192].g + lut[192].b);
}

TEST(Percentile, TypeSevenExamples)
{
  const auto v = one_to(100);
  EXPECT_NEAR(percentile(v, 99.0), 99.01, 1e-12);
  EXPECT_EQ(percentile(v, 100.0), 100.0);
  EXPECT_EQ(percentile(std::vector<double>{2.5, 2.5, 2.5}, 99.0), 2.5);
}

TEST(Percentile, MatchesSortedOracle)
{
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> expo;
  for (std::size_t n : {1u, 2u, 17u, 1000u, 4099u}) {
    std::vector<double> v(n);
    for (auto& x : v) x = expo(rng);
    for (double p : {0.5, 50.0, 90.0, 99.0, 99.9, 100.0}) {
      EXPECT_EQ(percentile(v, p), oracle::percentile_sorted(v, p)) << n << " " << p;
    }
  }
}

TEST(ColorScale, ExamplesAndErrors)
{
  const auto v = one_to(100);
  const ColorScale s = color_scale(v, ScaleStrategy::kPerComponent, 99.0, Split::kTest);
  EXPECT_EQ(s.vmin, 0.0);
  EXPECT_NEAR(s.vmax, 99.01, 1e-12);
  EXPECT_EQ(s.split, Split::kTest);
  EXPECT_EQ(color_scale(std::vector<double>(5, 3.25), ScaleStrategy::kScoreMap, 99.0, Split::kTrain).vmax, 3.25);

  EXPECT_THROW(color_scale(std::vector<double>{}, ScaleStrategy::kScoreMap, 99.0, Split::kTrain), ArgumentError);
  EXPECT_THROW(color_scale(std::vector<double>(4, 0.0), ScaleStrategy::kScoreMap, 99.0, Split::kTrain),
               DegenerateScaleError);
}

TEST(ColorScale, PooledScaleCoversSmallComponent)
{
  std::vector<double> small = one_to(50);
  std::vector<double> large = one_to(50);
  for (auto& x : small) x *= 0.1;  // max 5
  const ColorScale own = color_scale(small, ScaleStrategy::kPerComponent, 99.0, Split::kTrain);
  const ColorScale pooled = color_scale({std::span<const double>(small), std::span<const double>(large)},
                                        ScaleStrategy::kCrossComponent, 99.0, Split::kTrain);
  EXPECT_GE(pooled.vmax, own.vmax);
}

TEST(ColorScale, StackScalesUseTheirComponentsExactly)
{
  const auto fx = testing::make_fixture({});
  const WhitenedStack w = whiten(fx.test, build_model(fx.train));
  const auto scales = per_component_scales(w, 99.0);
  ASSERT_EQ(scales.size(), w.channels);
  std::vector<double> all;
  for (std::size_t c = 0; c < w.channels; ++c) {
    std::vector<double> values;
    for (std::size_t b = 0; b < w.batch; ++b) {
      const double* p = w.sq_plane(b, c);
      values.insert(values.end(), p, p + w.height * w.width);
    }
    EXPECT_EQ(scales[c].vmax, oracle::percentile_sorted(values, 99.0));
    EXPECT_EQ(scales[c].strategy, ScaleStrategy::kPerComponent);
    all.insert(all.end(), values.begin(), values.end());
  }
  EXPECT_EQ(cross_component_scale(w, 99.0).vmax, oracle::percentile_sorted(all, 99.0));
}

TEST(Bilinear, ConstantAndIdentity)
{
  const Grid constant = upsample_bilinear(grid(3, 5, std::vector<double>(15, 1.75)), 11, 7);
  for (double v : constant.values) EXPECT_EQ(v, 1.75);

  std::vector<double> values(12);
  std::iota(values.begin(), values.end(), -3.0);
  EXPECT_EQ(upsample_bilinear(grid(3, 4, values), 3, 4).values, values);
}

TEST(Bilinear, MatchesHalfPixelOracle)
{
  const std::vector<double> checker = {0, 1, 1, 0};
  const Grid up = upsample_bilinear(grid(2, 2, checker), 4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      EXPECT_NEAR(up.values[i * 4 + j], oracle::bilinear_sample(checker, 2, 2, 4, 4, i, j), 1e-12);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> uni(-2.0, 5.0);
  std::vector<double> src(7 * 5);
  for (auto& x : src) x = uni(rng);
  const Grid big = upsample_bilinear(grid(7, 5, src), 29, 64);
  const auto [lo, hi] = std::minmax_element(src.begin(), src.end());
  for (std::size_t i = 0; i < 29; ++i) {
    for (std::size_t j = 0; j < 64; ++j) {
      const double v = big.values[i * 64 + j];
      EXPECT_NEAR(v, oracle::bilinear_sample(src, 7, 5, 29, 64, i, j), 1e-12);
      EXPECT_GE(v, *lo);
      EXPECT_LE(v, *hi);
    }
  }
}

TEST(Colormap, NearestIndexLookup)
{
  ColorScale scale;
  scale.vmax = 8.0;
  const RgbImage img = apply_colormap(grid(1, 5, {0.0, 8.0, 100.0, 4.0, -1.0}), scale);
  const auto& lut = inferno_lut();
  EXPECT_EQ(img.at(0, 0), lut[0]);
  EXPECT_EQ(img.at(0, 1), lut[255]);
  EXPECT_EQ(img.at(0, 2), lut[255]);
  EXPECT_EQ(img.at(0, 3), lut[128]);
  EXPECT_EQ(img.at(0, 4), lut[0]);

  ColorScale zero;
  zero.vmax = 0.0;
  EXPECT_THROW(apply_colormap(grid(1, 1, {1.0}), zero), DegenerateScaleError);
}

TEST(AlphaBlend, ExamplesAndSymmetry)
{
  const RgbImage base(2, 3, {100, 100, 100});
  const RgbImage heat(2, 3, {200, 0, 50});
  EXPECT_EQ(alpha_blend(base, heat, 0.5).at(1, 2), (Rgb{150, 50, 75}));
  EXPECT_EQ(alpha_blend(base, heat, 0.0).pixels, base.pixels);
  EXPECT_EQ(alpha_blend(base, heat, 1.0).pixels, heat.pixels);
  EXPECT_THROW(alpha_blend(base, RgbImage(3, 2), 0.5), ShapeError);

  std::mt19937 rng(1);
  RgbImage a(4, 4);
  RgbImage b(4, 4);
  for (auto& p : a.pixels) p = static_cast<std::uint8_t>(rng());
  for (auto& p : b.pixels) p = static_cast<std::uint8_t>(rng());
  EXPECT_EQ(alpha_blend(a, b, 0.5).pixels, alpha_blend(b, a, 0.5).pixels);
}

TEST(RenderPage, ZeroHeatmapTileIsHalfBlendWithDarkestColor)
{
  RenderSpec spec;
  spec.target_height = 16;
  spec.target_width = 16;
  RgbImage base(16, 16);
  for (std::size_t i = 0; i < base.pixels.size(); ++i) base.pixels[i] = static_cast<std::uint8_t>(i % 251);
  PageRow row{0, "0", base, {{std::nullopt, grid(4, 4, std::vector<double>(16, 0.0)), ColorScale{}}}};
  const FigurePage page = render_page({row}, spec, "layer1", "synthetic", "test score", "");
  ASSERT_EQ(page.rows.size(), 1u);
  ASSERT_EQ(page.rows[0].size(), 1u);
  const RgbImage expected = alpha_blend(base, RgbImage(16, 16, inferno_lut()[0]), 0.5);
  EXPECT_EQ(page.rows[0][0].pixels.pixels, expected.pixels);
}

TEST(RenderPage, GridLayoutAndDeterministicBytes)
{
  const auto fx = testing::make_fixture({});
  const WhitenedStack w = whiten(fx.test, build_model(fx.train));
  const auto scales = per_component_scales(w, 99.0);
  RenderSpec spec;
  spec.target_height = 40;
  spec.target_width = 48;

  std::vector<PageRow> rows;
  for (std::size_t b = 0; b < 3; ++b) {
    PageRow row{b, w.image_ids[b], RgbImage(64, 64, {128, 128, 128}), {}};
    for (std::size_t c = 0; c < 3; ++c) {
      const double* p = w.sq_plane(b, c);
      row.tiles.push_back({c, grid(w.height, w.width, std::vector<double>(p, p + w.height * w.width)), scales[c]});
    }
    rows.push_back(row);
  }
  const FigurePage page = render_page(rows, spec, "layer1", "synthetic", "test per_component", "AUROC=0.9");
  const RgbImage canvas = compose(page);
  EXPECT_EQ(canvas.height, kHeaderHeight + 3 * (kCaptionHeight + 40));
  EXPECT_EQ(canvas.width, 3u * 48u);
  EXPECT_EQ(page.rows[1][2].caption().rfind("img 1  comp 2", 0), 0u);

  const auto dir = testing::scratch_dir("viz_page");
  write_png(dir / "a.png", compose(render_page(rows, spec, "layer1", "synthetic", "t", "m")));
  write_png(dir / "b.png", compose(render_page(rows, spec, "layer1", "synthetic", "t", "m")));
  std::ifstream a(dir / "a.png", std::ios::binary);
  std::ifstream b(dir / "b.png", std::ios::binary);
  const std::string bytes_a{std::istreambuf_iterator<char>(a), std::istreambuf_iterator<char>()};
  const std::string bytes_b{std::istreambuf_iterator<char>(b), std::istreambuf_iterator<char>()};
  EXPECT_FALSE(bytes_a.empty());
  EXPECT_EQ(bytes_a, bytes_b);
  EXPECT_EQ(read_png_rgb(dir / "a.png").pixels, compose(render_page(rows, spec, "layer1", "synthetic", "t", "m")).pixels);
}

TEST(VizProperties, SaturatedFractionBoundedByPercentile)
{
  const auto fx = testing::make_fixture({});
  const WhitenedStack w = whiten(fx.train, build_model(fx.train));
  const auto scales = per_component_scales(w, 99.0);
  for (std::size_t c = 0; c < w.channels; ++c) {
    std::size_t saturated = 0;
    for (std::size_t b = 0; b < w.batch; ++b) {
      const RgbImage img = apply_colormap(
          grid(w.height, w.width, std::vector<double>(w.sq_plane(b, c), w.sq_plane(b, c) + w.height * w.width)), scales[c]);
      for (std::size_t p = 0; p < w.height * w.width; ++p) saturated += img.at(p / w.width, p % w.width) == inferno_lut()[255];
    }
    // Index 255 also covers values a half step below vmax.
    const double fraction = static_cast<double>(saturated) / static_cast<double>(w.batch * w.height * w.width);
    EXPECT_LE(fraction, 0.01 + 0.005) << "component " << c;
  }
}

TEST(VizProperties, StrategyNamesRoundTrip)
{
  for (auto s : {ScaleStrategy::kPerComponent, ScaleStrategy::kCrossComponent, ScaleStrategy::kScoreMap}) {
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  }
  EXPECT_THROW(parse_strategy("log"), ConfigError);
}

}  // namespace
}  // namespace mvgw::viz
