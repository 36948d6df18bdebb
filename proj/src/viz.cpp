#include "mvgwhiten/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "font_data.hpp"
#include "mvgwhiten/errors.hpp"
#include "mvgwhiten/parallel.hpp"

namespace mvgw::viz {
namespace {

std::uint8_t saturate(double v)
{
  return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
}

void check_percentile(double p)
{
  if (!(p > 0.0 && p <= 100.0)) throw ArgumentError("percentile must lie in (0, 100]");
}

double percentile_in_place(std::vector<double>& values, double p)
{
  if (values.empty()) throw ArgumentError("cannot take a percentile of no values");
  check_percentile(p);
  for (double v : values) {
    if (!std::isfinite(v)) throw ArgumentError("percentile input contains NaN or Inf");
  }
  const double rank = static_cast<double>(values.size() - 1) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double a = values[lo];
  const double b = hi == lo ? a : *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(hi), values.end());
  const double t = rank - static_cast<double>(lo);
  // Same lerp as numpy's "linear" method, including its t >= 0.5 branch.
  return t >= 0.5 ? b - (b - a) * (1.0 - t) : a + (b - a) * t;
}

ColorScale finish_scale(double vmax, ScaleStrategy strategy, double pct, Split split)
{
  if (!(vmax > 0.0)) {
    throw DegenerateScaleError("color scale maximum is " + std::to_string(vmax) + " (" + to_string(strategy) +
                               " scale on " + to_string(split) + ")");
  }
  return ColorScale{0.0, vmax, strategy, pct, split};
}

}  // namespace

std::string to_string(ScaleStrategy strategy)
{
  switch (strategy) {
    case ScaleStrategy::kPerComponent:
      return "per_component";
    case ScaleStrategy::kCrossComponent:
      return "cross_component";
    case ScaleStrategy::kScoreMap:
      return "score_map";
  }
  return "unknown";
}

ScaleStrategy parse_strategy(const std::string& text)
{
  if (text == "per_component") return ScaleStrategy::kPerComponent;
  if (text == "cross_component") return ScaleStrategy::kCrossComponent;
  if (text == "score_map") return ScaleStrategy::kScoreMap;
  throw ConfigError("unknown scale strategy '" + text + "'");
}

double percentile(std::span<const double> values, double p)
{
  std::vector<double> copy(values.begin(), values.end());
  return percentile_in_place(copy, p);
}

ColorScale color_scale(std::span<const double> values, ScaleStrategy strategy, double pct, Split split)
{
  return finish_scale(percentile(values, pct), strategy, pct, split);
}

ColorScale color_scale(const std::vector<std::span<const double>>& collection, ScaleStrategy strategy, double pct,
                       Split split)
{
  std::vector<double> pooled;
  std::size_t total = 0;
  for (const auto& part : collection) total += part.size();
  pooled.reserve(total);
  for (const auto& part : collection) pooled.insert(pooled.end(), part.begin(), part.end());
  return finish_scale(percentile_in_place(pooled, pct), strategy, pct, split);
}

std::vector<double> component_values(const WhitenedStack& whitened, std::size_t component)
{
  const std::size_t hw = whitened.height * whitened.width;
  std::vector<double> values;
  values.reserve(whitened.batch * hw);
  for (std::size_t b = 0; b < whitened.batch; ++b) {
    const double* plane = whitened.sq_plane(b, component);
    values.insert(values.end(), plane, plane + hw);
  }
  return values;
}

std::vector<ColorScale> per_component_scales(const WhitenedStack& whitened, double pct)
{
  std::vector<ColorScale> scales(whitened.channels);
  parallel_for(whitened.channels, [&](std::size_t c) {
    auto values = component_values(whitened, c);
    scales[c] = finish_scale(percentile_in_place(values, pct), ScaleStrategy::kPerComponent, pct, whitened.split);
  });
  return scales;
}

ColorScale cross_component_scale(const WhitenedStack& whitened, double pct)
{
  return color_scale(std::span<const double>(whitened.y_sq), ScaleStrategy::kCrossComponent, pct, whitened.split);
}

ColorScale score_map_scale(const ScoreMap& scores, double pct)
{
  // ScoreMap carries no split; callers overwrite it.
  return color_scale(std::span<const double>(scores.scores), ScaleStrategy::kScoreMap, pct, Split::kTrain);
}

void upsample_bilinear(const double* source, std::size_t height, std::size_t width, double* target,
                       std::size_t target_height, std::size_t target_width)
{
  const double scale_y = static_cast<double>(height) / static_cast<double>(target_height);
  const double scale_x = static_cast<double>(width) / static_cast<double>(target_width);
  std::vector<std::size_t> x0(target_width);
  std::vector<std::size_t> x1(target_width);
  std::vector<double> ax(target_width);
  for (std::size_t j = 0; j < target_width; ++j) {
    const double sx = std::clamp((static_cast<double>(j) + 0.5) * scale_x - 0.5, 0.0, static_cast<double>(width - 1));
    x0[j] = static_cast<std::size_t>(std::floor(sx));
    x1[j] = std::min(x0[j] + 1, width - 1);
    ax[j] = sx - static_cast<double>(x0[j]);
  }
  for (std::size_t i = 0; i < target_height; ++i) {
    const double sy = std::clamp((static_cast<double>(i) + 0.5) * scale_y - 0.5, 0.0, static_cast<double>(height - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, height - 1);
    const double ay = sy - static_cast<double>(y0);
    const double* top = source + y0 * width;
    const double* bottom = source + y1 * width;
    double* out = target + i * target_width;
    for (std::size_t j = 0; j < target_width; ++j) {
      const double upper = top[x0[j]] + (top[x1[j]] - top[x0[j]]) * ax[j];
      const double lower = bottom[x0[j]] + (bottom[x1[j]] - bottom[x0[j]]) * ax[j];
      out[j] = upper + (lower - upper) * ay;
    }
  }
}

Grid upsample_bilinear(const Grid& map, std::size_t target_height, std::size_t target_width)
{
  if (map.height == 0 || map.width == 0 || map.values.size() != map.height * map.width) {
    throw ShapeError("cannot resample an empty or inconsistent map");
  }
  Grid out{target_height, target_width, std::vector<double>(target_height * target_width)};
  upsample_bilinear(map.values.data(), map.height, map.width, out.values.data(), target_height, target_width);
  return out;
}

RgbImage resize_rgb(const RgbImage& image, std::size_t target_height, std::size_t target_width)
{
  if (image.height == target_height && image.width == target_width) return image;
  RgbImage out(target_height, target_width);
  Grid channel{image.height, image.width, std::vector<double>(image.height * image.width)};
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t p = 0; p < image.height * image.width; ++p) channel.values[p] = image.pixels[3 * p + k];
    const Grid resized = upsample_bilinear(channel, target_height, target_width);
    for (std::size_t p = 0; p < resized.values.size(); ++p) out.pixels[3 * p + k] = saturate(resized.values[p]);
  }
  return out;
}

RgbImage apply_colormap(const Grid& map, const ColorScale& scale, const std::array<Rgb, 256>& lut)
{
  if (!(scale.vmax > scale.vmin)) throw DegenerateScaleError("color scale has an empty range");
  RgbImage out(map.height, map.width);
  for (std::size_t p = 0; p < map.values.size(); ++p) {
    const double v = map.values[p];
    if (!std::isfinite(v)) throw DataError("heatmap contains NaN or Inf");
    const double t = std::clamp((v - scale.vmin) / (scale.vmax - scale.vmin), 0.0, 1.0);
    const Rgb c = lut[static_cast<std::size_t>(std::lround(t * 255.0))];
    out.pixels[3 * p] = c.r;
    out.pixels[3 * p + 1] = c.g;
    out.pixels[3 * p + 2] = c.b;
  }
  return out;
}

RgbImage alpha_blend(const RgbImage& base, const RgbImage& heat, double alpha)
{
  if (base.height != heat.height || base.width != heat.width) throw ShapeError("cannot blend images of different sizes");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in [0, 1]");
  RgbImage out(base.height, base.width);
  for (std::size_t i = 0; i < base.pixels.size(); ++i) {
    out.pixels[i] = saturate((1.0 - alpha) * base.pixels[i] + alpha * heat.pixels[i]);
  }
  return out;
}

RgbImage render_tile(const Grid& heat, const RgbImage& base, const ColorScale& scale, const RenderSpec& spec)
{
  const Grid up = upsample_bilinear(heat, spec.target_height, spec.target_width);
  const RgbImage colored = apply_colormap(up, scale, spec.colormap);
  return alpha_blend(resize_rgb(base, spec.target_height, spec.target_width), colored, spec.alpha);
}

std::string Tile::caption() const
{
  char buffer[96];
  if (component) {
    std::snprintf(buffer, sizeof buffer, "img %zu  comp %zu  max %.4g", image_index, *component, scale.vmax);
  } else {
    std::snprintf(buffer, sizeof buffer, "img %zu  score  max %.4g", image_index, scale.vmax);
  }
  return buffer;
}

FigurePage render_page(const std::vector<PageRow>& rows, const RenderSpec& spec, std::string layer_name,
                       std::string category, std::string title, std::string metrics_line)
{
  FigurePage page;
  page.layer_name = std::move(layer_name);
  page.category = std::move(category);
  page.title = std::move(title);
  page.metrics_line = std::move(metrics_line);
  page.rows.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) page.rows[r].resize(rows[r].tiles.size());

  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < rows[r].tiles.size(); ++k) jobs.emplace_back(r, k);
  }
  std::vector<RgbImage> bases(rows.size());
  parallel_for(rows.size(), [&](std::size_t r) {
    bases[r] = resize_rgb(rows[r].base, spec.target_height, spec.target_width);
  });
  parallel_for(jobs.size(), [&](std::size_t j) {
    const auto [r, k] = jobs[j];
    const TileSource& source = rows[r].tiles[k];
    Tile& tile = page.rows[r][k];
    tile.image_index = rows[r].image_index;
    tile.image_id = rows[r].image_id;
    tile.component = source.component;
    tile.scale = source.scale;
    tile.pixels = render_tile(source.heat, bases[r], source.scale, spec);
  });
  return page;
}

void draw_text(RgbImage& image, std::size_t top, std::size_t left, const std::string& text, Rgb color)
{
  using detail::kGlyphHeight;
  using detail::kGlyphWidth;
  for (std::size_t n = 0; n < text.size(); ++n) {
    const auto ch = static_cast<unsigned char>(text[n]);
    const std::size_t glyph = (ch >= 0x20 && ch <= 0x7e) ? ch - 0x20 : '?' - 0x20;
    const std::size_t x0 = left + n * kGlyphWidth;
    if (x0 + kGlyphWidth > image.width) break;
    for (std::size_t gy = 0; gy < kGlyphHeight && top + gy < image.height; ++gy) {
      const std::uint8_t bits = detail::kGlyphs[glyph][gy];
      for (std::size_t gx = 0; gx < kGlyphWidth; ++gx) {
        if (bits & (1u << (kGlyphWidth - 1 - gx))) image.set(top + gy, x0 + gx, color);
      }
    }
  }
}

RgbImage compose(const FigurePage& page)
{
  std::size_t columns = 0;
  std::size_t tile_h = 0;
  std::size_t tile_w = 0;
  for (const auto& row : page.rows) {
    columns = std::max(columns, row.size());
    for (const auto& tile : row) {
      if (tile_h == 0) {
        tile_h = tile.pixels.height;
        tile_w = tile.pixels.width;
      } else if (tile.pixels.height != tile_h || tile.pixels.width != tile_w) {
        throw ShapeError("all tiles of a page must share one size");
      }
    }
  }
  const std::size_t cell_h = kCaptionHeight + tile_h;
  RgbImage canvas(kHeaderHeight + page.rows.size() * cell_h, std::max<std::size_t>(columns * tile_w, 1));
  const Rgb white{255, 255, 255};
  draw_text(canvas, 2, 2, page.category + " | " + page.layer_name + " | " + page.title, white);
  draw_text(canvas, 16, 2, page.metrics_line, white);
  for (std::size_t r = 0; r < page.rows.size(); ++r) {
    for (std::size_t k = 0; k < page.rows[r].size(); ++k) {
      const Tile& tile = page.rows[r][k];
      const std::size_t top = kHeaderHeight + r * cell_h;
      const std::size_t left = k * tile_w;
      RgbImage caption_band(kCaptionHeight, tile_w);
      draw_text(caption_band, 2, 2, tile.caption(), white);
      for (std::size_t y = 0; y < kCaptionHeight; ++y) {
        for (std::size_t x = 0; x < tile_w; ++x) canvas.set(top + y, left + x, caption_band.at(y, x));
      }
      for (std::size_t y = 0; y < tile_h; ++y) {
        for (std::size_t x = 0; x < tile_w; ++x) canvas.set(top + kCaptionHeight + y, left + x, tile.pixels.at(y, x));
      }
    }
  }
  return canvas;
}

}  // namespace mvgw::viz
