#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvgwhiten/core_stats.hpp"
#include "mvgwhiten/image.hpp"
#include "mvgwhiten/tensor_io.hpp"

namespace mvgw::viz {

const std::array<Rgb, 256>& inferno_lut();

constexpr double kDefaultPercentile = 99.0;
constexpr double kDefaultAlpha = 0.5;
constexpr std::size_t kDefaultTileSize = 224;

enum class ScaleStrategy { kPerComponent, kCrossComponent, kScoreMap };

std::string to_string(ScaleStrategy strategy);
ScaleStrategy parse_strategy(const std::string& text);

/// Linear heatmap range [vmin, vmax]; vmin is always zero.
struct ColorScale {
  double vmin = 0.0;
  double vmax = 1.0;
  ScaleStrategy strategy = ScaleStrategy::kScoreMap;
  double percentile = kDefaultPercentile;
  Split split = Split::kTrain;
};

/// Linear-interpolation ("type 7") percentile, p in (0, 100].
double percentile(std::span<const double> values, double p);

/// Percentile of the pooled values; throws DegenerateScaleError when it is zero.
ColorScale color_scale(std::span<const double> values, ScaleStrategy strategy, double pct, Split split);
ColorScale color_scale(const std::vector<std::span<const double>>& collection, ScaleStrategy strategy, double pct,
                       Split split);

/// Values of one component across a split, image by image.
std::vector<double> component_values(const WhitenedStack& whitened, std::size_t component);

std::vector<ColorScale> per_component_scales(const WhitenedStack& whitened, double pct);
ColorScale cross_component_scale(const WhitenedStack& whitened, double pct);
ColorScale score_map_scale(const ScoreMap& scores, double pct);

/// Single-channel raster, row-major.
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
};

/// Bilinear resampling with half-pixel centers: output (i, j) samples the
/// source at ((i + 0.5) * H / H_t - 0.5, (j + 0.5) * W / W_t - 0.5), with
/// coordinates clamped to the source extent.
void upsample_bilinear(const double* source, std::size_t height, std::size_t width, double* target,
                       std::size_t target_height, std::size_t target_width);
Grid upsample_bilinear(const Grid& map, std::size_t target_height, std::size_t target_width);

/// Same resampling per channel, rounded back to 8 bits.
RgbImage resize_rgb(const RgbImage& image, std::size_t target_height, std::size_t target_width);

/// index = round(clamp(v / vmax, 0, 1) * 255) into `lut`.
RgbImage apply_colormap(const Grid& map, const ColorScale& scale, const std::array<Rgb, 256>& lut = inferno_lut());

/// round((1 - alpha) * base + alpha * heat) per channel.
RgbImage alpha_blend(const RgbImage& base, const RgbImage& heat, double alpha);

struct RenderSpec {
  double alpha = kDefaultAlpha;
  std::size_t target_height = kDefaultTileSize;
  std::size_t target_width = kDefaultTileSize;
  std::array<Rgb, 256> colormap = inferno_lut();
};

/// Upsample, colorize, and blend one heatmap over `base` (already at the
/// target size).
RgbImage render_tile(const Grid& heat, const RgbImage& base, const ColorScale& scale, const RenderSpec& spec);

struct Tile {
  std::size_t image_index = 0;
  std::string image_id;
  std::optional<std::size_t> component;  // empty for the score map
  ColorScale scale;
  RgbImage pixels;

  std::string caption() const;
};

struct FigurePage {
  std::string layer_name;
  std::string category;
  std::string title;         // e.g. split and scaling strategy
  std::string metrics_line;  // "AUROC=... AUPR=... AUPRO=..."
  std::vector<std::vector<Tile>> rows;
};

// Fixed page geometry.
constexpr std::size_t kHeaderHeight = 30;
constexpr std::size_t kCaptionHeight = 14;

/// Input for one tile: a feature-resolution heatmap and its color scale.
struct TileSource {
  std::optional<std::size_t> component;
  Grid heat;
  ColorScale scale;
};

struct PageRow {
  std::size_t image_index = 0;
  std::string image_id;
  RgbImage base;  // any size; resized to the target
  std::vector<TileSource> tiles;
};

FigurePage render_page(const std::vector<PageRow>& rows, const RenderSpec& spec, std::string layer_name,
                       std::string category, std::string title, std::string metrics_line);

/// Lays the page out as a header band above a grid of captioned tiles.
RgbImage compose(const FigurePage& page);

void draw_text(RgbImage& image, std::size_t top, std::size_t left, const std::string& text, Rgb color);

}  // namespace mvgw::viz
