#pragma once

#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <vector>

#include "mvgwhiten/core_stats.hpp"
#include "mvgwhiten/tensor_io.hpp"

namespace mvgw {

constexpr double kDefaultFprLimit = 0.3;
/// Above this many distinct scores, AUPRO sweeps evenly spaced quantiles.
constexpr std::size_t kMaxProThresholds = 5000;

struct ScoredPixels {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;  // nonzero = anomalous
};

/// Pairs image-resolution score maps with masks of the same shape.
ScoredPixels pair_pixels(const ScoreMap& scores, const PixelLabels& labels);

/// Area under the ROC curve. Equal scores form a single threshold step, so
/// the result equals P(score_pos > score_neg) + P(tie) / 2.
double auroc(const ScoredPixels& pixels);

/// Non-interpolated area under the precision-recall curve (average
/// precision over descending distinct thresholds).
double aupr(const ScoredPixels& pixels);

/// Area under the per-region-overlap curve for FPR in [0, fpr_limit],
/// divided by fpr_limit. Regions are 8-connected components of each mask.
double aupro(const ScoreMap& scores, const PixelLabels& labels, double fpr_limit = kDefaultFprLimit);

/// 8-connected component labels of one binary mask: -1 for background,
/// otherwise 0..count-1 in raster order of first appearance.
std::vector<int> label_regions(const std::uint8_t* mask, std::size_t height, std::size_t width, int& count);

/// Bilinearly resizes every plane of `scores` to height x width.
ScoreMap upsample_scores(const ScoreMap& scores, std::size_t height, std::size_t width);

struct ComponentAuroc {
  std::size_t component = 0;
  double auroc = 0.0;
};

/// Single-component AUROC of each squared whitened component (upsampled to
/// mask resolution), sorted by descending AUROC then ascending index.
std::vector<ComponentAuroc> rank_components(const WhitenedStack& test, const PixelLabels& labels);

struct MetricsReport {
  double auroc = 0.0;
  double aupr = 0.0;
  double aupro = 0.0;
  double fpr_limit = kDefaultFprLimit;
  std::vector<ComponentAuroc> per_component_auroc;

  nlohmann::ordered_json to_json() const;
  static MetricsReport from_json(const nlohmann::json& doc);
};

/// All pixel metrics for a test split; `scores` is at feature resolution.
MetricsReport evaluate(const ScoreMap& scores, const WhitenedStack& test, const PixelLabels& labels,
                       double fpr_limit = kDefaultFprLimit);

}  // namespace mvgw
