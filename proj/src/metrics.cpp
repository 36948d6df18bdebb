#include "mvgwhiten/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mvgwhiten/errors.hpp"
#include "mvgwhiten/parallel.hpp"
#include "mvgwhiten/viz.hpp"

namespace mvgw {
namespace {

struct Counts {
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
};

Counts count_classes(const ScoredPixels& pixels)
{
  if (pixels.scores.size() != pixels.labels.size()) throw ShapeError("scores and labels differ in length");
  Counts counts;
  for (std::size_t i = 0; i < pixels.scores.size(); ++i) {
    if (!std::isfinite(pixels.scores[i])) throw DataError("scores contain NaN or Inf");
    if (pixels.labels[i]) {
      ++counts.positives;
    } else {
      ++counts.negatives;
    }
  }
  if (counts.positives == 0 || counts.negatives == 0) {
    throw MetricUndefinedError("curve metrics need both anomalous and normal pixels");
  }
  return counts;
}

// Visits groups of equal scores in descending order, passing the number of
// positives and negatives in each group.
template <typename Visit>
void for_each_threshold(const ScoredPixels& pixels, Visit visit)
{
  std::vector<std::size_t> order(pixels.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pixels.scores[a] > pixels.scores[b]; });
  std::size_t i = 0;
  while (i < order.size()) {
    const double value = pixels.scores[order[i]];
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    for (; i < order.size() && pixels.scores[order[i]] == value; ++i) {
      if (pixels.labels[order[i]]) {
        ++tp;
      } else {
        ++fp;
      }
    }
    visit(tp, fp);
  }
}

// Union-find over provisional labels.
int find_root(std::vector<int>& parent, int x)
{
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace

ScoredPixels pair_pixels(const ScoreMap& scores, const PixelLabels& labels)
{
  if (scores.batch != labels.batch || scores.height != labels.height || scores.width != labels.width) {
    throw ShapeError("score maps are " + std::to_string(scores.batch) + "x" + std::to_string(scores.height) + "x" +
                     std::to_string(scores.width) + " but masks are " + std::to_string(labels.batch) + "x" +
                     std::to_string(labels.height) + "x" + std::to_string(labels.width));
  }
  return {scores.scores, labels.masks};
}

double auroc(const ScoredPixels& pixels)
{
  const Counts counts = count_classes(pixels);
  // Twice the trapezoid area in units of (1 positive x 1 negative).
  std::uint64_t area2 = 0;
  std::uint64_t tp = 0;
  for_each_threshold(pixels, [&](std::uint64_t group_tp, std::uint64_t group_fp) {
    area2 += group_fp * (2 * tp + group_tp);
    tp += group_tp;
  });
  return static_cast<double>(area2) / (2.0 * static_cast<double>(counts.positives) * static_cast<double>(counts.negatives));
}

double aupr(const ScoredPixels& pixels)
{
  const Counts counts = count_classes(pixels);
  double area = 0.0;
  double previous_recall = 0.0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  for_each_threshold(pixels, [&](std::uint64_t group_tp, std::uint64_t group_fp) {
    tp += group_tp;
    fp += group_fp;
    const double recall = static_cast<double>(tp) / static_cast<double>(counts.positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - previous_recall) * precision;
    previous_recall = recall;
  });
  return area;
}

std::vector<int> label_regions(const std::uint8_t* mask, std::size_t height, std::size_t width, int& count)
{
  std::vector<int> labels(height * width, -1);
  std::vector<int> parent;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t i = y * width + x;
      if (!mask[i]) continue;
      int current = -1;
      auto merge = [&](std::size_t ny, std::size_t nx) {
        const int other = labels[ny * width + nx];
        if (other < 0) return;
        if (current < 0) {
          current = find_root(parent, other);
          return;
        }
        const int a = find_root(parent, current);
        const int b = find_root(parent, other);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
        current = std::min(a, b);
      };
      if (x > 0) merge(y, x - 1);
      if (y > 0) {
        if (x > 0) merge(y - 1, x - 1);
        merge(y - 1, x);
        if (x + 1 < width) merge(y - 1, x + 1);
      }
      if (current < 0) {
        current = static_cast<int>(parent.size());
        parent.push_back(current);
      }
      labels[i] = current;
    }
  }
  std::vector<int> compact(parent.size(), -1);
  count = 0;
  for (auto& label : labels) {
    if (label < 0) continue;
    const int root = find_root(parent, label);
    if (compact[root] < 0) compact[root] = count++;
    label = compact[root];
  }
  return labels;
}

double aupro(const ScoreMap& scores, const PixelLabels& labels, double fpr_limit)
{
  if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) throw ArgumentError("fpr_limit must lie in (0, 1]");
  const ScoredPixels pixels = pair_pixels(scores, labels);
  const std::size_t plane = labels.height * labels.width;

  // Global region id per pixel, -1 for normal pixels.
  std::vector<int> region(pixels.scores.size(), -1);
  std::vector<std::size_t> region_size;
  std::uint64_t negatives = 0;
  for (std::size_t b = 0; b < labels.batch; ++b) {
    int count = 0;
    const auto local = label_regions(labels.masks.data() + b * plane, labels.height, labels.width, count);
    const int base = static_cast<int>(region_size.size());
    region_size.resize(region_size.size() + static_cast<std::size_t>(count), 0);
    for (std::size_t p = 0; p < plane; ++p) {
      if (local[p] < 0) {
        ++negatives;
        continue;
      }
      region[b * plane + p] = base + local[p];
      ++region_size[static_cast<std::size_t>(base + local[p])];
    }
  }
  if (region_size.empty()) throw MetricUndefinedError("AUPRO needs at least one anomalous region");
  if (negatives == 0) throw MetricUndefinedError("AUPRO needs normal pixels");
  for (double v : pixels.scores) {
    if (!std::isfinite(v)) throw DataError("scores contain NaN or Inf");
  }

  std::vector<std::size_t> order(pixels.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pixels.scores[a] > pixels.scores[b]; });

  std::vector<double> thresholds;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double v = pixels.scores[order[i]];
    if (thresholds.empty() || thresholds.back() != v) thresholds.push_back(v);
  }
  if (thresholds.size() > kMaxProThresholds) {
    // Evenly spaced quantiles of the score distribution, highest first.
    std::vector<double> sampled;
    const std::size_t n = order.size();
    for (std::size_t k = 0; k < kMaxProThresholds; ++k) {
      const std::size_t rank = static_cast<std::size_t>(
          std::llround(static_cast<double>(k) * static_cast<double>(n - 1) / static_cast<double>(kMaxProThresholds - 1)));
      const double v = pixels.scores[order[rank]];
      if (sampled.empty() || sampled.back() != v) sampled.push_back(v);
    }
    thresholds = std::move(sampled);
  }

  std::vector<std::size_t> covered(region_size.size(), 0);
  std::uint64_t false_positives = 0;
  std::vector<double> fpr{0.0};
  std::vector<double> pro{0.0};
  std::size_t cursor = 0;
  for (double t : thresholds) {
    for (; cursor < order.size() && pixels.scores[order[cursor]] >= t; ++cursor) {
      const int r = region[order[cursor]];
      if (r < 0) {
        ++false_positives;
      } else {
        ++covered[static_cast<std::size_t>(r)];
      }
    }
    double overlap = 0.0;
    for (std::size_t r = 0; r < region_size.size(); ++r) {
      overlap += static_cast<double>(covered[r]) / static_cast<double>(region_size[r]);
    }
    fpr.push_back(static_cast<double>(false_positives) / static_cast<double>(negatives));
    pro.push_back(overlap / static_cast<double>(region_size.size()));
  }

  double area = 0.0;
  for (std::size_t i = 1; i < fpr.size(); ++i) {
    const double f0 = fpr[i - 1];
    const double f1 = fpr[i];
    if (f0 >= fpr_limit) break;
    if (f1 <= fpr_limit) {
      area += (f1 - f0) * (pro[i - 1] + pro[i]) / 2.0;
    } else {
      const double at_limit = pro[i - 1] + (pro[i] - pro[i - 1]) * (fpr_limit - f0) / (f1 - f0);
      area += (fpr_limit - f0) * (pro[i - 1] + at_limit) / 2.0;
      break;
    }
  }
  return area / fpr_limit;
}

ScoreMap upsample_scores(const ScoreMap& scores, std::size_t height, std::size_t width)
{
  ScoreMap out;
  out.batch = scores.batch;
  out.height = height;
  out.width = width;
  out.scores.resize(scores.batch * height * width);
  for (std::size_t b = 0; b < scores.batch; ++b) {
    viz::upsample_bilinear(scores.plane(b), scores.height, scores.width, out.scores.data() + b * height * width,
                           height, width);
  }
  return out;
}

std::vector<ComponentAuroc> rank_components(const WhitenedStack& test, const PixelLabels& labels)
{
  if (test.batch != labels.batch) throw ShapeError("whitened stack and masks differ in batch size");
  std::vector<ComponentAuroc> ranking(test.channels);
  const std::size_t plane = labels.height * labels.width;
  parallel_for(test.channels, [&](std::size_t c) {
    ScoredPixels pixels;
    pixels.labels = labels.masks;
    pixels.scores.resize(test.batch * plane);
    for (std::size_t b = 0; b < test.batch; ++b) {
      viz::upsample_bilinear(test.sq_plane(b, c), test.height, test.width, pixels.scores.data() + b * plane,
                             labels.height, labels.width);
    }
    ranking[c] = {c, auroc(pixels)};
  });
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const ComponentAuroc& a, const ComponentAuroc& b) { return a.auroc > b.auroc; });
  return ranking;
}

nlohmann::ordered_json MetricsReport::to_json() const
{
  nlohmann::ordered_json doc;
  doc["auroc"] = auroc;
  doc["aupr"] = aupr;
  doc["aupro"] = aupro;
  doc["fpr_limit"] = fpr_limit;
  auto ranking = nlohmann::ordered_json::array();
  for (const auto& entry : per_component_auroc) ranking.push_back({entry.component, entry.auroc});
  doc["per_component_auroc"] = std::move(ranking);
  return doc;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& doc)
{
  MetricsReport report;
  try {
    report.auroc = doc.at("auroc").get<double>();
    report.aupr = doc.at("aupr").get<double>();
    report.aupro = doc.at("aupro").get<double>();
    report.fpr_limit = doc.at("fpr_limit").get<double>();
    for (const auto& entry : doc.at("per_component_auroc")) {
      report.per_component_auroc.push_back({entry.at(0).get<std::size_t>(), entry.at(1).get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid metrics report: ") + e.what());
  }
  return report;
}

MetricsReport evaluate(const ScoreMap& scores, const WhitenedStack& test, const PixelLabels& labels, double fpr_limit)
{
  const ScoreMap upsampled = upsample_scores(scores, labels.height, labels.width);
  const ScoredPixels pixels = pair_pixels(upsampled, labels);
  MetricsReport report;
  report.fpr_limit = fpr_limit;
  report.auroc = auroc(pixels);
  report.aupr = aupr(pixels);
  report.aupro = aupro(upsampled, labels, fpr_limit);
  report.per_component_auroc = rank_components(test, labels);
  return report;
}

}  // namespace mvgw
