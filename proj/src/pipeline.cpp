#include "mvgwhiten/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <ostream>
#include <set>

#include "mvgwhiten/errors.hpp"
#include "mvgwhiten/image.hpp"
#include "mvgwhiten/parallel.hpp"

namespace mvgw {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void PipelineConfig::validate() const
{
  if (manifest_path.empty()) throw ConfigError("config must name a manifest");
  if (!(floor_rel > 0.0 && floor_rel < 1.0)) throw ConfigError("floor_rel must lie in (0, 1)");
  if (!(percentile > 0.0 && percentile <= 100.0)) throw ConfigError("percentile must lie in (0, 100]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) throw ConfigError("fpr_limit must lie in (0, 1]");
  if (tile_size == 0) throw ConfigError("tile_size must be positive");
  if (images_per_page == 0) throw ConfigError("images_per_page must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

PipelineConfig load_config(const fs::path& path)
{
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "manifest",   "layers",          "floor_rel",   "percentile", "alpha",      "fpr_limit",
      "tile_size",  "strategies",      "components",  "images_per_page", "test_images", "max_pages",
      "write_y_sq", "output_dir",      "deterministic", "threads"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }

  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  PipelineConfig config;
  try {
    if (!doc.contains("manifest")) throw ConfigError("config must name a manifest");
    config.manifest_path = resolve(doc.at("manifest").get<std::string>());
    config.layers = doc.value("layers", config.layers);
    config.floor_rel = doc.value("floor_rel", config.floor_rel);
    config.percentile = doc.value("percentile", config.percentile);
    config.alpha = doc.value("alpha", config.alpha);
    config.fpr_limit = doc.value("fpr_limit", config.fpr_limit);
    config.tile_size = doc.value("tile_size", config.tile_size);
    if (doc.contains("strategies")) {
      config.strategies.clear();
      for (const auto& s : doc.at("strategies")) config.strategies.push_back(viz::parse_strategy(s.get<std::string>()));
    }
    if (doc.contains("components")) {
      const auto& node = doc.at("components");
      config.components.k_lowest = node.value("k_lowest", config.components.k_lowest);
      config.components.k_highest = node.value("k_highest", config.components.k_highest);
      config.components.explicit_list = node.value("explicit", config.components.explicit_list);
    }
    config.images_per_page = doc.value("images_per_page", config.images_per_page);
    const std::string test_images = doc.value("test_images", std::string("anomalous"));
    if (test_images != "anomalous" && test_images != "all") throw ConfigError("test_images must be 'anomalous' or 'all'");
    config.test_anomalous_only = test_images == "anomalous";
    config.max_pages = doc.value("max_pages", config.max_pages);
    config.write_y_sq = doc.value("write_y_sq", config.write_y_sq);
    config.output_dir = resolve(doc.value("output_dir", std::string("out")));
    config.deterministic = doc.value("deterministic", config.deterministic);
    config.threads = doc.value("threads", config.threads);
  } catch (const json::exception& e) {
    throw ConfigError("invalid config " + path.string() + ": " + e.what());
  }
  config.validate();
  return config;
}

LayerPaths::LayerPaths(const fs::path& output_dir, const std::string& category, const std::string& layer)
    : root(output_dir / category / layer)
{
}

void write_score_map(const ScoreMap& scores, const fs::path& path)
{
  npy::Array array;
  array.shape = {scores.batch, scores.height, scores.width};
  array.data = scores.scores;
  npy::write(path, array, npy::Dtype::kFloat64);
}

ScoreMap read_score_map(const fs::path& path)
{
  npy::Array array = npy::read(path);
  if (array.shape.size() != 3) throw ShapeError("score map " + path.string() + " must be 3-D");
  ScoreMap scores;
  scores.batch = array.shape[0];
  scores.height = array.shape[1];
  scores.width = array.shape[2];
  scores.scores = std::move(array.data);
  return scores;
}

namespace {

// Prefixes any library error with the failing stage, keeping its exit code.
void run_stage(const char* stage, const std::function<void()>& body)
{
  try {
    body();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("[") + stage + "] " + e.what());
  } catch (const fs::filesystem_error& e) {
    throw Error(ExitCode::kData, std::string("[") + stage + "] " + e.what());
  }
}

struct Context {
  DatasetManifest manifest;
  std::vector<std::string> layers;
};

Context open(const PipelineConfig& config)
{
  config.validate();
  set_max_threads(config.threads);
  Context ctx{read_manifest(config.manifest_path), {}};
  ctx.layers = config.layers.empty() ? ctx.manifest.layers : config.layers;
  for (const auto& layer : ctx.layers) {
    if (std::find(ctx.manifest.layers.begin(), ctx.manifest.layers.end(), layer) == ctx.manifest.layers.end()) {
      throw ConfigError("layer '" + layer + "' is not in the manifest");
    }
  }
  if (ctx.layers.empty()) throw ConfigError("no layers selected");
  return ctx;
}

MvgModel require_model(const LayerPaths& paths)
{
  if (!fs::exists(paths.model_dir() / "model.json")) {
    throw IoError("file not found: " + (paths.model_dir() / "model.json").string() + " (run 'fit' first)");
  }
  return load_model(paths.model_dir());
}

ScoreMap require_scores(const LayerPaths& paths, Split split, const FeatureStack& stack)
{
  if (!fs::exists(paths.scores(split))) {
    throw IoError("file not found: " + paths.scores(split).string() + " (run 'score' first)");
  }
  ScoreMap scores = read_score_map(paths.scores(split));
  if (scores.batch != stack.batch || scores.height != stack.height || scores.width != stack.width) {
    throw ShapeError("stored score map " + paths.scores(split).string() + " does not match the feature stack");
  }
  return scores;
}

void write_json(const fs::path& path, const ordered_json& doc)
{
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

std::string format_metrics(const MetricsReport& report)
{
  char buffer[128];
  std::snprintf(buffer, sizeof buffer, "AUROC=%.4f  AUPR=%.4f  AUPRO=%.4f (fpr<=%.2g)", report.auroc, report.aupr,
                report.aupro, report.fpr_limit);
  return buffer;
}

std::vector<std::size_t> select_components(const PipelineConfig& config, const MetricsReport& report, bool lowest,
                                           std::size_t channels)
{
  const auto& explicit_list = config.components.explicit_list;
  if (!explicit_list.empty()) {
    for (auto c : explicit_list) {
      if (c >= channels) throw ConfigError("component " + std::to_string(c) + " out of range");
    }
    return explicit_list;
  }
  const auto& ranking = report.per_component_auroc;
  std::vector<std::size_t> picked;
  if (lowest) {
    const std::size_t k = std::min(config.components.k_lowest, ranking.size());
    for (std::size_t i = 0; i < k; ++i) picked.push_back(ranking[ranking.size() - 1 - i].component);
  } else {
    const std::size_t k = std::min(config.components.k_highest, ranking.size());
    for (std::size_t i = 0; i < k; ++i) picked.push_back(ranking[i].component);
  }
  return picked;
}

viz::Grid plane_grid(const double* plane, std::size_t height, std::size_t width)
{
  return viz::Grid{height, width, std::vector<double>(plane, plane + height * width)};
}

void fit_layer(const PipelineConfig& config, const Context& ctx, const std::string& layer, std::ostream& log)
{
  const LayerPaths paths(config.output_dir, ctx.manifest.category, layer);
  const FeatureStack train = load_features(ctx.manifest, Split::kTrain, layer);
  MvgModel model = build_model(train, config.floor_rel);
  model.category = ctx.manifest.category;
  save_model(model, paths.model_dir());
  log << "fit " << ctx.manifest.category << "/" << layer << ": C=" << model.channels()
      << " rows=" << train.batch * train.pixels_per_image() << " eigenvalues [" << model.eigenvalues.minCoeff() << ", "
      << model.eigenvalues.maxCoeff() << "] floored=" << model.floored_count << "\n";
}

void score_layer(const PipelineConfig& config, const Context& ctx, const std::string& layer, std::ostream& log)
{
  const LayerPaths paths(config.output_dir, ctx.manifest.category, layer);
  const MvgModel model = require_model(paths);
  for (const auto& [split, sources] : ctx.manifest.splits) {
    const FeatureStack stack = load_features(ctx.manifest, split, layer);
    const WhitenedStack whitened = whiten(stack, model);
    const ScoreMap scores = score_map(whitened);
    fs::create_directories(paths.split_dir(split));
    write_score_map(scores, paths.scores(split));
    if (config.write_y_sq) {
      npy::Array array;
      array.shape = {whitened.batch, whitened.channels, whitened.height, whitened.width};
      array.data = whitened.y_sq;
      npy::write(paths.y_sq(split), array, npy::Dtype::kFloat64);
    }
    log << "score " << ctx.manifest.category << "/" << layer << "/" << to_string(split) << ": " << scores.batch
        << " maps of " << scores.height << "x" << scores.width << "\n";
  }
}

void eval_layer(const PipelineConfig& config, const Context& ctx, const std::string& layer, std::ostream& log)
{
  const LayerPaths paths(config.output_dir, ctx.manifest.category, layer);
  const MvgModel model = require_model(paths);
  const FeatureStack test = load_features(ctx.manifest, Split::kTest, layer);
  const ScoreMap scores = require_scores(paths, Split::kTest, test);
  const PixelLabels labels = load_labels(ctx.manifest, Split::kTest, test.image_ids);
  const WhitenedStack whitened = whiten(test, model);
  const MetricsReport report = evaluate(scores, whitened, labels, config.fpr_limit);
  write_json(paths.metrics(), report.to_json());
  log << "eval " << ctx.manifest.category << "/" << layer << ": " << format_metrics(report) << "\n";
}

std::vector<std::size_t> page_images(const PipelineConfig& config, const Context& ctx, Split split,
                                     const FeatureStack& stack)
{
  std::vector<std::size_t> picked;
  if (split == Split::kTest && config.test_anomalous_only) {
    const PixelLabels labels = load_labels(ctx.manifest, split, stack.image_ids);
    const std::size_t plane = labels.height * labels.width;
    for (std::size_t b = 0; b < labels.batch; ++b) {
      const auto first = labels.masks.begin() + static_cast<std::ptrdiff_t>(b * plane);
      if (std::any_of(first, first + static_cast<std::ptrdiff_t>(plane), [](std::uint8_t m) { return m != 0; })) {
        picked.push_back(b);
      }
    }
  } else {
    for (std::size_t b = 0; b < stack.batch; ++b) picked.push_back(b);
  }
  return picked;
}

void render_layer(const PipelineConfig& config, const Context& ctx, const std::string& layer, std::ostream& log)
{
  const LayerPaths paths(config.output_dir, ctx.manifest.category, layer);
  const MvgModel model = require_model(paths);
  if (!fs::exists(paths.metrics())) throw IoError("file not found: " + paths.metrics().string() + " (run 'eval' first)");
  std::ifstream metrics_in(paths.metrics());
  MetricsReport report;
  try {
    report = MetricsReport::from_json(json::parse(metrics_in));
  } catch (const json::exception& e) {
    throw FormatError("cannot parse " + paths.metrics().string() + ": " + e.what());
  }
  const std::string metrics_line = format_metrics(report);

  viz::RenderSpec spec;
  spec.alpha = config.alpha;
  spec.target_height = config.tile_size;
  spec.target_width = config.tile_size;

  auto emits = [&](viz::ScaleStrategy s) {
    return std::find(config.strategies.begin(), config.strategies.end(), s) != config.strategies.end();
  };

  ordered_json scales_doc;
  scales_doc["percentile"] = config.percentile;
  ordered_json pages_doc = ordered_json::object();
  std::size_t pages_written = 0;

  for (const auto& [split, sources] : ctx.manifest.splits) {
    const FeatureStack stack = load_features(ctx.manifest, split, layer);
    const WhitenedStack whitened = whiten(stack, model);
    const ScoreMap scores = require_scores(paths, split, stack);

    const auto per_component = viz::per_component_scales(whitened, config.percentile);
    const viz::ColorScale cross = viz::cross_component_scale(whitened, config.percentile);
    viz::ColorScale score_scale = viz::score_map_scale(scores, config.percentile);
    score_scale.split = split;

    ordered_json split_doc;
    auto per_component_doc = ordered_json::array();
    for (const auto& s : per_component) per_component_doc.push_back(s.vmax);
    split_doc["per_component"] = std::move(per_component_doc);
    split_doc["cross_component"] = cross.vmax;
    split_doc["score_map"] = score_scale.vmax;
    scales_doc[to_string(split)] = std::move(split_doc);

    const auto image_paths = sources.images.resolve(stack.image_ids);
    auto base_image = [&](std::size_t b) {
      if (image_paths[b]) return read_png_rgb(*image_paths[b]);
      return RgbImage(ctx.manifest.image_height, ctx.manifest.image_width, Rgb{128, 128, 128});
    };
    const auto images = page_images(config, ctx, split, stack);

    struct Kind {
      viz::ScaleStrategy strategy;
      const char* directory;
    };
    for (const Kind kind : {Kind{viz::ScaleStrategy::kPerComponent, "components_low"},
                            Kind{viz::ScaleStrategy::kCrossComponent, "components_high"},
                            Kind{viz::ScaleStrategy::kScoreMap, "score"}}) {
      if (!emits(kind.strategy)) continue;
      std::vector<std::size_t> components;
      if (kind.strategy != viz::ScaleStrategy::kScoreMap) {
        components = select_components(config, report, kind.strategy == viz::ScaleStrategy::kPerComponent,
                                       whitened.channels);
      }
      const bool with_score = kind.strategy == viz::ScaleStrategy::kScoreMap;
      const fs::path dir = paths.split_dir(split) / kind.directory;
      fs::create_directories(dir);

      std::size_t page_index = 0;
      for (std::size_t start = 0; start < images.size(); start += config.images_per_page, ++page_index) {
        if (config.max_pages != 0 && page_index >= config.max_pages) break;
        std::vector<viz::PageRow> rows;
        for (std::size_t i = start; i < std::min(images.size(), start + config.images_per_page); ++i) {
          const std::size_t b = images[i];
          viz::PageRow row;
          row.image_index = b;
          row.image_id = stack.image_ids[b];
          row.base = base_image(b);
          for (auto c : components) {
            const auto& scale = kind.strategy == viz::ScaleStrategy::kPerComponent ? per_component[c] : cross;
            row.tiles.push_back({c, plane_grid(whitened.sq_plane(b, c), whitened.height, whitened.width), scale});
          }
          if (with_score) {
            row.tiles.push_back({std::nullopt, plane_grid(scores.plane(b), scores.height, scores.width), score_scale});
          }
          rows.push_back(std::move(row));
        }
        const std::string title = to_string(split) + " | " + viz::to_string(kind.strategy) + " scale";
        const viz::FigurePage page =
            viz::render_page(rows, spec, layer, ctx.manifest.category, title, metrics_line);
        const std::string name = "page_" + std::to_string(page_index) + ".png";
        write_png(dir / name, viz::compose(page));
        auto tile_vmax = ordered_json::array();
        for (const auto& page_row : page.rows) {
          for (const auto& tile : page_row) tile_vmax.push_back(tile.scale.vmax);
        }
        pages_doc[to_string(split) + "/" + kind.directory + "/" + name] = std::move(tile_vmax);
        ++pages_written;
      }
    }
  }
  scales_doc["pages"] = std::move(pages_doc);
  write_json(paths.scales(), scales_doc);
  log << "render " << ctx.manifest.category << "/" << layer << ": " << pages_written << " pages\n";
}

using LayerStage = void (*)(const PipelineConfig&, const Context&, const std::string&, std::ostream&);

void for_each_layer(const char* stage, const PipelineConfig& config, LayerStage body, std::ostream& log)
{
  run_stage(stage, [&] {
    const Context ctx = open(config);
    for (const auto& layer : ctx.layers) body(config, ctx, layer, log);
  });
}

}  // namespace

void cmd_fit(const PipelineConfig& config, std::ostream& log) { for_each_layer("fit", config, fit_layer, log); }
void cmd_score(const PipelineConfig& config, std::ostream& log) { for_each_layer("score", config, score_layer, log); }
void cmd_eval(const PipelineConfig& config, std::ostream& log) { for_each_layer("eval", config, eval_layer, log); }
void cmd_render(const PipelineConfig& config, std::ostream& log) { for_each_layer("render", config, render_layer, log); }

void cmd_run(const PipelineConfig& config, std::ostream& log)
{
  using Clock = std::chrono::steady_clock;
  const auto wall_start = std::chrono::system_clock::now();
  ordered_json timings;
  auto timed = [&](const char* name, void (*stage)(const PipelineConfig&, std::ostream&)) {
    const auto t0 = Clock::now();
    stage(config, log);
    timings[name] = std::chrono::duration<double>(Clock::now() - t0).count();
  };
  timed("fit", cmd_fit);
  timed("score", cmd_score);
  timed("eval", cmd_eval);
  timed("render", cmd_render);
  if (!config.deterministic) {
    // Wall-clock bookkeeping is only written when reproducibility is waived.
    ordered_json info;
    info["started_at_unix"] = std::chrono::duration_cast<std::chrono::seconds>(wall_start.time_since_epoch()).count();
    info["stage_seconds"] = timings;
    fs::create_directories(config.output_dir);
    write_json(config.output_dir / "run_info.json", info);
  }
}

}  // namespace mvgw
