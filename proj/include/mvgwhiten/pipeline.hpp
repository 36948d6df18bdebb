#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mvgwhiten/core_stats.hpp"
#include "mvgwhiten/metrics.hpp"
#include "mvgwhiten/tensor_io.hpp"
#include "mvgwhiten/viz.hpp"

namespace mvgw {

struct ComponentSelection {
  std::size_t k_lowest = 3;
  std::size_t k_highest = 3;
  std::vector<std::size_t> explicit_list;  // overrides both k_* when non-empty
};

struct PipelineConfig {
  std::filesystem::path manifest_path;
  std::vector<std::string> layers;  // empty: every manifest layer
  double floor_rel = kDefaultFloorRel;
  double percentile = viz::kDefaultPercentile;
  double alpha = viz::kDefaultAlpha;
  double fpr_limit = kDefaultFprLimit;
  std::size_t tile_size = viz::kDefaultTileSize;
  std::vector<viz::ScaleStrategy> strategies = {viz::ScaleStrategy::kPerComponent,
                                                viz::ScaleStrategy::kCrossComponent, viz::ScaleStrategy::kScoreMap};
  ComponentSelection components;
  std::size_t images_per_page = 4;
  bool test_anomalous_only = true;
  std::size_t max_pages = 0;  // per output directory; 0 = no limit
  bool write_y_sq = false;
  std::filesystem::path output_dir = "out";
  bool deterministic = true;
  std::size_t threads = 0;

  void validate() const;
};

/// Reads a JSON config; relative paths resolve against the config's directory.
PipelineConfig load_config(const std::filesystem::path& path);

/// Output locations for one (category, layer).
struct LayerPaths {
  std::filesystem::path root;

  LayerPaths(const std::filesystem::path& output_dir, const std::string& category, const std::string& layer);
  std::filesystem::path model_dir() const { return root / "model"; }
  std::filesystem::path split_dir(Split split) const { return root / to_string(split); }
  std::filesystem::path scores(Split split) const { return split_dir(split) / "scores.npy"; }
  std::filesystem::path y_sq(Split split) const { return split_dir(split) / "y_sq.npy"; }
  std::filesystem::path metrics() const { return root / "metrics.json"; }
  std::filesystem::path scales() const { return root / "scales.json"; }
};

void write_score_map(const ScoreMap& scores, const std::filesystem::path& path);
ScoreMap read_score_map(const std::filesystem::path& path);

void cmd_fit(const PipelineConfig& config, std::ostream& log);
void cmd_score(const PipelineConfig& config, std::ostream& log);
void cmd_eval(const PipelineConfig& config, std::ostream& log);
void cmd_render(const PipelineConfig& config, std::ostream& log);
void cmd_run(const PipelineConfig& config, std::ostream& log);

/// Entry point shared by the CLI binary; returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace mvgw
