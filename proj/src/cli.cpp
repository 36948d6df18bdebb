#include <CLI11.hpp>
#include <map>
#include <ostream>
#include <sstream>

#include "mvgwhiten/errors.hpp"
#include "mvgwhiten/pipeline.hpp"

namespace mvgw {
namespace {

std::vector<std::string> split_list(const std::string& text)
{
  std::vector<std::string> items;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Single-Gaussian anomaly localization with whitened-component heatmaps"};
  app.require_subcommand(1);

  std::string config_path;
  std::string layers;
  std::size_t threads = 0;
  bool threads_set = false;
  std::string output_dir;

  using Command = void (*)(const PipelineConfig&, std::ostream&);
  const std::vector<std::pair<std::string, Command>> commands = {
      {"fit", cmd_fit}, {"score", cmd_score}, {"eval", cmd_eval}, {"render", cmd_render}, {"run", cmd_run}};
  const std::map<std::string, std::string> descriptions = {
      {"fit", "Fit the Gaussian and whitening transform per layer"},
      {"score", "Write whitened score maps for every split"},
      {"eval", "Compute pixel AUROC/AUPR/AUPRO and component ranking"},
      {"render", "Render heatmap pages"},
      {"run", "fit, score, eval and render in sequence"}};
  for (const auto& [name, command] : commands) {
    auto* sub = app.add_subcommand(name, descriptions.at(name));
    sub->add_option("--config", config_path, "Pipeline config (JSON)")->required();
    sub->add_option("--layers", layers, "Comma-separated layer subset");
    sub->add_option("--threads", threads, "Worker thread cap")->each([&](const std::string&) { threads_set = true; });
    sub->add_option("--out", output_dir, "Output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    PipelineConfig config = load_config(config_path);
    if (!layers.empty()) config.layers = split_list(layers);
    if (threads_set) config.threads = threads;
    if (!output_dir.empty()) config.output_dir = output_dir;
    for (const auto& [name, command] : commands) {
      if (app.got_subcommand(name)) command(config, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}

}  // namespace mvgw
