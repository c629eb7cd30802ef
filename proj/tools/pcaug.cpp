// SPDX-License-Identifier: Apache-2.0
//
// pcaug: object-insertion augmentation and loss evaluation for LiDAR scans.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pcaug/commands.hpp"

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::string classes;
  std::vector<std::string> settings;
};

pcaug::ToolkitConfig resolve_config(const GlobalOptions& g) {
  pcaug::ToolkitConfig cfg;
  std::string path = g.config_path;
  if (path.empty())
    if (const char* env = std::getenv("PCAUG_CONFIG")) path = env;
  if (!path.empty()) cfg = pcaug::load_config(path);
  for (const auto& s : g.settings) pcaug::apply_assignment(cfg, s);
  if (!g.classes.empty()) pcaug::apply_setting(cfg, "classes", g.classes);
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = pcaug::cli;
  CLI::App app{"pcaug: validity-checked object insertion for LiDAR scans and loss evaluation"};
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--config", g.config_path, "key = value config file (default: $PCAUG_CONFIG)");
  app.add_option("--seed", g.seed, "global seed");
  app.add_option("--workers", g.workers, "worker threads for per-scan commands")->check(CLI::PositiveNumber);
  app.add_option("--classes", g.classes, "classes of interest, e.g. 30:Pedestrian,11:Bicycle");
  app.add_option("--set", g.settings, "override a config key (key=value), repeatable");

  std::string a, b, c, d, ground_dir;
  std::size_t runs = 20;
  bool dump = false;

  auto* pool = app.add_subcommand("pool", "object pool commands")->require_subcommand(1);
  auto* pool_build = pool->add_subcommand("build", "extract object instances from labeled scans");
  pool_build->add_option("src_dir", a, "directory of <name>.bin + <name>.label pairs")->required();
  pool_build->add_option("out_dir", b, "pool directory to write")->required();

  auto* augment = app.add_subcommand("augment", "insert pooled objects into every scan of a directory");
  augment->add_option("scan_dir", a)->required();
  augment->add_option("pseudo_label_dir", b)->required();
  augment->add_option("pool_dir", c)->required();
  augment->add_option("out_dir", d)->required();
  augment->add_option("--ground-dir", ground_dir, "ingest <stem>.ground files instead of detecting ground");

  auto* ground = app.add_subcommand("ground", "ground segmentation")->require_subcommand(1);
  auto* ground_detect = ground->add_subcommand("detect", "label ground points of a scan or directory");
  ground_detect->add_option("input", a, "scan file or directory")->required();
  ground_detect->add_option("output", b, ".ground file or directory")->required();

  auto* losses = app.add_subcommand("losses", "loss evaluation")->require_subcommand(1);
  auto* losses_eval = losses->add_subcommand("eval", "evaluate every loss present in a tensor directory");
  losses_eval->add_option("tensor_dir", a)->required();

  auto* rv = app.add_subcommand("rv", "range view tools")->require_subcommand(1);
  auto* rv_render = rv->add_subcommand("render", "render a scan's range image as a PGM");
  rv_render->add_option("scan", a)->required();
  rv_render->add_option("out_image", b)->required();

  auto* bench = app.add_subcommand("benchmark", "time the insertion pipeline per stage");
  bench->add_option("scan_dir", a)->required();
  bench->add_option("pool_dir", b)->required();
  bench->add_option("--runs", runs, "minimum number of timed runs")->check(CLI::PositiveNumber);

  auto* config = app.add_subcommand("config", "print the effective configuration");
  config->add_flag("--dump", dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  try {
    const auto cfg = resolve_config(g);
    auto& out = std::cout;
    if (pool_build->parsed()) {
      cli::cmd_pool_build(a, b, cfg, g.workers, out);
    } else if (augment->parsed()) {
      cli::AugmentOptions opts;
      opts.workers = g.workers;
      if (!ground_dir.empty()) opts.ground_dir = ground_dir;
      const auto rep = cli::cmd_augment(a, b, c, d, cfg, opts, out);
      if (rep.failed > 0) return cli::kExitValidation;
    } else if (ground_detect->parsed()) {
      if (cli::cmd_ground_detect(a, b, cfg, g.workers, out) > 0) return cli::kExitValidation;
    } else if (losses_eval->parsed()) {
      cli::cmd_losses_eval(a, cfg, out);
    } else if (rv_render->parsed()) {
      cli::cmd_rv_render(a, cfg, b, out);
    } else if (bench->parsed()) {
      cli::cmd_benchmark(a, b, cfg, runs, out);
    } else if (config->parsed()) {
      out << pcaug::dump_config(cfg);
    }
  } catch (const pcaug::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitIo;
  }
  return cli::kExitOk;
}
