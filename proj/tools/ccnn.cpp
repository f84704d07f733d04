// Command-line harness: runs experiment pipelines and stage-level entry
// points over persisted artifacts.

#include <CLI11.hpp>

#include <iostream>

#include "cnnconvex/harness.hpp"

using namespace ccnn;

namespace {

int with_config(const std::string& config_path, const std::string& out_dir,
                int (*stage)(const StageContext&)) {
  StageContext ctx;
  ctx.out_dir = out_dir;
  try {
    ctx.cfg = parse_config(read_file(config_path));
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    return stage(ctx);
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return kStageFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exact convex training of ReLU CNNs"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::string solution_path, compare_out = "compare.csv";
  std::vector<std::string> trajectories;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
    cmd->add_option("--out", out_dir, "output directory");
  };

  CLI::App* run = app.add_subcommand("run", "full pipeline: ingest -> enumerate -> solve -> "
                                            "reconstruct -> sgd -> summary");
  add_common(run);
  CLI::App* enumerate_cmd = app.add_subcommand("enumerate", "ingest data and enumerate arrangements");
  add_common(enumerate_cmd);
  CLI::App* solve_cmd = app.add_subcommand("solve", "build and solve the convex program");
  add_common(solve_cmd);
  CLI::App* sgd_cmd = app.add_subcommand("sgd", "train the non-convex SGD baseline");
  add_common(sgd_cmd);
  CLI::App* compare_cmd = app.add_subcommand("compare", "gap-to-optimum table for trajectories");
  compare_cmd->add_option("--solution", solution_path, "solution.json path")->required();
  compare_cmd->add_option("--trajectory", trajectories, "trajectory CSV paths")->required();
  compare_cmd->add_option("--out", compare_out, "output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  if (run->parsed()) return with_config(config_path, out_dir, cmd_run);
  if (enumerate_cmd->parsed())
    return with_config(config_path, out_dir, [](const StageContext& ctx) {
      int rc = cmd_ingest(ctx);
      return rc ? rc : cmd_enumerate(ctx);
    });
  if (solve_cmd->parsed())
    return with_config(config_path, out_dir, [](const StageContext& ctx) {
      int rc = cmd_solve(ctx);
      return rc ? rc : cmd_reconstruct(ctx);
    });
  if (sgd_cmd->parsed()) return with_config(config_path, out_dir, cmd_sgd);
  if (compare_cmd->parsed()) {
    try {
      return cmd_compare(solution_path, trajectories, compare_out);
    } catch (const std::exception& e) {
      std::cerr << "compare failure: " << e.what() << "\n";
      return kStageFailure;
    }
  }
  return kConfigError;
}
