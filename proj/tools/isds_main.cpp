#include "isds/cli.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"identifiable switching dynamical systems toolkit"};
  app.require_subcommand(1);

  isds::CliGlobals globals;
  std::uint64_t seed_value = 0;
  bool seed_set = false;
  app.add_option("--seed", seed_value, "top-level RNG seed")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--workers", globals.workers, "worker threads for data-parallel steps");

  std::string config, out, data, kind = "msm", checkpoint, grid;
  int probe_count = 10000;
  double probe_stddev = 1.0;

  auto* gen = app.add_subcommand("generate", "write a synthetic benchmark dataset");
  gen->add_option("--config", config, "generator config JSON")->required();
  gen->add_option("--out", out, "output dataset directory")->required();

  auto* train = app.add_subcommand("train", "fit an iMSM or iSDS model");
  train->add_option("--kind", kind, "msm | sds")->required();
  train->add_option("--data", data, "dataset directory")->required();
  train->add_option("--config", config, "training config JSON");
  train->add_option("--out", out, "output checkpoint path")->required();

  auto* eval = app.add_subcommand("evaluate", "score a checkpoint against ground truth");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--data", data, "dataset directory")->required();
  eval->add_option("--out", out, "metric report path")->required();

  auto* select = app.add_subcommand("select", "sweep K and M with elbow selection");
  select->add_option("--data", data, "dataset directory")->required();
  select->add_option("--grid", grid, "grid spec JSON")->required();
  select->add_option("--out", out, "output CSV path")->required();

  auto* validate = app.add_subcommand("validate", "run identifiability assumption checks");
  validate->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  validate->add_option("--probe-count", probe_count, "probe sample count");
  validate->add_option("--probe-stddev", probe_stddev, "probe input standard deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (seed_set) globals.seed = seed_value;

  if (gen->parsed()) return isds::cmd_generate(config, out, globals);
  if (train->parsed()) return isds::cmd_train(kind, data, config, out, globals);
  if (eval->parsed()) return isds::cmd_evaluate(checkpoint, data, out, globals);
  if (select->parsed()) return isds::cmd_select(data, grid, out, globals);
  if (validate->parsed()) return isds::cmd_validate(checkpoint, probe_count, probe_stddev, globals);
  return 2;
}
