// cmxqe: quality estimation pipeline for synthetic code-mixed sentences.
//
//   cmxqe validate --dataset data.csv
//   cmxqe embed    --dataset data.csv --provider deterministic:7 --out-dir emb/
//   cmxqe fuse     --dataset data.csv --embeddings emb/ --task rating --out rating.clsv
//   cmxqe train    --matrix rating.clsv --task rating --out rating.mlpc
//   cmxqe predict  --checkpoint rating.mlpc --matrix rating.clsv --out predictions.json
//   cmxqe evaluate --checkpoint rating.mlpc --matrix rating.clsv [--gold gold.json]
//   cmxqe run-all  --config pipeline.json [overrides]
//
// Results go to stdout as JSON, logs to stderr. Exit codes: 0 ok,
// 1 validation findings, 2 input or I/O error, 3 numerical failure.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cmxqe/error.hpp"
#include "cmxqe/log.hpp"
#include "cmxqe/pipeline.hpp"

namespace {

using namespace cmxqe;
namespace fs = std::filesystem;

Task require_task(const std::string& name) {
  const auto task = parse_task(name);
  if (!task) throw Error(ErrorKind::InvalidArgument, "unknown task '" + name + "'");
  return *task;
}

SplitFractions parse_fractions(const std::vector<double>& values) {
  if (values.size() != 3) throw Error(ErrorKind::InvalidArgument, "--fractions takes three values");
  return {values[0], values[1], values[2]};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quality estimation for synthetic code-mixed sentences"};
  app.require_subcommand(1);

  // Shared flag storage; each subcommand registers the ones it uses.
  std::string dataset;
  std::string out_dir;
  std::string out;
  std::string provider;
  std::string task_name;
  std::string embeddings;
  std::string matrix;
  std::string checkpoint;
  std::string gold;
  std::string config_path;
  std::string split_name = "all";
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 42;
  std::vector<double> fractions{0.8, 0.0, 0.2};
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;

  const std::string task_help = "rating|disagreement";

  auto* validate = app.add_subcommand("validate", "Check a dataset file and print its report");
  validate->add_option("--dataset", dataset, "HinGE CSV or JSON file")->required();

  auto* embed = app.add_subcommand("embed", "Write the four CLSV embedding files");
  embed->add_option("--dataset", dataset)->required();
  embed->add_option("--provider", provider, "deterministic:<seed> or files:<dir>")->required();
  embed->add_option("--out-dir", out_dir)->required();

  auto* fuse = app.add_subcommand("fuse", "Build the fused feature matrix for one task");
  fuse->add_option("--dataset", dataset)->required();
  fuse->add_option("--embeddings", embeddings, "directory written by embed")->required();
  fuse->add_option("--task", task_name, task_help)->required();
  fuse->add_option("--out", out, "matrix path (.clsv); labels go to .labels.json")->required();
  fuse->add_option("--split", split_name, "all|train|validation|test");
  fuse->add_option("--split-seed", split_seed);
  fuse->add_option("--fractions", fractions, "train validation test")->expected(3);

  auto* train = app.add_subcommand("train", "Train a classifier on a fused matrix");
  train->add_option("--matrix", matrix)->required();
  train->add_option("--task", task_name, task_help)->required();
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--seed", seed);
  train->add_option("--epochs", epochs);
  train->add_option("--lr", lr);
  train->add_option("--batch-size", batch_size);

  auto* predict = app.add_subcommand("predict", "Write predicted labels for a matrix");
  predict->add_option("--checkpoint", checkpoint)->required();
  predict->add_option("--matrix", matrix)->required();
  predict->add_option("--out", out)->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a matrix");
  evaluate->add_option("--checkpoint", checkpoint)->required();
  evaluate->add_option("--matrix", matrix)->required();
  evaluate->add_option("--gold", gold, "label file; defaults to the matrix labels");

  auto* run_all = app.add_subcommand("run-all", "Run every stage from a config file");
  run_all->add_option("--config", config_path);
  run_all->add_option("--dataset", dataset);
  run_all->add_option("--out-dir", out_dir);
  run_all->add_option("--provider", provider);
  run_all->add_option("--seed", seed);
  run_all->add_option("--split-seed", split_seed);
  run_all->add_option("--fractions", fractions)->expected(3);
  run_all->add_option("--epochs", epochs, "applies to both tasks");
  run_all->add_option("--lr", lr);
  run_all->add_option("--batch-size", batch_size);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  auto given = [](CLI::App* sub, const char* flag) { return sub->count(flag) > 0; };

  try {
    if (validate->parsed()) return pipeline::cmd_validate(dataset, std::cout);
    if (embed->parsed()) {
      return pipeline::cmd_embed(dataset, pipeline::ProviderSpec::parse(provider), out_dir, std::cout);
    }
    if (fuse->parsed()) {
      const auto split = pipeline::parse_split_selector(split_name);
      if (!split) throw Error(ErrorKind::InvalidArgument, "unknown split '" + split_name + "'");
      pipeline::FuseOptions options{*split, split_seed, parse_fractions(fractions)};
      return pipeline::cmd_fuse(dataset, embeddings, require_task(task_name), out, options, std::cout);
    }
    if (train->parsed()) {
      nn::TrainConfig config;
      config.task = require_task(task_name);
      config.seed = seed;
      config.epochs = epochs;
      if (lr) config.learning_rate = *lr;
      if (batch_size) config.batch_size = *batch_size;
      return pipeline::cmd_train(matrix, config, out, std::cout);
    }
    if (predict->parsed()) return pipeline::cmd_predict(checkpoint, matrix, out, std::cout);
    if (evaluate->parsed()) {
      std::optional<fs::path> gold_path;
      if (!gold.empty()) gold_path = gold;
      return pipeline::cmd_evaluate(checkpoint, matrix, gold_path, std::cout);
    }
    if (run_all->parsed()) {
      auto config = config_path.empty() ? pipeline::PipelineConfig{} : pipeline::PipelineConfig::load(config_path);
      // Flags win over the config file.
      if (given(run_all, "--dataset")) config.dataset = dataset;
      if (given(run_all, "--out-dir")) config.out_dir = out_dir;
      if (given(run_all, "--provider")) config.provider = provider;
      if (given(run_all, "--seed")) config.seed = seed;
      if (given(run_all, "--split-seed")) config.split_seed = split_seed;
      if (given(run_all, "--fractions")) config.fractions = parse_fractions(fractions);
      if (epochs) config.epochs_rating = config.epochs_disagreement = *epochs;
      if (lr) config.learning_rate = *lr;
      if (batch_size) config.batch_size = *batch_size;
      return pipeline::cmd_run_all(config, std::cout);
    }
  } catch (const Error& e) {
    logger().error("{}", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    logger().error("{}", e.what());
    return kExitInput;
  }
  return kExitInput;
}
