#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsf/commands.hpp"

int main(int argc, char** argv) {
  using namespace dsf::cli;
  tune_allocator();
  CLI::App app{"Recurrent language-model trainer with exact and diagonal-feedback gradient engines"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto* train = app.add_subcommand("train", "Train a model; key=value arguments override the config file");
  train->add_option("--config,-c", config_path, "Config file (key = value lines)");
  train->add_option("overrides", overrides, "key=value overrides");

  std::string checkpoint_path, data_path;
  auto* eval = app.add_subcommand("eval", "Validation perplexity of a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval->add_option("--data", data_path, "Text file to evaluate")->required();

  std::string scope = "all";
  bool negative_control = false;
  std::uint64_t seed = 1234;
  auto* gc = app.add_subcommand("gradcheck", "Gradient oracles: cells, engines, model or all");
  gc->add_option("scope", scope, "cells | engines | model | all");
  gc->add_flag("--negative-control", negative_control, "Add a check with a perturbed feedback entry (must fail)");
  gc->add_option("--seed", seed, "Seed for the random instances");

  std::string axis = "d", engines = "BPTT,DSF_Sequential";
  BenchOptions bench_opts;
  auto* bench = app.add_subcommand("bench", "Time the e->g conversion over a d or T sweep");
  bench->add_option("--sweep", axis, "d or T");
  bench->add_option("--engines", engines, "Comma-separated engine names");
  bench->add_option("--reps", bench_opts.timing.reps, "Timed repetitions per point (>= 5)");
  bench->add_option("--threads", bench_opts.timing.threads, "Threads for the DSF_Scan backend");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*train) return cmd_train(config_path, overrides, std::cout, std::cerr);
  if (*eval) return cmd_eval(checkpoint_path, data_path, std::cout, std::cerr);
  if (*gc) {
    return guarded([&] { return cmd_gradcheck(parse_gradcheck_scope(scope), negative_control, seed, std::cout, std::cerr); },
                   std::cerr);
  }
  if (*bench) {
    return guarded(
        [&] {
          bench_opts.axis = dsf::bench::parse_axis(axis);
          bench_opts.engines = parse_engine_list(engines);
          return cmd_bench(bench_opts, std::cout, std::cerr);
        },
        std::cerr);
  }
  return kUsage;
}
