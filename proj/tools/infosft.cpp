// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

// Command-line front end. Every subcommand accepts --config, --seed, --out,
// --jobs and repeatable --set key.path=value overrides.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "infosft/experiments/commands.hpp"

namespace ex = infosft::experiments;

namespace {

constexpr const char* kDescriptions[] = {
    "run the proximal-update invariant suite and write a check report",
    "emit token-weight curves w(q) for a list of rules",
    "tabulate expected one-step KL change over a grid of base-probability bounds",
    "fine-tune a tabular policy and write its trace",
    "sweep rules, learning rates and epochs on a two-task problem",
    "estimate a policy's mean confidence on its own samples",
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token-weighted fine-tuning experiments on tabular policies"};
  app.require_subcommand(1);

  ex::CommandOptions options;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string selected;

  std::size_t i = 0;
  for (auto name : ex::command_names()) {
    auto* sub = app.add_subcommand(std::string(name), kDescriptions[i++]);
    sub->add_option("--config", config_path, "JSON config file layered over the defaults")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "seed overriding the config");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--jobs", options.jobs, "worker threads for sweeps")->check(CLI::PositiveNumber);
    sub->add_option("--set", options.assignments, "override one config value, key.path=value")->take_all();
    sub->callback([&selected, name] { selected = std::string(name); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ex::kExitOk : ex::kExitUsage;
  }

  auto* sub = app.get_subcommands().front();
  if (sub->count("--config")) options.config_file = config_path;
  if (sub->count("--seed")) options.seed = seed;
  options.out_dir = out_dir;
  return ex::run_command(selected, options, std::cout, std::cerr);
}
