// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "infosft/experiments/config.hpp"

namespace infosft::experiments {

struct CommandOptions {
  std::optional<std::filesystem::path> config_file;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir = ".";
  std::size_t jobs = 1;
  std::vector<std::string> assignments;
};

/// Exit statuses shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Resolves the config, creates the output directory, writes
/// resolved_config.json and dispatches. Errors are reported on `err` and
/// mapped to an exit status; nothing propagates.
int run_command(std::string_view command, const CommandOptions& options, std::ostream& out, std::ostream& err);

// The commands proper take a resolved config and an existing output
// directory. They throw UsageError for invalid input.

/// verify_report.csv and verify_report.txt; returns kExitFailure if any
/// check FAILED.
int cmd_verify(const Json& config, const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err);
/// weight_curves.csv and weight_curves.svg.
int cmd_weight_curves(const Json& config, const std::filesystem::path& out_dir, std::ostream& out);
/// population_sweep.csv and population_sweep.svg.
int cmd_population_sweep(const Json& config, const std::filesystem::path& out_dir, std::ostream& out);
/// trace.csv and policy.txt, plus dataset.txt and base_policy.txt when the
/// run uses the synthetic task.
int cmd_train(const Json& config, const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err);
/// tradeoff.csv, tradeoff_summary.csv and tradeoff.svg.
int cmd_tradeoff(const Json& config, const std::filesystem::path& out_dir, std::size_t jobs, std::ostream& out);
/// pbar.csv and pbar_summary.csv.
int cmd_estimate_pbar(const Json& config, const std::filesystem::path& out_dir, std::ostream& out);

}  // namespace infosft::experiments
