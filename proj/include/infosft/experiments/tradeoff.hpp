// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "infosft/experiments/synthetic.hpp"
#include "infosft/weighting.hpp"

namespace infosft::experiments {

struct TradeoffSpec {
  TwoTaskSpec task;
  std::vector<WeightRule> rules;
  std::vector<double> learning_rates;
  std::vector<std::size_t> epochs;
  /// One synthetic task draw (and pretrained base) per seed.
  std::vector<std::uint64_t> seeds;
  std::size_t batch_size = 20;

  void validate() const;
};

/// One fine-tuning run of the task-A base on task B. KL fields are NaN
/// unless status is "ok".
struct TradeoffRecord {
  std::string rule;
  double learning_rate = 0.0;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  /// Mean KL(expert_B || pi) over task-B probe contexts.
  double new_task_fit = 0.0;
  /// Mean KL(pi || base) over task-A probe contexts.
  double retention_kl = 0.0;
  /// Mean KL(expert_A || pi) over task-A probe contexts.
  double prior_task_fit = 0.0;
  /// Mean response entropy on the task-B data.
  double terminal_entropy = 0.0;
  std::size_t steps = 0;
  std::string status = "ok";
};

/// Records in cell order seed, rule, learning rate, epochs, whatever `jobs`
/// is. A failing cell is recorded with its status and does not stop the run.
std::vector<TradeoffRecord> run_tradeoff(const TradeoffSpec& spec, std::size_t jobs = 1);

/// "infosft" for "infosft(0.93)".
std::string rule_family(const std::string& rule_name);

struct MatchedComparison {
  std::size_t comparisons = 0;
  /// Comparisons where the first family's new_task_fit <= the second's.
  std::size_t wins = 0;
  double win_rate() const noexcept {
    return comparisons ? static_cast<double>(wins) / static_cast<double>(comparisons) : 0.0;
  }
};

/// Over every pair of successful cells from the same seed, one from each
/// family, whose retention_kl differ by at most `tolerance` times the larger.
MatchedComparison matched_retention_comparison(std::span<const TradeoffRecord> records, const std::string& family_a,
                                               const std::string& family_b, double tolerance);

/// Indices of the points not dominated when minimizing both coordinates,
/// ordered by the first coordinate.
std::vector<std::size_t> pareto_frontier(std::span<const std::pair<double, double>> points);

}  // namespace infosft::experiments
