// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "infosft/distributions.hpp"
#include "infosft/tabular.hpp"

namespace infosft::experiments {

/// Order-1 Markov expert: one next-token distribution per context id of an
/// order-1 ContextMap. Contexts the task never visits have no row.
struct MarkovExpert {
  std::vector<std::optional<CategoricalDistribution>> rows;

  const CategoricalDistribution& at(std::size_t context) const;
};

struct SyntheticTask {
  MarkovExpert expert;
  tabular::SequenceDataset data;
  /// Sorted distinct contexts at response positions of `data`.
  std::vector<std::size_t> probe_contexts;
};

/// Two tasks over one alphabet. Prompt tokens are disjoint between tasks:
/// task A prompts use [0, P), task B prompts use [P, 2P). Responses are drawn
/// from [2P, K) by each task's Markov expert, so response contexts are shared
/// and fitting B moves rows that A relies on.
struct TwoTaskSpec {
  std::size_t alphabet_size = 12;
  std::size_t prompt_tokens_per_task = 2;
  std::size_t response_length = 4;
  std::size_t sequences_per_task = 200;
  /// Dirichlet concentration of each expert row over the response tokens.
  double expert_concentration = 0.5;
  /// Task-B rows are reweighted by (expert_A + 1/V)^(-shift_strength), V the
  /// number of response tokens, which pushes B toward tokens A rarely emits.
  double shift_strength = 1.0;
  /// SFT pretraining of the base policy on task A, from uniform logits.
  double pretrain_learning_rate = 2.0;
  std::size_t pretrain_epochs = 50;

  void validate() const;
  std::size_t response_vocab() const noexcept { return alphabet_size - 2 * prompt_tokens_per_task; }
};

struct TwoTaskProblem {
  SyntheticTask a;
  SyntheticTask b;
  /// Order-1 policy pretrained on task A.
  tabular::TabularPolicy base;
};

TwoTaskProblem make_two_task_problem(const TwoTaskSpec& spec, Rng& rng);

/// Mean over `contexts` of KL(expert(.|c) || policy(.|c)).
double expert_kl(const tabular::TabularPolicy& policy, const MarkovExpert& expert,
                 std::span<const std::size_t> contexts);

}  // namespace infosft::experiments
