// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#include "infosft/experiments/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace infosft::experiments {

using tabular::ContextMap;
using tabular::Sequence;
using tabular::Token;

const CategoricalDistribution& MarkovExpert::at(std::size_t context) const {
  if (context >= rows.size() || !rows[context]) {
    throw std::out_of_range("expert has no row for context " + std::to_string(context));
  }
  return *rows[context];
}

void TwoTaskSpec::validate() const {
  if (prompt_tokens_per_task < 1) throw std::invalid_argument("two-task: need >= 1 prompt token per task");
  if (alphabet_size < 2 * prompt_tokens_per_task + 2) {
    throw std::invalid_argument("two-task: alphabet too small for the prompt split");
  }
  if (response_length < 1) throw std::invalid_argument("two-task: response_length must be >= 1");
  if (sequences_per_task < 1) throw std::invalid_argument("two-task: sequences_per_task must be >= 1");
  if (!(expert_concentration > 0.0)) throw std::invalid_argument("two-task: expert_concentration must be > 0");
  if (!(shift_strength >= 0.0)) throw std::invalid_argument("two-task: shift_strength must be >= 0");
  if (!(pretrain_learning_rate > 0.0)) throw std::invalid_argument("two-task: pretrain_learning_rate must be > 0");
}

namespace {

CategoricalDistribution embed_response_row(std::span<const double> response_probs, std::size_t k,
                                           std::size_t first_response) {
  std::vector<double> row(k, 0.0);
  std::copy(response_probs.begin(), response_probs.end(), row.begin() + static_cast<std::ptrdiff_t>(first_response));
  return CategoricalDistribution(std::move(row), CategoricalDistribution::Mode::kNormalize);
}

tabular::SequenceDataset sample_dataset(const TwoTaskSpec& spec, const MarkovExpert& expert,
                                        const ContextMap& map, Token first_prompt, Rng& rng) {
  tabular::SequenceDataset ds{.alphabet_size = spec.alphabet_size, .sequences = {}};
  std::uniform_int_distribution<std::size_t> prompt(0, spec.prompt_tokens_per_task - 1);
  for (std::size_t i = 0; i < spec.sequences_per_task; ++i) {
    Sequence s{.tokens = {static_cast<Token>(first_prompt + prompt(rng))}, .prompt_length = 1};
    for (std::size_t t = 0; t < spec.response_length; ++t) {
      s.tokens.push_back(static_cast<Token>(sample(expert.at(map.context_id(s.tokens)), rng)));
    }
    ds.sequences.push_back(std::move(s));
  }
  return ds;
}

std::vector<std::size_t> response_contexts(const tabular::SequenceDataset& ds, const ContextMap& map) {
  std::set<std::size_t> seen;
  for (const auto& s : ds.sequences) {
    for (std::size_t t = s.prompt_length; t < s.tokens.size(); ++t) {
      seen.insert(map.context_id(std::span(s.tokens).first(t)));
    }
  }
  return {seen.begin(), seen.end()};
}

}  // namespace

TwoTaskProblem make_two_task_problem(const TwoTaskSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t k = spec.alphabet_size;
  const std::size_t p = spec.prompt_tokens_per_task;
  const std::size_t first_response = 2 * p;
  const std::size_t v = spec.response_vocab();
  const ContextMap map(1, k);
  const auto last_token_context = [&](std::size_t tok) {
    const Token t = static_cast<Token>(tok);
    return map.context_id(std::span<const Token>(&t, 1));
  };

  MarkovExpert expert_a, expert_b;
  expert_a.rows.resize(map.num_contexts());
  expert_b.rows.resize(map.num_contexts());
  for (std::size_t tok = 0; tok < k; ++tok) {
    const bool a_prompt = tok < p;
    const bool b_prompt = tok >= p && tok < first_response;
    const std::size_t ctx = last_token_context(tok);
    if (!b_prompt) {
      expert_a.rows[ctx] = embed_response_row(sample_dirichlet(v, spec.expert_concentration, rng), k, first_response);
    }
    if (!a_prompt) {
      auto row = sample_dirichlet(v, spec.expert_concentration, rng);
      if (expert_a.rows[ctx]) {
        for (std::size_t j = 0; j < v; ++j) {
          const double a = (*expert_a.rows[ctx])[first_response + j];
          row[j] *= std::pow(a + 1.0 / static_cast<double>(v), -spec.shift_strength);
        }
      }
      expert_b.rows[ctx] = embed_response_row(row, k, first_response);
    }
  }

  TwoTaskProblem out{
      .a = {.expert = std::move(expert_a), .data = {}, .probe_contexts = {}},
      .b = {.expert = std::move(expert_b), .data = {}, .probe_contexts = {}},
      .base = tabular::TabularPolicy::uniform(1, k),
  };
  out.a.data = sample_dataset(spec, out.a.expert, map, 0, rng);
  out.b.data = sample_dataset(spec, out.b.expert, map, static_cast<Token>(p), rng);
  out.a.probe_contexts = response_contexts(out.a.data, map);
  out.b.probe_contexts = response_contexts(out.b.data, map);

  tabular::TrainConfig pretrain{
      .rule = WeightRule::sft(),
      .learning_rate = spec.pretrain_learning_rate,
      .epochs = spec.pretrain_epochs,
      .batch_size = 0,
      .seed = 0,
      .q_clip_hi = 1.0 - 1e-6,
      .max_steps = std::nullopt,
      .probe_contexts = {},
  };
  out.base = tabular::train(out.base, out.a.data, pretrain).policy;
  return out;
}

double expert_kl(const tabular::TabularPolicy& policy, const MarkovExpert& expert,
                 std::span<const std::size_t> contexts) {
  if (contexts.empty()) throw std::invalid_argument("expert_kl: no contexts");
  double total = 0.0;
  for (std::size_t c : contexts) total += kl_divergence_log(expert.at(c), policy.log_probs(c));
  return total / static_cast<double>(contexts.size());
}

}  // namespace infosft::experiments
