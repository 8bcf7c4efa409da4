// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "infosft/distributions.hpp"
#include "infosft/weighting.hpp"

namespace infosft::tabular {

using Token = std::uint32_t;

/// A sequence had no response tokens to score.
class EmptyResponseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Maps a token history to a context id using its last `order` tokens.
/// Histories shorter than `order` get their own ids, so the map is total:
/// ids [offset(l), offset(l) + K^l) hold histories of length l <= order.
class ContextMap {
 public:
  ContextMap(std::size_t order, std::size_t alphabet_size);

  std::size_t order() const noexcept { return order_; }
  std::size_t alphabet_size() const noexcept { return alphabet_; }
  std::size_t num_contexts() const noexcept { return num_contexts_; }

  std::size_t context_id(std::span<const Token> history) const;

 private:
  std::size_t order_;
  std::size_t alphabet_;
  std::size_t num_contexts_;
  std::vector<std::size_t> offsets_;
};

/// Row-major matrix with one row per context and one column per token.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Next-token policy with an explicit logit row per context.
class TabularPolicy {
 public:
  TabularPolicy(ContextMap map, Matrix logits);

  /// All-zero logits, i.e. uniform rows.
  static TabularPolicy uniform(std::size_t order, std::size_t alphabet_size);
  /// Logits drawn i.i.d. N(0, scale^2).
  static TabularPolicy random(std::size_t order, std::size_t alphabet_size, double scale, Rng& rng);

  const ContextMap& context_map() const noexcept { return map_; }
  std::size_t alphabet_size() const noexcept { return map_.alphabet_size(); }
  std::size_t num_contexts() const noexcept { return map_.num_contexts(); }

  const Matrix& logits() const noexcept { return logits_; }
  Matrix& mutable_logits() noexcept { return logits_; }

  /// softmax(logits[c] / temperature); temperature must be positive.
  std::vector<double> probs(std::size_t context, double temperature = 1.0) const;
  std::vector<double> log_probs(std::size_t context) const;
  CategoricalDistribution distribution(std::size_t context) const;

  friend bool operator==(const TabularPolicy& a, const TabularPolicy& b) {
    return a.map_.order() == b.map_.order() && a.map_.alphabet_size() == b.map_.alphabet_size() &&
           a.logits_.data == b.logits_.data;
  }

 private:
  ContextMap map_;
  Matrix logits_;
};

void write_policy(std::ostream& out, const TabularPolicy& policy);
TabularPolicy read_policy(std::istream& in);

struct Sequence {
  std::vector<Token> tokens;
  std::size_t prompt_length = 0;

  std::size_t response_length() const noexcept { return tokens.size() - prompt_length; }
};

/// Prompt/response sequences over a K-token alphabet.
struct SequenceDataset {
  std::size_t alphabet_size = 0;
  std::vector<Sequence> sequences;

  /// Throws unless all tokens are < K and each sequence has >= 1 response token.
  void validate() const;
};

/// One sequence per line: `prompt_length tok tok ...`, after a header
/// carrying the alphabet size.
void write_dataset(std::ostream& out, const SequenceDataset& dataset);
SequenceDataset read_dataset(std::istream& in);

using Batch = std::span<const Sequence>;

struct LossAndGradient {
  /// Batch mean of (1/|y|) sum_t w_t log pi(y_t).
  double objective = 0.0;
  /// -objective.
  double loss = 0.0;
  /// d objective / d logits, with the weights held constant.
  Matrix gradient;
  /// Mean probability of the scored tokens.
  double mean_q = 0.0;
  std::size_t tokens = 0;
};

/// Weighted supervised objective and its gradient. Token weights are
/// token_weight(rule, min(q_t, q_clip_hi)) and carry no gradient; only
/// response positions are scored.
LossAndGradient weighted_loss_and_gradient(const TabularPolicy& policy, Batch batch,
                                           const WeightRule& rule, double q_clip_hi = 1.0 - 1e-6);

/// The per-token weights used by weighted_loss_and_gradient, in batch order.
std::vector<double> token_weights(const TabularPolicy& policy, Batch batch, const WeightRule& rule,
                                  double q_clip_hi = 1.0 - 1e-6);

/// The objective with externally supplied (frozen) per-token weights.
double weighted_objective(const TabularPolicy& policy, Batch batch, std::span<const double> weights);

/// Batch mean of (1/|y|) sum_t H_b(q_t).
double mean_binary_entropy(const TabularPolicy& policy, Batch batch);

struct DecompositionCheck {
  Matrix lhs;  ///< unclipped InfoSFT gradient
  Matrix rhs;  ///< logit(p_bar) * DFT gradient + gradient of mean_binary_entropy
  double max_abs_diff = 0.0;
};

/// Requires q_t < p_bar for every scored token.
DecompositionCheck entropy_decomposition_check(const TabularPolicy& policy, Batch batch,
                                               double p_bar);

struct TrainConfig {
  WeightRule rule = WeightRule::info_sft(0.93);
  double learning_rate = 0.1;
  std::size_t epochs = 1;
  /// 0 means full batch.
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  double q_clip_hi = 1.0 - 1e-6;
  /// Optional cap on optimizer steps; 0 runs no step at all.
  std::optional<std::size_t> max_steps;
  /// Contexts for the KL-to-base column; empty means every context.
  std::vector<std::size_t> probe_contexts;

  void validate() const;
};

struct TraceRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double mean_q = 0.0;
  double entropy = 0.0;
  double kl_to_base = 0.0;
};

/// One record per optimizer step. loss and mean_q refer to the batch before
/// the update; entropy and kl_to_base to the parameters after it.
struct TrainTrace {
  std::vector<TraceRecord> records;
};

/// Training produced a non-finite loss or parameter. Carries the records
/// written before the failure.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, TrainTrace partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const TrainTrace& partial_trace() const noexcept { return partial_; }

 private:
  TrainTrace partial_;
};

struct TrainResult {
  TabularPolicy policy;
  TrainTrace trace;
};

/// Plain gradient ascent on the weighted objective with a constant step.
/// Minibatches are reshuffled each epoch from `config.seed`.
TrainResult train(const TabularPolicy& initial, const SequenceDataset& dataset,
                  const TrainConfig& config);

/// Mean entropy of the policy rows visited at response positions.
double mean_response_entropy(const TabularPolicy& policy, Batch batch);

/// Mean probability of the expert tokens at response positions.
double mean_expert_token_prob(const TabularPolicy& policy, Batch batch);

/// Mean over `contexts` of KL(current(.|c) || base(.|c)); all contexts if empty.
double mean_kl_to_base(const TabularPolicy& current, const TabularPolicy& base,
                       std::span<const std::size_t> contexts);

/// Autoregressive continuation of `prompt` for max_len tokens. Temperature 0
/// is greedy with ties broken toward the lowest token index.
std::vector<Token> generate(const TabularPolicy& policy, std::span<const Token> prompt,
                            std::size_t max_len, double temperature, Rng& rng);

using ResponsePredicate =
    std::function<bool(std::span<const Token> prompt, std::span<const Token> response)>;

struct PromptEstimate {
  double estimate = 0.0;
  std::size_t tokens = 0;
  std::size_t kept_samples = 0;
};

struct PBarEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
  std::size_t tokens = 0;
  std::size_t kept_samples = 0;
  std::vector<PromptEstimate> per_prompt;
};

/// Thrown when the correctness predicate rejects every sample.
class AllFilteredError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean untempered model probability of self-generated tokens over kept
/// responses. Samples are drawn at `temperature`; no predicate keeps all.
PBarEstimate estimate_p_bar(const TabularPolicy& policy, std::span<const std::vector<Token>> prompts,
                            std::size_t num_samples, std::size_t max_len, double temperature,
                            const ResponsePredicate& predicate, Rng& rng);

}  // namespace infosft::tabular
