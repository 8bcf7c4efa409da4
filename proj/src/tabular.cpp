// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#include "infosft/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "infosft/numerics.hpp"
#include "infosft/proximal.hpp"
#include "infosft/text_format.hpp"

namespace infosft::tabular {

namespace {

constexpr const char* kPolicyHeader = "# infosft-policy v1";
constexpr const char* kDatasetHeader = "# infosft-dataset v1";

void softmax_into(std::span<const double> row, double temperature, std::span<double> out) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : row) hi = std::max(hi, v / temperature);
  double total = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    out[i] = std::exp(row[i] / temperature - hi);
    total += out[i];
  }
  for (double& v : out) v /= total;
}

double log_sum_exp(std::span<const double> row) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : row) hi = std::max(hi, v);
  double s = 0.0;
  for (double v : row) s += std::exp(v - hi);
  return hi + std::log(s);
}

void require_finite_logits(const TabularPolicy& policy) {
  for (double v : policy.logits().data) {
    if (!std::isfinite(v)) throw std::domain_error("policy has non-finite logits");
  }
}

/// Calls fn(context, target, response_length) for every scored position.
template <class Fn>
void for_each_response_token(const TabularPolicy& policy, Batch batch, Fn&& fn) {
  const auto& map = policy.context_map();
  for (const auto& seq : batch) {
    if (seq.tokens.size() <= seq.prompt_length) {
      throw EmptyResponseError("sequence has no response tokens");
    }
    const std::size_t len = seq.response_length();
    for (std::size_t t = seq.prompt_length; t < seq.tokens.size(); ++t) {
      const std::size_t ctx = map.context_id(std::span<const Token>(seq.tokens.data(), t));
      fn(ctx, static_cast<std::size_t>(seq.tokens[t]), len);
    }
  }
}

double clipped_q(double q, double q_clip_hi) {
  return std::clamp(q, std::numeric_limits<double>::min(), q_clip_hi);
}

}  // namespace

// ---------------------------------------------------------------------------
// ContextMap

ContextMap::ContextMap(std::size_t order, std::size_t alphabet_size)
    : order_(order), alphabet_(alphabet_size) {
  if (order > 2) throw std::invalid_argument("context order must be 0, 1 or 2");
  if (alphabet_size < 2) throw std::invalid_argument("alphabet must have at least 2 tokens");
  std::size_t offset = 0;
  std::size_t block = 1;
  for (std::size_t l = 0; l <= order; ++l) {
    offsets_.push_back(offset);
    offset += block;
    block *= alphabet_size;
  }
  num_contexts_ = offset;
}

std::size_t ContextMap::context_id(std::span<const Token> history) const {
  const std::size_t len = std::min(history.size(), order_);
  std::size_t code = 0;
  for (std::size_t i = history.size() - len; i < history.size(); ++i) {
    if (history[i] >= alphabet_) throw std::out_of_range("token outside the alphabet");
    code = code * alphabet_ + history[i];
  }
  return offsets_[len] + code;
}

// ---------------------------------------------------------------------------
// TabularPolicy

TabularPolicy::TabularPolicy(ContextMap map, Matrix logits) : map_(map), logits_(std::move(logits)) {
  if (logits_.rows != map_.num_contexts() || logits_.cols != map_.alphabet_size() ||
      logits_.data.size() != logits_.rows * logits_.cols) {
    throw std::invalid_argument("logit matrix shape does not match the context map");
  }
}

TabularPolicy TabularPolicy::uniform(std::size_t order, std::size_t alphabet_size) {
  ContextMap map(order, alphabet_size);
  return TabularPolicy(map, Matrix(map.num_contexts(), alphabet_size));
}

TabularPolicy TabularPolicy::random(std::size_t order, std::size_t alphabet_size, double scale,
                                    Rng& rng) {
  ContextMap map(order, alphabet_size);
  Matrix logits(map.num_contexts(), alphabet_size);
  std::normal_distribution<double> normal(0.0, scale);
  for (double& v : logits.data) v = normal(rng);
  return TabularPolicy(map, std::move(logits));
}

std::vector<double> TabularPolicy::probs(std::size_t context, double temperature) const {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  std::vector<double> out(alphabet_size());
  softmax_into(logits_.row(context), temperature, out);
  return out;
}

std::vector<double> TabularPolicy::log_probs(std::size_t context) const {
  const auto row = logits_.row(context);
  const double lse = log_sum_exp(row);
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] - lse;
  return out;
}

CategoricalDistribution TabularPolicy::distribution(std::size_t context) const {
  return CategoricalDistribution(probs(context), CategoricalDistribution::Mode::kNormalize);
}

void write_policy(std::ostream& out, const TabularPolicy& policy) {
  const auto& logits = policy.logits();
  out << kPolicyHeader << '\n';
  out << "order " << policy.context_map().order() << '\n';
  out << "alphabet " << policy.alphabet_size() << '\n';
  out << "contexts " << policy.num_contexts() << '\n';
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto row = logits.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ' ';
      out << text::format_double(row[c]);
    }
    out << '\n';
  }
}

TabularPolicy read_policy(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kPolicyHeader) {
    throw std::invalid_argument("policy file: missing '" + std::string(kPolicyHeader) + "' header");
  }
  const auto read_field = [&](const std::string& key) {
    if (!std::getline(in, line)) throw std::invalid_argument("policy file: truncated header");
    const auto tokens = text::split_ws(line);
    if (tokens.size() != 2 || tokens[0] != key) {
      throw std::invalid_argument("policy file: expected '" + key + " <n>'");
    }
    return static_cast<std::size_t>(text::parse_int(tokens[1]));
  };
  const std::size_t order = read_field("order");
  const std::size_t alphabet = read_field("alphabet");
  const std::size_t contexts = read_field("contexts");
  ContextMap map(order, alphabet);
  if (contexts != map.num_contexts()) {
    throw std::invalid_argument("policy file: context count does not match order/alphabet");
  }
  Matrix logits(contexts, alphabet);
  for (std::size_t r = 0; r < contexts; ++r) {
    if (!std::getline(in, line)) throw std::invalid_argument("policy file: truncated rows");
    const auto tokens = text::split_ws(line);
    if (tokens.size() != alphabet) throw std::invalid_argument("policy file: bad row width");
    for (std::size_t c = 0; c < alphabet; ++c) logits(r, c) = text::parse_double(tokens[c]);
  }
  return TabularPolicy(map, std::move(logits));
}

// ---------------------------------------------------------------------------
// Datasets

void SequenceDataset::validate() const {
  if (alphabet_size < 2) throw std::invalid_argument("dataset: alphabet must have >= 2 tokens");
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& seq = sequences[i];
    if (seq.tokens.size() < seq.prompt_length + 1) {
      throw EmptyResponseError("dataset: sequence " + std::to_string(i) + " has no response");
    }
    for (Token t : seq.tokens) {
      if (t >= alphabet_size) {
        throw std::out_of_range("dataset: sequence " + std::to_string(i) +
                                " has a token outside the alphabet");
      }
    }
  }
}

void write_dataset(std::ostream& out, const SequenceDataset& dataset) {
  out << kDatasetHeader << '\n';
  out << "# alphabet " << dataset.alphabet_size << '\n';
  for (const auto& seq : dataset.sequences) {
    out << seq.prompt_length;
    for (Token t : seq.tokens) out << ' ' << t;
    out << '\n';
  }
}

SequenceDataset read_dataset(std::istream& in) {
  SequenceDataset dataset;
  std::string line;
  std::size_t max_token = 0;
  bool alphabet_given = false;
  while (std::getline(in, line)) {
    const auto tokens = text::split_ws(line);
    if (tokens.empty()) continue;
    if (tokens[0] == "#") {
      if (tokens.size() == 3 && tokens[1] == "alphabet") {
        dataset.alphabet_size = static_cast<std::size_t>(text::parse_int(tokens[2]));
        alphabet_given = true;
      }
      continue;
    }
    if (tokens[0][0] == '#') continue;
    Sequence seq;
    seq.prompt_length = static_cast<std::size_t>(text::parse_int(tokens[0]));
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const auto t = text::parse_int(tokens[i]);
      if (t < 0) throw std::out_of_range("dataset: negative token");
      seq.tokens.push_back(static_cast<Token>(t));
      max_token = std::max<std::size_t>(max_token, static_cast<std::size_t>(t));
    }
    dataset.sequences.push_back(std::move(seq));
  }
  if (!alphabet_given) dataset.alphabet_size = std::max<std::size_t>(2, max_token + 1);
  dataset.validate();
  return dataset;
}

// ---------------------------------------------------------------------------
// Weighted objective

LossAndGradient weighted_loss_and_gradient(const TabularPolicy& policy, Batch batch,
                                           const WeightRule& rule, double q_clip_hi) {
  if (batch.empty()) throw EmptyResponseError("empty batch");
  if (!(q_clip_hi > 0.0 && q_clip_hi <= 1.0)) throw std::invalid_argument("q_clip_hi must lie in (0, 1]");
  require_finite_logits(policy);

  const std::size_t k = policy.alphabet_size();
  LossAndGradient out;
  out.gradient = Matrix(policy.num_contexts(), k);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  std::vector<double> probs(k);
  double q_sum = 0.0;

  for_each_response_token(policy, batch, [&](std::size_t ctx, std::size_t target, std::size_t len) {
    const auto row = policy.logits().row(ctx);
    softmax_into(row, 1.0, probs);
    const double log_q = row[target] - log_sum_exp(row);
    const double q = probs[target];
    const double w = token_weight(rule, clipped_q(q, q_clip_hi));
    const double scale = w * inv_batch / static_cast<double>(len);
    out.objective += scale * log_q;
    // d log softmax(row)[target] / d row = one_hot(target) - softmax(row)
    auto grad = out.gradient.row(ctx);
    for (std::size_t j = 0; j < k; ++j) grad[j] -= scale * probs[j];
    grad[target] += scale;
    q_sum += q;
    ++out.tokens;
  });

  out.loss = -out.objective;
  out.mean_q = q_sum / static_cast<double>(out.tokens);
  return out;
}

std::vector<double> token_weights(const TabularPolicy& policy, Batch batch, const WeightRule& rule,
                                  double q_clip_hi) {
  std::vector<double> out;
  for_each_response_token(policy, batch, [&](std::size_t ctx, std::size_t target, std::size_t) {
    const double q = policy.probs(ctx)[target];
    out.push_back(token_weight(rule, clipped_q(q, q_clip_hi)));
  });
  return out;
}

double weighted_objective(const TabularPolicy& policy, Batch batch, std::span<const double> weights) {
  double total = 0.0;
  std::size_t i = 0;
  for_each_response_token(policy, batch, [&](std::size_t ctx, std::size_t target, std::size_t len) {
    if (i >= weights.size()) throw std::invalid_argument("weighted_objective: too few weights");
    const auto row = policy.logits().row(ctx);
    total += weights[i++] * (row[target] - log_sum_exp(row)) / static_cast<double>(len);
  });
  if (i != weights.size()) throw std::invalid_argument("weighted_objective: too many weights");
  return total / static_cast<double>(batch.size());
}

double mean_binary_entropy(const TabularPolicy& policy, Batch batch) {
  double total = 0.0;
  for_each_response_token(policy, batch, [&](std::size_t ctx, std::size_t target, std::size_t len) {
    total += numerics::binary_entropy(policy.probs(ctx)[target]) / static_cast<double>(len);
  });
  return total / static_cast<double>(batch.size());
}

DecompositionCheck entropy_decomposition_check(const TabularPolicy& policy, Batch batch,
                                               double p_bar) {
  if (!(p_bar > 0.0 && p_bar < 1.0)) throw DomainError("p_bar must lie in (0, 1)");
  const std::size_t k = policy.alphabet_size();
  Matrix entropy_grad(policy.num_contexts(), k);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  for_each_response_token(policy, batch, [&](std::size_t ctx, std::size_t target, std::size_t len) {
    const auto probs = policy.probs(ctx);
    const double q = probs[target];
    if (!(q < p_bar)) {
      throw proximal::PreconditionViolation("entropy decomposition requires q < p_bar, got q = " +
                                            text::format_double(q));
    }
    // dH_b(q)/dq = -logit(q); dq/d row = q (one_hot(target) - softmax(row))
    const double coeff = -numerics::logit(q) * q * inv_batch / static_cast<double>(len);
    auto grad = entropy_grad.row(ctx);
    for (std::size_t j = 0; j < k; ++j) grad[j] -= coeff * probs[j];
    grad[target] += coeff;
  });

  DecompositionCheck out;
  out.lhs = weighted_loss_and_gradient(policy, batch, WeightRule::calibrated(numerics::logit(p_bar)), 1.0)
                .gradient;
  const auto dft = weighted_loss_and_gradient(policy, batch, WeightRule::dft(), 1.0).gradient;
  out.rhs = Matrix(policy.num_contexts(), k);
  const double lp = numerics::logit(p_bar);
  for (std::size_t i = 0; i < out.rhs.data.size(); ++i) {
    out.rhs.data[i] = lp * dft.data[i] + entropy_grad.data[i];
    out.max_abs_diff = std::max(out.max_abs_diff, std::abs(out.rhs.data[i] - out.lhs.data[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(q_clip_hi > 0.0 && q_clip_hi < 1.0)) throw std::invalid_argument("q_clip_hi must lie in (0, 1)");
}

double mean_response_entropy(const TabularPolicy& policy, Batch batch) {
  double total = 0.0;
  std::size_t n = 0;
  for_each_response_token(policy, batch, [&](std::size_t ctx, std::size_t, std::size_t) {
    total += entropy(policy.distribution(ctx));
    ++n;
  });
  return n ? total / static_cast<double>(n) : 0.0;
}

double mean_expert_token_prob(const TabularPolicy& policy, Batch batch) {
  double total = 0.0;
  std::size_t n = 0;
  for_each_response_token(policy, batch, [&](std::size_t ctx, std::size_t target, std::size_t) {
    total += policy.probs(ctx)[target];
    ++n;
  });
  return n ? total / static_cast<double>(n) : 0.0;
}

double mean_kl_to_base(const TabularPolicy& current, const TabularPolicy& base,
                       std::span<const std::size_t> contexts) {
  if (current.num_contexts() != base.num_contexts() ||
      current.alphabet_size() != base.alphabet_size()) {
    throw std::invalid_argument("mean_kl_to_base: policy shapes differ");
  }
  double total = 0.0;
  const auto kl_at = [&](std::size_t c) {
    const auto lp = current.log_probs(c);
    const auto lq = base.log_probs(c);
    double kl = 0.0;
    for (std::size_t j = 0; j < lp.size(); ++j) {
      const double pj = std::exp(lp[j]);
      if (pj > 0.0) kl += pj * (lp[j] - lq[j]);
    }
    return kl;
  };
  if (contexts.empty()) {
    for (std::size_t c = 0; c < current.num_contexts(); ++c) total += kl_at(c);
    return total / static_cast<double>(current.num_contexts());
  }
  for (std::size_t c : contexts) total += kl_at(c);
  return total / static_cast<double>(contexts.size());
}

TrainResult train(const TabularPolicy& initial, const SequenceDataset& dataset,
                  const TrainConfig& config) {
  config.validate();
  dataset.validate();
  if (dataset.alphabet_size != initial.alphabet_size()) {
    throw std::invalid_argument("train: dataset and policy alphabets differ");
  }
  if (dataset.sequences.empty()) throw std::invalid_argument("train: empty dataset");

  TabularPolicy policy = initial;
  TrainTrace trace;
  Rng rng(config.seed);
  const std::size_t n = dataset.sequences.size();
  const std::size_t batch_size = config.batch_size == 0 ? n : std::min(config.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Sequence> batch;
  batch.reserve(batch_size);
  std::size_t step = 0;
  const std::size_t step_cap = config.max_steps.value_or(std::numeric_limits<std::size_t>::max());

  for (std::size_t epoch = 0; epoch < config.epochs && step < step_cap; ++epoch) {
    if (batch_size < n) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n && step < step_cap; start += batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(n, start + batch_size); ++i) {
        batch.push_back(dataset.sequences[order[i]]);
      }
      LossAndGradient lg;
      try {
        lg = weighted_loss_and_gradient(policy, batch, config.rule, config.q_clip_hi);
      } catch (const std::domain_error& e) {
        throw DivergenceError(std::string("train: ") + e.what() + " at step " + std::to_string(step),
                              trace);
      }
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("train: non-finite loss at step " + std::to_string(step), trace);
      }
      auto& logits = policy.mutable_logits().data;
      bool finite = true;
      for (std::size_t i = 0; i < logits.size(); ++i) {
        logits[i] += config.learning_rate * lg.gradient.data[i];
        finite = finite && std::isfinite(logits[i]);
      }
      if (!finite) {
        throw DivergenceError("train: non-finite logits after step " + std::to_string(step), trace);
      }
      trace.records.push_back(TraceRecord{
          .step = step,
          .loss = lg.loss,
          .mean_q = lg.mean_q,
          .entropy = mean_response_entropy(policy, batch),
          .kl_to_base = mean_kl_to_base(policy, initial, config.probe_contexts),
      });
      ++step;
    }
  }
  return {std::move(policy), std::move(trace)};
}

// ---------------------------------------------------------------------------
// Generation and p_bar estimation

std::vector<Token> generate(const TabularPolicy& policy, std::span<const Token> prompt,
                            std::size_t max_len, double temperature, Rng& rng) {
  if (temperature < 0.0 || !std::isfinite(temperature)) {
    throw std::invalid_argument("temperature must be >= 0");
  }
  std::vector<Token> history(prompt.begin(), prompt.end());
  std::vector<Token> response;
  response.reserve(max_len);
  const auto& map = policy.context_map();
  for (std::size_t t = 0; t < max_len; ++t) {
    const std::size_t ctx = map.context_id(history);
    Token next = 0;
    if (temperature == 0.0) {
      const auto row = policy.logits().row(ctx);
      // max_element returns the first maximum, i.e. the lowest index on ties.
      next = static_cast<Token>(std::max_element(row.begin(), row.end()) - row.begin());
    } else {
      const CategoricalDistribution dist(policy.probs(ctx, temperature),
                                         CategoricalDistribution::Mode::kNormalize);
      next = static_cast<Token>(sample(dist, rng));
    }
    history.push_back(next);
    response.push_back(next);
  }
  return response;
}

PBarEstimate estimate_p_bar(const TabularPolicy& policy, std::span<const std::vector<Token>> prompts,
                            std::size_t num_samples, std::size_t max_len, double temperature,
                            const ResponsePredicate& predicate, Rng& rng) {
  if (num_samples < 1) throw std::invalid_argument("estimate_p_bar: num_samples must be >= 1");
  if (max_len < 1) throw std::invalid_argument("estimate_p_bar: max_len must be >= 1");
  if (prompts.empty()) throw std::invalid_argument("estimate_p_bar: no prompts");

  PBarEstimate out;
  double sum = 0.0;
  double sum_sq = 0.0;
  const auto& map = policy.context_map();
  for (const auto& prompt : prompts) {
    PromptEstimate per_prompt;
    double prompt_sum = 0.0;
    for (std::size_t s = 0; s < num_samples; ++s) {
      const auto response = generate(policy, prompt, max_len, temperature, rng);
      if (predicate && !predicate(prompt, response)) continue;
      std::vector<Token> history(prompt.begin(), prompt.end());
      for (Token tok : response) {
        const double prob = policy.probs(map.context_id(history))[tok];
        prompt_sum += prob;
        sum += prob;
        sum_sq += prob * prob;
        ++per_prompt.tokens;
        history.push_back(tok);
      }
      ++per_prompt.kept_samples;
    }
    per_prompt.estimate =
        per_prompt.tokens ? prompt_sum / static_cast<double>(per_prompt.tokens) : 0.0;
    out.tokens += per_prompt.tokens;
    out.kept_samples += per_prompt.kept_samples;
    out.per_prompt.push_back(per_prompt);
  }
  if (out.tokens == 0) {
    throw AllFilteredError("estimate_p_bar: the correctness predicate rejected every sample");
  }
  const auto n = static_cast<double>(out.tokens);
  out.estimate = sum / n;
  const double variance = n > 1 ? std::max(0.0, (sum_sq - n * out.estimate * out.estimate) / (n - 1)) : 0.0;
  out.standard_error = std::sqrt(variance / n);
  return out;
}

}  // namespace infosft::tabular
