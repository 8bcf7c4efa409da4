// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "infosft/numerics.hpp"
#include "infosft/proximal.hpp"
#include "infosft/tabular.hpp"

using namespace infosft;
using namespace infosft::tabular;

namespace {

SequenceDataset random_dataset(std::size_t k, std::size_t count, std::size_t max_prompt,
                               std::size_t max_response, Rng& rng) {
  SequenceDataset ds{.alphabet_size = k};
  std::uniform_int_distribution<Token> tok(0, static_cast<Token>(k - 1));
  std::uniform_int_distribution<std::size_t> plen(0, max_prompt);
  std::uniform_int_distribution<std::size_t> rlen(1, max_response);
  for (std::size_t i = 0; i < count; ++i) {
    Sequence s;
    s.prompt_length = plen(rng);
    const std::size_t total = s.prompt_length + rlen(rng);
    for (std::size_t t = 0; t < total; ++t) s.tokens.push_back(tok(rng));
    ds.sequences.push_back(std::move(s));
  }
  return ds;
}

/// Single context, K = 2, logits chosen so that token 0 has probability q.
TabularPolicy two_token_policy(double q) {
  Matrix logits(1, 2);
  logits(0, 0) = numerics::logit(q);
  return TabularPolicy(ContextMap(0, 2), logits);
}

double max_abs(const Matrix& m) {
  double out = 0.0;
  for (double v : m.data) out = std::max(out, std::abs(v));
  return out;
}

std::vector<WeightRule> all_rules() {
  return {WeightRule::sft(), WeightRule::dft(), WeightRule::info_sft(0.93), WeightRule::info_sft(0.5),
          WeightRule::calibrated(1.5), WeightRule::oracle(0.8)};
}

}  // namespace

TEST_CASE("context map is total and compact") {
  for (std::size_t order : {0u, 1u, 2u}) {
    const ContextMap map(order, 4);
    std::size_t expected = 0;
    for (std::size_t l = 0, pow = 1; l <= order; ++l, pow *= 4) expected += pow;
    CHECK(map.num_contexts() == expected);
    std::vector<bool> seen(map.num_contexts(), false);
    std::vector<Token> history;
    seen[map.context_id(history)] = true;
    for (Token a = 0; a < 4; ++a) {
      const std::vector<Token> h1{a};
      seen[map.context_id(h1)] = true;
      for (Token b = 0; b < 4; ++b) {
        const std::vector<Token> h2{a, b};
        seen[map.context_id(h2)] = true;
        const std::vector<Token> h3{3, 1, a, b};
        CHECK(map.context_id(h3) < map.num_contexts());
        if (order <= 2) CHECK(map.context_id(h3) == map.context_id(std::vector<Token>{1, a, b}));
      }
    }
    for (bool s : seen) CHECK(s);
  }
  CHECK_THROWS(ContextMap(3, 4));
  CHECK_THROWS(ContextMap(1, 1));
  const std::vector<Token> bad{7};
  CHECK_THROWS_AS(ContextMap(1, 4).context_id(bad), std::out_of_range);
}

TEST_CASE("policy rows are valid distributions") {
  Rng rng(3);
  const auto policy = TabularPolicy::random(2, 6, 5.0, rng);
  for (std::size_t c = 0; c < policy.num_contexts(); ++c) {
    const auto p = policy.probs(c);
    double total = 0.0;
    for (double v : p) total += v;
    CHECK(std::abs(total - 1.0) <= 1e-12);
    const auto lp = policy.log_probs(c);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::exp(lp[i]) == doctest::Approx(p[i]).epsilon(1e-12));
    CHECK_NOTHROW(policy.distribution(c));
  }
  CHECK_THROWS(policy.probs(0, 0.0));
}

TEST_CASE("weighted_loss_and_gradient examples") {
  SUBCASE("DFT, one token with q = 0.5 on K = 2") {
    const auto policy = TabularPolicy::uniform(0, 2);
    const std::vector<Sequence> batch{{.tokens = {0}, .prompt_length = 0}};
    const auto lg = weighted_loss_and_gradient(policy, batch, WeightRule::dft());
    CHECK(lg.gradient(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(lg.gradient(0, 1) == doctest::Approx(-0.25).epsilon(1e-15));
    CHECK(lg.mean_q == 0.5);
    CHECK(lg.tokens == 1);
    // Frozen-weight finite difference.
    const auto weights = token_weights(policy, batch, WeightRule::dft());
    REQUIRE(weights.size() == 1);
    CHECK(weights[0] == 0.5);
    auto plus = policy;
    auto minus = policy;
    plus.mutable_logits()(0, 0) += 1e-5;
    minus.mutable_logits()(0, 0) -= 1e-5;
    const double fd = (weighted_objective(plus, batch, weights) - weighted_objective(minus, batch, weights)) / 2e-5;
    CHECK(fd == doctest::Approx(0.25).epsilon(1e-8));
  }
  SUBCASE("SFT is the plain log-likelihood gradient") {
    Rng rng(9);
    const auto policy = TabularPolicy::random(1, 5, 1.0, rng);
    const auto ds = random_dataset(5, 6, 2, 4, rng);
    const auto lg = weighted_loss_and_gradient(policy, ds.sequences, WeightRule::sft());
    Matrix expected(policy.num_contexts(), 5);
    double nll = 0.0;
    for (const auto& s : ds.sequences) {
      const double inv = 1.0 / static_cast<double>(s.response_length() * ds.sequences.size());
      for (std::size_t t = s.prompt_length; t < s.tokens.size(); ++t) {
        const auto ctx = policy.context_map().context_id(std::span(s.tokens).first(t));
        const auto p = policy.probs(ctx);
        for (std::size_t j = 0; j < 5; ++j) expected(ctx, j) += inv * ((j == s.tokens[t]) - p[j]);
        nll -= inv * std::log(p[s.tokens[t]]);
      }
    }
    for (std::size_t i = 0; i < expected.data.size(); ++i) {
      CHECK(std::abs(lg.gradient.data[i] - expected.data[i]) <= 1e-14);
    }
    CHECK(lg.loss == doctest::Approx(nll).epsilon(1e-13));
    CHECK(lg.objective == -lg.loss);
  }
  SUBCASE("InfoSFT(0.93) ignores a token with q = 0.95") {
    const auto policy = two_token_policy(0.95);
    const std::vector<Sequence> batch{{.tokens = {0}, .prompt_length = 0}};
    const auto lg = weighted_loss_and_gradient(policy, batch, WeightRule::info_sft(0.93));
    CHECK(max_abs(lg.gradient) == 0.0);
  }
  SUBCASE("errors") {
    const auto policy = TabularPolicy::uniform(1, 3);
    const std::vector<Sequence> empty_response{{.tokens = {0, 1}, .prompt_length = 2}};
    CHECK_THROWS_AS(weighted_loss_and_gradient(policy, empty_response, WeightRule::sft()), EmptyResponseError);
    auto broken = policy;
    broken.mutable_logits()(0, 0) = std::nan("");
    const std::vector<Sequence> ok{{.tokens = {0, 1}, .prompt_length = 1}};
    CHECK_THROWS_AS(weighted_loss_and_gradient(broken, ok, WeightRule::sft()), std::domain_error);
  }
}

TEST_CASE("prompt tokens are never scored") {
  Rng rng(4);
  const auto policy = TabularPolicy::random(1, 4, 1.0, rng);
  const std::vector<Sequence> with_prompt{{.tokens = {2, 3, 1}, .prompt_length = 2}};
  const auto lg = weighted_loss_and_gradient(policy, with_prompt, WeightRule::sft());
  CHECK(lg.tokens == 1);
  const auto ctx = policy.context_map().context_id(std::vector<Token>{3});
  for (std::size_t c = 0; c < policy.num_contexts(); ++c) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (c != ctx) CHECK(lg.gradient(c, j) == 0.0);
    }
  }
}

TEST_CASE("analytic gradient matches central finite differences with frozen weights") {
  Rng rng(2024);
  const double h = 1e-5;
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(trial % 7);
    const std::size_t order = k <= 4 ? 1 : 0;
    const auto policy = TabularPolicy::random(order, k, 1.5, rng);
    REQUIRE(policy.num_contexts() <= 20);
    const auto ds = random_dataset(k, 5, 2, 4, rng);
    for (const auto& rule : all_rules()) {
      const auto lg = weighted_loss_and_gradient(policy, ds.sequences, rule);
      const auto weights = token_weights(policy, ds.sequences, rule);
      CHECK(weighted_objective(policy, ds.sequences, weights) == doctest::Approx(lg.objective).epsilon(1e-13));
      for (std::size_t i = 0; i < lg.gradient.data.size(); ++i) {
        auto plus = policy;
        auto minus = policy;
        plus.mutable_logits().data[i] += h;
        minus.mutable_logits().data[i] -= h;
        const double fd = (weighted_objective(plus, ds.sequences, weights) -
                           weighted_objective(minus, ds.sequences, weights)) / (2 * h);
        const double an = lg.gradient.data[i];
        const double scale = std::max(std::abs(an), 1e-3);
        CHECK(std::abs(fd - an) / scale <= 1e-5);
      }
    }
  }
}

TEST_CASE("InfoSFT gradient is the SFT gradient times the token weight, per position") {
  Rng rng(55);
  const auto policy = TabularPolicy::random(1, 6, 2.0, rng);
  const auto ds = random_dataset(6, 30, 2, 3, rng);
  const auto rule = WeightRule::info_sft(0.93);
  for (const auto& seq : ds.sequences) {
    for (std::size_t t = seq.prompt_length; t < seq.tokens.size(); ++t) {
      // A one-token view of position t: same history, same target.
      const Sequence single{.tokens = std::vector<Token>(seq.tokens.begin(), seq.tokens.begin() + t + 1),
                            .prompt_length = t};
      const std::vector<Sequence> batch{single};
      const auto info = weighted_loss_and_gradient(policy, batch, rule);
      const auto sft = weighted_loss_and_gradient(policy, batch, WeightRule::sft());
      const double w = token_weight(rule, info.mean_q);
      for (std::size_t i = 0; i < info.gradient.data.size(); ++i) {
        CHECK(std::abs(info.gradient.data[i] - w * sft.gradient.data[i]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("entropy decomposition") {
  SUBCASE("single token with q = 0.5") {
    const auto policy = two_token_policy(0.5);
    const std::vector<Sequence> batch{{.tokens = {0}, .prompt_length = 0}};
    const auto check = entropy_decomposition_check(policy, batch, 0.93);
    const auto dft = weighted_loss_and_gradient(policy, batch, WeightRule::dft());
    // Coefficient on grad q is logit(0.93) = 2.5867 on both sides.
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(check.lhs.data[i] == doctest::Approx(2.5866893440979426 * dft.gradient.data[i]).epsilon(1e-14));
    }
    CHECK(check.max_abs_diff <= 1e-15);
  }
  SUBCASE("all q equal") {
    const auto policy = TabularPolicy::uniform(1, 4);
    const std::vector<Sequence> batch{{.tokens = {0, 1, 2}, .prompt_length = 1},
                                      {.tokens = {3, 3}, .prompt_length = 0}};
    CHECK(entropy_decomposition_check(policy, batch, 0.6).max_abs_diff <= 1e-15);
  }
  SUBCASE("random unclipped batches") {
    Rng rng(808);
    for (int trial = 0; trial < 100; ++trial) {
      const auto policy = TabularPolicy::random(1, 5, 0.5, rng);
      const auto ds = random_dataset(5, 4, 2, 4, rng);
      const auto check = entropy_decomposition_check(policy, ds.sequences, 0.93);
      CHECK(check.max_abs_diff <= 1e-10);
      double diff = 0.0;
      for (std::size_t i = 0; i < check.lhs.data.size(); ++i) {
        diff = std::max(diff, std::abs(check.lhs.data[i] - check.rhs.data[i]));
      }
      CHECK(diff == check.max_abs_diff);
    }
  }
  SUBCASE("precondition") {
    const auto policy = two_token_policy(0.95);
    const std::vector<Sequence> batch{{.tokens = {0}, .prompt_length = 0}};
    CHECK_THROWS_AS(entropy_decomposition_check(policy, batch, 0.93), proximal::PreconditionViolation);
  }
}

TEST_CASE("train") {
  Rng rng(12);
  const auto initial = TabularPolicy::random(1, 4, 1.0, rng);
  const auto ds = random_dataset(4, 8, 2, 3, rng);

  SUBCASE("zero steps leaves the policy unchanged") {
    TrainConfig cfg{.rule = WeightRule::sft(), .max_steps = 0};
    const auto result = train(initial, ds, cfg);
    CHECK(result.policy == initial);
    CHECK(result.trace.records.empty());
  }
  SUBCASE("one SFT step on a single sequence is lr times the gradient") {
    const SequenceDataset single{.alphabet_size = 4, .sequences = {ds.sequences[0]}};
    TrainConfig cfg{.rule = WeightRule::sft(), .learning_rate = 0.37, .epochs = 1};
    const auto result = train(initial, single, cfg);
    const auto lg = weighted_loss_and_gradient(initial, single.sequences, WeightRule::sft());
    for (std::size_t i = 0; i < lg.gradient.data.size(); ++i) {
      CHECK(result.policy.logits().data[i] == initial.logits().data[i] + 0.37 * lg.gradient.data[i]);
    }
    REQUIRE(result.trace.records.size() == 1);
    CHECK(result.trace.records[0].loss == lg.loss);
    CHECK(result.trace.records[0].mean_q == lg.mean_q);
    CHECK(result.trace.records[0].kl_to_base ==
          doctest::Approx(mean_kl_to_base(result.policy, initial, {})).epsilon(1e-15));
  }
  SUBCASE("same seed gives bit-identical logits; minibatch trace is one record per step") {
    TrainConfig cfg{.rule = WeightRule::info_sft(0.93), .learning_rate = 0.5, .epochs = 3, .batch_size = 3, .seed = 99};
    const auto a = train(initial, ds, cfg);
    const auto b = train(initial, ds, cfg);
    CHECK(a.policy.logits().data == b.policy.logits().data);
    CHECK(a.trace.records.size() == 9);  // ceil(8 / 3) * 3
    for (std::size_t i = 0; i < a.trace.records.size(); ++i) CHECK(a.trace.records[i].step == i);
    cfg.seed = 100;
    const auto c = train(initial, ds, cfg);
    CHECK(a.policy.logits().data != c.policy.logits().data);
    for (std::size_t ctx = 0; ctx < a.policy.num_contexts(); ++ctx) {
      double total = 0.0;
      for (double v : a.policy.probs(ctx)) total += v;
      CHECK(std::abs(total - 1.0) <= 1e-10);
    }
  }
  SUBCASE("SFT raises the likelihood of the data") {
    TrainConfig cfg{.rule = WeightRule::sft(), .learning_rate = 0.5, .epochs = 20};
    const auto result = train(initial, ds, cfg);
    CHECK(result.trace.records.back().loss < result.trace.records.front().loss);
    CHECK(mean_expert_token_prob(result.policy, ds.sequences) > mean_expert_token_prob(initial, ds.sequences));
  }
  SUBCASE("divergence is reported with the partial trace") {
    // Bounded rules saturate instead of overflowing; a huge calibration
    // constant drives the logits past the double range.
    TrainConfig cfg{.rule = WeightRule::calibrated(1e307), .learning_rate = 1e3, .epochs = 200};
    try {
      train(initial, ds, cfg);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(e.partial_trace().records.size() < 200);
      for (const auto& r : e.partial_trace().records) CHECK(std::isfinite(r.loss));
    }
  }
  SUBCASE("invalid configs") {
    CHECK_THROWS(train(initial, ds, TrainConfig{.learning_rate = 0.0}));
    CHECK_THROWS(train(initial, ds, TrainConfig{.epochs = 0}));
    CHECK_THROWS(train(initial, ds, TrainConfig{.q_clip_hi = 1.0}));
  }
}

TEST_CASE("mean_kl_to_base") {
  Rng rng(1);
  const auto a = TabularPolicy::random(1, 3, 1.0, rng);
  const auto b = TabularPolicy::random(1, 3, 1.0, rng);
  CHECK(mean_kl_to_base(a, a, {}) == 0.0);
  const std::vector<std::size_t> probe{1, 2};
  const double expected = 0.5 * (kl_divergence(a.distribution(1), b.distribution(1)) +
                                 kl_divergence(a.distribution(2), b.distribution(2)));
  CHECK(mean_kl_to_base(a, b, probe) == doctest::Approx(expected).epsilon(1e-13));

  // Direction: KL((.5, .5) || (.25, .75)).
  Matrix la(1, 2), lb(1, 2);
  lb(0, 1) = std::log(3.0);
  const TabularPolicy pa(ContextMap(0, 2), la), pb(ContextMap(0, 2), lb);
  CHECK(mean_kl_to_base(pa, pb, {}) == doctest::Approx(0.14384103622589046).epsilon(1e-13));
}

TEST_CASE("generate") {
  Rng rng(6);
  SUBCASE("greedy follows the argmax with lowest-index ties") {
    Matrix logits(ContextMap(1, 3).num_contexts(), 3);
    const ContextMap map(1, 3);
    // Empty history: tie between 1 and 2 -> 1. After 1: argmax 0. After 0: tie everywhere -> 0.
    logits(map.context_id(std::vector<Token>{}), 1) = 2.0;
    logits(map.context_id(std::vector<Token>{}), 2) = 2.0;
    logits(map.context_id(std::vector<Token>{1}), 0) = 1.0;
    const TabularPolicy policy(map, logits);
    CHECK(generate(policy, {}, 3, 0.0, rng) == std::vector<Token>{1, 0, 0});
  }
  SUBCASE("one-hot policy gives the unique path at any temperature") {
    const ContextMap map(1, 4);
    Matrix logits(map.num_contexts(), 4);
    for (std::size_t c = 0; c < map.num_contexts(); ++c) {
      for (std::size_t j = 0; j < 4; ++j) logits(c, j) = -1e4;
      logits(c, (c + 1) % 4) = 0.0;
    }
    const TabularPolicy policy(map, logits);
    const std::vector<Token> prompt{2};
    const auto greedy = generate(policy, prompt, 6, 0.0, rng);
    for (double t : {0.3, 1.0, 5.0}) CHECK(generate(policy, prompt, 6, t, rng) == greedy);
  }
  SUBCASE("temperature 0.7 frequencies match softmax(logits / 0.7)") {
    Matrix logits(1, 4);
    logits(0, 0) = 0.3;
    logits(0, 1) = -0.4;
    logits(0, 2) = 1.1;
    logits(0, 3) = 0.0;
    const TabularPolicy policy(ContextMap(0, 4), logits);
    const auto expected = policy.probs(0, 0.7);
    const std::size_t n = 100000;
    std::vector<double> counts(4, 0.0);
    for (std::size_t i = 0; i < n; ++i) counts[generate(policy, {}, 1, 0.7, rng)[0]] += 1.0;
    for (std::size_t j = 0; j < 4; ++j) {
      const double sigma = std::sqrt(expected[j] * (1 - expected[j]) / n);
      CHECK(std::abs(counts[j] / n - expected[j]) <= 5 * sigma);
    }
  }
  SUBCASE("same seed, same path") {
    Rng init(1);
    const auto policy = TabularPolicy::random(2, 5, 1.0, init);
    Rng r1(77), r2(77);
    CHECK(generate(policy, std::vector<Token>{1}, 20, 1.0, r1) == generate(policy, std::vector<Token>{1}, 20, 1.0, r2));
  }
}

TEST_CASE("estimate_p_bar") {
  Rng rng(10);
  const std::vector<std::vector<Token>> prompts{{0}, {1, 2}, {}};
  SUBCASE("deterministic one-hot policy") {
    const ContextMap map(1, 3);
    Matrix logits(map.num_contexts(), 3);
    for (std::size_t c = 0; c < map.num_contexts(); ++c) {
      for (std::size_t j = 0; j < 3; ++j) logits(c, j) = j == 2 ? 0.0 : -1e4;
    }
    const auto est = estimate_p_bar(TabularPolicy(map, logits), prompts, 5, 4, 1.0, {}, rng);
    CHECK(est.estimate == 1.0);
    CHECK(est.tokens == 3 * 5 * 4);
  }
  SUBCASE("uniform policy gives 1/K") {
    const auto est = estimate_p_bar(TabularPolicy::uniform(2, 7), prompts, 200, 5, 1.0, {}, rng);
    CHECK(std::abs(est.estimate - 1.0 / 7.0) <= 1e-13);
  }
  SUBCASE("random policy: sampled mean vs analytic expectation") {
    // Order 0: every position has the same row, so E[p] = sum_j p_j^2.
    const auto policy = TabularPolicy::random(0, 5, 1.0, rng);
    const auto p = policy.probs(0);
    double expected = 0.0;
    for (double v : p) expected += v * v;
    const std::vector<std::vector<Token>> one{{}};
    const auto est = estimate_p_bar(policy, one, 20000, 1, 1.0, {}, rng);
    CHECK(std::abs(est.estimate - expected) <= 3 * est.standard_error + 1e-12);
  }
  SUBCASE("untempered probabilities are recorded under tempered sampling") {
    const auto policy = TabularPolicy::random(0, 3, 1.0, rng);
    const auto p = policy.probs(0);
    const auto pt = policy.probs(0, 0.7);
    double expected = 0.0;
    for (std::size_t j = 0; j < 3; ++j) expected += pt[j] * p[j];
    const std::vector<std::vector<Token>> one{{}};
    const auto est = estimate_p_bar(policy, one, 20000, 1, 0.7, {}, rng);
    CHECK(std::abs(est.estimate - expected) <= 4 * est.standard_error);
  }
  SUBCASE("predicate filters samples") {
    const auto policy = TabularPolicy::uniform(1, 3);
    const ResponsePredicate starts_with_zero = [](auto, std::span<const Token> r) { return r[0] == 0; };
    const auto est = estimate_p_bar(policy, prompts, 50, 2, 1.0, starts_with_zero, rng);
    CHECK(est.kept_samples < 150);
    CHECK(est.kept_samples > 0);
    const ResponsePredicate none = [](auto, auto) { return false; };
    CHECK_THROWS_AS(estimate_p_bar(policy, prompts, 5, 2, 1.0, none, rng), AllFilteredError);
    CHECK_THROWS(estimate_p_bar(policy, prompts, 0, 2, 1.0, {}, rng));
  }
}

TEST_CASE("policy and dataset text formats round-trip") {
  Rng rng(21);
  const auto policy = TabularPolicy::random(2, 3, 3.0, rng);
  std::stringstream ss;
  write_policy(ss, policy);
  CHECK(read_policy(ss) == policy);

  const auto ds = random_dataset(6, 10, 3, 4, rng);
  std::stringstream ds_stream;
  write_dataset(ds_stream, ds);
  const auto back = read_dataset(ds_stream);
  CHECK(back.alphabet_size == 6);
  REQUIRE(back.sequences.size() == ds.sequences.size());
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    CHECK(back.sequences[i].tokens == ds.sequences[i].tokens);
    CHECK(back.sequences[i].prompt_length == ds.sequences[i].prompt_length);
  }

  std::stringstream bad("# infosft-policy v1\norder 1\nalphabet 2\ncontexts 3\n0 0\n0 0\n");
  CHECK_THROWS(read_policy(bad));
  std::stringstream bad_ds("# infosft-dataset v1\n# alphabet 2\n1 0\n");
  CHECK_THROWS(read_dataset(bad_ds));
}
