// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#include "infosft/experiments/tradeoff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "infosft/experiments/verify.hpp"
#include "infosft/tabular.hpp"

namespace infosft::experiments {

void TradeoffSpec::validate() const {
  task.validate();
  if (rules.empty()) throw std::invalid_argument("tradeoff: no rules");
  if (learning_rates.empty()) throw std::invalid_argument("tradeoff: no learning rates");
  if (epochs.empty()) throw std::invalid_argument("tradeoff: no epoch counts");
  if (seeds.empty()) throw std::invalid_argument("tradeoff: no seeds");
  for (double lr : learning_rates) {
    if (!(lr > 0.0)) throw std::invalid_argument("tradeoff: learning rates must be positive");
  }
  for (auto e : epochs) {
    if (e < 1) throw std::invalid_argument("tradeoff: epochs must be >= 1");
  }
}

std::string rule_family(const std::string& rule_name) { return rule_name.substr(0, rule_name.find('(')); }

namespace {

struct Cell {
  std::size_t problem;
  std::size_t rule;
  double learning_rate;
  std::size_t epochs;
};

TradeoffRecord run_cell(const TradeoffSpec& spec, const TwoTaskProblem& problem, const Cell& cell,
                        std::uint64_t seed) {
  const auto& rule = spec.rules[cell.rule];
  TradeoffRecord rec{
      .rule = rule.name(),
      .learning_rate = cell.learning_rate,
      .epochs = cell.epochs,
      .seed = seed,
  };
  tabular::TrainConfig cfg{
      .rule = rule,
      .learning_rate = cell.learning_rate,
      .epochs = cell.epochs,
      .batch_size = spec.batch_size,
      .seed = seed,
      .q_clip_hi = 1.0 - 1e-6,
      .max_steps = std::nullopt,
      .probe_contexts = problem.a.probe_contexts,
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    const auto result = tabular::train(problem.base, problem.b.data, cfg);
    rec.steps = result.trace.records.size();
    rec.new_task_fit = expert_kl(result.policy, problem.b.expert, problem.b.probe_contexts);
    rec.retention_kl = tabular::mean_kl_to_base(result.policy, problem.base, problem.a.probe_contexts);
    rec.prior_task_fit = expert_kl(result.policy, problem.a.expert, problem.a.probe_contexts);
    rec.terminal_entropy = tabular::mean_response_entropy(result.policy, problem.b.data.sequences);
    if (!std::isfinite(rec.new_task_fit) || !std::isfinite(rec.retention_kl) || !std::isfinite(rec.prior_task_fit)) {
      throw tabular::DivergenceError("non-finite metric", result.trace);
    }
  } catch (const tabular::DivergenceError& e) {
    rec.steps = e.partial_trace().records.size();
    rec.status = "diverged";
  } catch (const std::exception& e) {
    rec.status = "error";
  }
  if (rec.status != "ok") {
    rec.new_task_fit = rec.retention_kl = rec.prior_task_fit = rec.terminal_entropy = nan;
  }
  return rec;
}

}  // namespace

std::vector<TradeoffRecord> run_tradeoff(const TradeoffSpec& spec, std::size_t jobs) {
  spec.validate();
  std::vector<TwoTaskProblem> problems;
  for (auto seed : spec.seeds) {
    Rng rng = section_rng(seed, 100);
    problems.push_back(make_two_task_problem(spec.task, rng));
  }
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < problems.size(); ++p) {
    for (std::size_t r = 0; r < spec.rules.size(); ++r) {
      for (double lr : spec.learning_rates) {
        for (auto e : spec.epochs) cells.push_back({p, r, lr, e});
      }
    }
  }

  std::vector<TradeoffRecord> out(cells.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      out[i] = run_cell(spec, problems[cells[i].problem], cells[i], spec.seeds[cells[i].problem]);
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, cells.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return out;
}

MatchedComparison matched_retention_comparison(std::span<const TradeoffRecord> records, const std::string& family_a,
                                               const std::string& family_b, double tolerance) {
  MatchedComparison out;
  for (const auto& a : records) {
    if (a.status != "ok" || rule_family(a.rule) != family_a) continue;
    for (const auto& b : records) {
      if (b.status != "ok" || b.seed != a.seed || rule_family(b.rule) != family_b) continue;
      if (std::abs(a.retention_kl - b.retention_kl) > tolerance * std::max(a.retention_kl, b.retention_kl)) continue;
      ++out.comparisons;
      if (a.new_task_fit <= b.new_task_fit) ++out.wins;
    }
  }
  return out;
}

std::vector<std::size_t> pareto_frontier(std::span<const std::pair<double, double>> points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return points[i].first < points[j].first ||
           (points[i].first == points[j].first && points[i].second < points[j].second);
  });
  std::vector<std::size_t> frontier;
  double best = std::numeric_limits<double>::infinity();
  for (auto i : order) {
    if (!std::isfinite(points[i].first) || !std::isfinite(points[i].second)) continue;
    if (points[i].second < best) {
      frontier.push_back(i);
      best = points[i].second;
    }
  }
  return frontier;
}

}  // namespace infosft::experiments
