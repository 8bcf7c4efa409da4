// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#include "infosft/experiments/commands.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>

#include "infosft/experiments/csv.hpp"
#include "infosft/experiments/svg.hpp"
#include "infosft/experiments/synthetic.hpp"
#include "infosft/experiments/tradeoff.hpp"
#include "infosft/experiments/verify.hpp"
#include "infosft/proximal.hpp"
#include "infosft/tabular.hpp"
#include "infosft/text_format.hpp"

namespace infosft::experiments {

namespace fs = std::filesystem;
using text::format_double;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

WeightRule parse_rule(const std::string& text, double p_bar) {
  try {
    return WeightRule::parse(text, p_bar);
  } catch (const std::exception& e) {
    throw UsageError("bad rule '" + text + "': " + e.what());
  }
}

template <typename T>
T read_file(const fs::path& path, T (*reader)(std::istream&)) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path.string());
  return reader(in);
}

template <typename T>
void write_file(const fs::path& path, const T& value, void (*writer)(std::ostream&, const T&)) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  writer(out, value);
}

std::string no_commas(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

int cmd_verify(const Json& config, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const auto results = run_verify(config);
  CsvWriter csv(out_dir / "verify_report.csv", "infosft.verify.v1",
                {"check", "status", "measured", "tolerance", "detail"});
  std::ofstream report(out_dir / "verify_report.txt", std::ios::binary | std::ios::trunc);
  const CheckResult* first_failure = nullptr;
  for (const auto& r : results) {
    const std::string status(to_string(r.status));
    csv.row({r.name, status, r.measured, r.tolerance, no_commas(r.detail)});
    const std::string line = status + " " + r.name + " measured=" + format_double(r.measured) +
                             " tolerance=" + format_double(r.tolerance) + " (" + r.detail + ")";
    report << line << '\n';
    out << line << '\n';
    if (r.status == CheckStatus::kFailed && !first_failure) first_failure = &r;
  }
  if (first_failure) {
    err << "verify: check '" << first_failure->name << "' FAILED\n";
    return kExitFailure;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_weight_curves(const Json& config, const fs::path& out_dir, std::ostream& out) {
  const auto names = get_strings(config, "rules");
  if (names.empty()) throw UsageError("weight-curves: the rule list is empty");
  const auto points = get_uint(config, "grid_points");
  if (points < 3) throw UsageError("weight-curves: grid_points must be >= 3");
  const auto grid = open_unit_grid(points);

  std::vector<std::pair<WeightRule, std::vector<WeightPoint>>> curves;
  for (const auto& name : names) {
    const auto rule = parse_rule(name, 0.93);
    auto curve = weight_curve(rule, grid);
    if (rule.is<rules::InfoSft>()) {
      std::vector<double> w;
      for (const auto& pt : curve) w.push_back(pt.w);
      if (difference_sign_changes(w) != 1) {
        throw std::runtime_error("weight-curves: " + rule.name() + " is not unimodal on the grid");
      }
    }
    curves.emplace_back(rule, std::move(curve));
  }

  CsvWriter csv(out_dir / "weight_curves.csv", "infosft.weight_curves.v1", {"rule", "q", "w"});
  PlotSpec plot{.title = "Token weight w(q) = q * Omega(q)", .x_label = "q", .y_label = "w", .series = {}};
  for (const auto& [rule, curve] : curves) {
    Series s;
    s.label = rule.name();
    for (const auto& pt : curve) {
      csv.row({rule.name(), pt.q, pt.w});
      s.points.emplace_back(pt.q, pt.w);
    }
    plot.series.push_back(std::move(s));
  }
  write_svg(out_dir / "weight_curves.svg", plot);
  out << "wrote " << curves.size() << " curves of " << grid.size() << " points\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_population_sweep(const Json& config, const fs::path& out_dir, std::ostream& out) {
  const auto seed = get_uint(config, "seed");
  auto names = get_strings(config, "rules");
  if (names.empty()) throw UsageError("population-sweep: the rule list is empty");
  if (std::find(names.begin(), names.end(), "oracle") == names.end()) names.emplace_back("oracle");
  const auto ds = get_doubles(config, "d_values");
  if (ds.empty()) throw UsageError("population-sweep: d_values is empty");
  const auto& pc = get_object(config, "population");
  PopulationSpec base_spec;
  base_spec.alphabet_size = get_uint(pc, "alphabet_size");
  base_spec.count = get_uint(pc, "count");
  base_spec.expert_concentration = get_double(pc, "expert_concentration");
  base_spec.base_concentration = get_double(pc, "base_concentration");
  base_spec.base_mixing = get_double(pc, "base_mixing");
  base_spec.floor = get_double(pc, "floor");
  for (const auto& n : names) {
    if (n != "infosft") parse_rule(n, 0.93);
  }

  CsvWriter csv(out_dir / "population_sweep.csv", "infosft.population_sweep.v1",
                {"d", "rule", "mean_delta_kl", "ratio_to_oracle", "p_bar", "max_q", "count", "in_dominance_regime",
                 "status"});
  std::map<std::string, Series> series;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    PopulationSpec spec = base_spec;
    spec.max_target_prob = ds[i];
    try {
      spec.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("population-sweep: ") + e.what());
    }
    Rng rng = section_rng(seed, i);
    std::vector<DistributionPair> pop;
    try {
      pop = random_population(spec, rng);
    } catch (const ResampleBudgetExhausted& e) {
      for (const auto& n : names) {
        csv.row({ds[i], n, kNaN, kNaN, kNaN, kNaN, 0LL, 0LL, std::string("resample_budget_exhausted")});
      }
      out << "d = " << format_double(ds[i]) << ": " << e.what() << '\n';
      continue;
    }
    const double p_bar = proximal::population_p_bar(pop);
    const bool regime = ds[i] <= p_bar / std::exp(2.0);
    const double oracle = proximal::expected_delta_kl(pop, WeightRule::oracle()).mean_delta_kl;
    for (const auto& n : names) {
      const auto rule = n == "infosft" ? WeightRule::info_sft(p_bar) : parse_rule(n, 0.93);
      const auto report = proximal::expected_delta_kl(pop, rule);
      const std::string label = n == "infosft" ? "infosft(p_bar)" : rule.name();
      csv.row({ds[i], label, report.mean_delta_kl, report.mean_delta_kl / oracle, p_bar, report.max_q,
               static_cast<long long>(report.count), regime ? 1LL : 0LL, std::string("ok")});
      if (!series.contains(label)) {
        order.push_back(label);
        series[label] = Series{.label = label, .points = {}, .style = Series::Style::kLineMarkers,
                               .color = {}, .dashed = rule.is<rules::Oracle>()};
      }
      series[label].points.emplace_back(ds[i], report.mean_delta_kl);
    }
  }
  PlotSpec plot{.title = "Expected KL change after one proximal step", .x_label = "d (max base probability)",
                .y_label = "E[delta KL]", .log_x = true, .series = {}};
  for (const auto& label : order) plot.series.push_back(series[label]);
  write_svg(out_dir / "population_sweep.svg", plot);
  out << "swept " << ds.size() << " values of d over " << names.size() << " rules\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_train(const Json& config, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const auto seed = get_uint(config, "seed");
  const auto rule = parse_rule(get_string(config, "rule"), get_double(config, "p_bar"));
  tabular::TrainConfig tc{
      .rule = rule,
      .learning_rate = get_double(config, "learning_rate"),
      .epochs = get_uint(config, "epochs"),
      .batch_size = get_uint(config, "batch_size"),
      .seed = seed,
      .q_clip_hi = get_double(config, "q_clip_hi"),
      .max_steps = is_unset(config, "max_steps") ? std::nullopt : std::optional(get_uint(config, "max_steps")),
      .probe_contexts = {},
  };
  for (auto c : get_uints(config, "probe_contexts")) tc.probe_contexts.push_back(c);

  std::optional<tabular::TabularPolicy> initial;
  tabular::SequenceDataset dataset;
  if (is_unset(config, "dataset")) {
    Rng rng = section_rng(seed, 100);
    auto problem = make_two_task_problem(two_task_from_json(get_object(config, "task")), rng);
    dataset = problem.b.data;
    initial = problem.base;
    if (tc.probe_contexts.empty()) tc.probe_contexts = problem.a.probe_contexts;
    write_file(out_dir / "dataset.txt", dataset, &tabular::write_dataset);
    write_file(out_dir / "base_policy.txt", *initial, &tabular::write_policy);
  } else {
    dataset = read_file(fs::path(get_string(config, "dataset")), &tabular::read_dataset);
  }
  if (!is_unset(config, "policy")) {
    initial = read_file(fs::path(get_string(config, "policy")), &tabular::read_policy);
  } else if (!initial) {
    initial = tabular::TabularPolicy::uniform(1, dataset.alphabet_size);
  }
  for (auto c : tc.probe_contexts) {
    if (c >= initial->num_contexts()) throw UsageError("train: probe context " + std::to_string(c) + " out of range");
  }
  try {
    tc.validate();
    dataset.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("train: ") + e.what());
  }

  const auto write_trace = [&](const tabular::TrainTrace& trace) {
    CsvWriter csv(out_dir / "trace.csv", "infosft.trace.v1", {"step", "loss", "mean_q", "entropy", "kl_to_base"});
    for (const auto& r : trace.records) {
      csv.row({static_cast<long long>(r.step), r.loss, r.mean_q, r.entropy, r.kl_to_base});
    }
  };
  try {
    const auto result = tabular::train(*initial, dataset, tc);
    write_trace(result.trace);
    write_file(out_dir / "policy.txt", result.policy, &tabular::write_policy);
    out << "rule " << rule.name() << '\n'
        << "steps " << result.trace.records.size() << '\n'
        << "mean_expert_token_prob " << format_double(tabular::mean_expert_token_prob(result.policy, dataset.sequences))
        << '\n'
        << "mean_response_entropy " << format_double(tabular::mean_response_entropy(result.policy, dataset.sequences))
        << '\n'
        << "kl_to_base " << format_double(tabular::mean_kl_to_base(result.policy, *initial, tc.probe_contexts)) << '\n';
    return kExitOk;
  } catch (const tabular::DivergenceError& e) {
    write_trace(e.partial_trace());
    err << e.what() << " (partial trace of " << e.partial_trace().records.size() << " steps written)\n";
    return kExitFailure;
  }
}

// ---------------------------------------------------------------------------

int cmd_tradeoff(const Json& config, const fs::path& out_dir, std::size_t jobs, std::ostream& out) {
  const auto seed = get_uint(config, "seed");
  const double p_bar = get_double(config, "p_bar");
  TradeoffSpec spec;
  spec.task = two_task_from_json(get_object(config, "task"));
  for (const auto& n : get_strings(config, "rules")) spec.rules.push_back(parse_rule(n, p_bar));
  spec.learning_rates = get_doubles(config, "learning_rates");
  for (auto e : get_uints(config, "epochs")) spec.epochs.push_back(e);
  const auto seeds = get_uint(config, "seeds");
  for (std::uint64_t i = 0; i < seeds; ++i) spec.seeds.push_back(seed + i);
  spec.batch_size = get_uint(config, "batch_size");
  const double tolerance = get_double(config, "match_tolerance");
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("tradeoff: ") + e.what());
  }

  const auto records = run_tradeoff(spec, jobs);
  {
    CsvWriter csv(out_dir / "tradeoff.csv", "infosft.tradeoff.v1",
                  {"rule", "learning_rate", "epochs", "seed", "new_task_fit", "retention_kl", "prior_task_fit",
                   "terminal_entropy", "steps", "status"});
    for (const auto& r : records) {
      csv.row({r.rule, r.learning_rate, static_cast<long long>(r.epochs), static_cast<long long>(r.seed),
               r.new_task_fit, r.retention_kl, r.prior_task_fit, r.terminal_entropy, static_cast<long long>(r.steps),
               r.status});
    }
  }
  {
    CsvWriter csv(out_dir / "tradeoff_summary.csv", "infosft.tradeoff_summary.v1",
                  {"family", "versus", "comparisons", "wins", "win_rate"});
    std::vector<std::string> families;
    for (const auto& r : spec.rules) {
      const auto f = rule_family(r.name());
      if (std::find(families.begin(), families.end(), f) == families.end()) families.push_back(f);
    }
    for (const auto& a : families) {
      for (const auto& b : families) {
        if (a == b) continue;
        const auto m = matched_retention_comparison(records, a, b, tolerance);
        csv.row({a, b, static_cast<long long>(m.comparisons), static_cast<long long>(m.wins), m.win_rate()});
        out << a << " vs " << b << ": new-task KL <= in " << m.wins << " of " << m.comparisons
            << " retention-matched comparisons\n";
      }
    }
  }

  // The plot is drawn from the CSV as written.
  const auto table = read_csv(out_dir / "tradeoff.csv");
  const auto c_rule = table.column("rule"), c_ret = table.column("retention_kl"),
             c_fit = table.column("new_task_fit"), c_status = table.column("status");
  std::vector<std::string> labels;
  std::map<std::string, std::vector<std::pair<double, double>>> points;
  for (const auto& row : table.rows) {
    if (row[c_status] != "ok") continue;
    if (!points.contains(row[c_rule])) labels.push_back(row[c_rule]);
    points[row[c_rule]].emplace_back(text::parse_double(row[c_ret]), text::parse_double(row[c_fit]));
  }
  PlotSpec plot{.title = "New-task fit vs retention", .x_label = "retention KL(pi || base) on task A",
                .y_label = "new-task KL(expert_B || pi)", .log_x = true, .series = {}};
  constexpr std::array<const char*, 8> palette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& pts = points[labels[i]];
    const std::string color = palette[i % palette.size()];
    plot.series.push_back({.label = labels[i], .points = pts, .style = Series::Style::kMarkers, .color = color});
    Series frontier{.label = labels[i] + " frontier", .points = {}, .style = Series::Style::kLine, .color = color,
                    .dashed = true};
    for (auto j : pareto_frontier(pts)) frontier.points.push_back(pts[j]);
    plot.series.push_back(std::move(frontier));
  }
  write_svg(out_dir / "tradeoff.svg", plot);
  const auto failed = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.status != "ok"; });
  out << records.size() << " cells, " << failed << " not ok\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_estimate_pbar(const Json& config, const fs::path& out_dir, std::ostream& out) {
  const auto seed = get_uint(config, "seed");
  std::optional<tabular::TabularPolicy> policy;
  if (is_unset(config, "policy")) {
    Rng rng = section_rng(seed, 100);
    policy = make_two_task_problem(two_task_from_json(get_object(config, "task")), rng).base;
  } else {
    policy = read_file(fs::path(get_string(config, "policy")), &tabular::read_policy);
  }
  std::vector<std::vector<tabular::Token>> prompts;
  if (is_unset(config, "prompts")) {
    for (std::size_t t = 0; t < policy->alphabet_size(); ++t) prompts.push_back({static_cast<tabular::Token>(t)});
  } else {
    const fs::path path(get_string(config, "prompts"));
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::vector<tabular::Token> prompt;
      for (auto tok : text::split_ws(line)) {
        const auto v = text::parse_int(tok);
        if (v < 0 || static_cast<std::size_t>(v) >= policy->alphabet_size()) {
          throw UsageError("prompt token " + std::string(tok) + " outside the alphabet");
        }
        prompt.push_back(static_cast<tabular::Token>(v));
      }
      prompts.push_back(std::move(prompt));
    }
    if (prompts.empty()) throw UsageError("no prompts in " + path.string());
  }
  const double temperature = get_double(config, "temperature");
  if (!(temperature > 0.0)) throw UsageError("estimate-pbar: temperature must be positive");
  const auto num_samples = get_uint(config, "num_samples");
  const auto max_len = get_uint(config, "max_len");
  if (num_samples < 1 || max_len < 1) throw UsageError("estimate-pbar: num_samples and max_len must be >= 1");

  Rng rng = section_rng(seed, 200);
  const auto est = tabular::estimate_p_bar(*policy, prompts, num_samples, max_len, temperature, {}, rng);
  {
    CsvWriter csv(out_dir / "pbar.csv", "infosft.pbar.v1", {"prompt", "estimate", "tokens", "kept_samples"});
    for (std::size_t i = 0; i < est.per_prompt.size(); ++i) {
      const auto& p = est.per_prompt[i];
      csv.row({static_cast<long long>(i), p.estimate, static_cast<long long>(p.tokens),
               static_cast<long long>(p.kept_samples)});
    }
  }
  {
    CsvWriter csv(out_dir / "pbar_summary.csv", "infosft.pbar_summary.v1",
                  {"estimate", "standard_error", "tokens", "kept_samples"});
    csv.row({est.estimate, est.standard_error, static_cast<long long>(est.tokens),
             static_cast<long long>(est.kept_samples)});
  }
  out << "p_bar " << format_double(est.estimate) << " +- " << format_double(est.standard_error) << " ("
      << est.tokens << " tokens)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run_command(std::string_view command, const CommandOptions& options, std::ostream& out, std::ostream& err) {
  try {
    const auto config = resolve_config(command, options.config_file, options.assignments, options.seed);
    fs::create_directories(options.out_dir);
    write_resolved_config(options.out_dir, config);
    if (command == "verify") return cmd_verify(config, options.out_dir, out, err);
    if (command == "weight-curves") return cmd_weight_curves(config, options.out_dir, out);
    if (command == "population-sweep") return cmd_population_sweep(config, options.out_dir, out);
    if (command == "train") return cmd_train(config, options.out_dir, out, err);
    if (command == "tradeoff") return cmd_tradeoff(config, options.out_dir, options.jobs, out);
    if (command == "estimate-pbar") return cmd_estimate_pbar(config, options.out_dir, out);
    throw UsageError("unknown command '" + std::string(command) + "'");
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace infosft::experiments
