// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors
#include "doctest.h"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "infosft/experiments/commands.hpp"
#include "infosft/experiments/config.hpp"
#include "infosft/experiments/csv.hpp"
#include "infosft/experiments/svg.hpp"
#include "infosft/experiments/synthetic.hpp"
#include "infosft/experiments/tradeoff.hpp"
#include "infosft/experiments/verify.hpp"
#include "infosft/tabular.hpp"
#include "infosft/text_format.hpp"

namespace fs = std::filesystem;
namespace ex = infosft::experiments;
namespace tb = infosft::tabular;
using infosft::Rng;
using infosft::WeightRule;
using infosft::text::parse_double;

namespace {

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("infosft_unit_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ex::TwoTaskSpec small_task() {
  ex::TwoTaskSpec spec;
  spec.alphabet_size = 8;
  spec.sequences_per_task = 40;
  spec.response_length = 3;
  spec.pretrain_epochs = 10;
  return spec;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("every command has defaults with a seed") {
    for (auto name : ex::command_names()) {
      const auto cfg = ex::default_config(name);
      CHECK(cfg.contains("seed"));
    }
    CHECK_THROWS_AS(ex::default_config("bogus"), ex::UsageError);
  }

  TEST_CASE("--set overrides nested keys and parses JSON values") {
    const std::vector<std::string> sets = {"task.alphabet_size=16", "rules=[\"sft\"]", "rule=dft"};
    const auto cfg = ex::resolve_config("tradeoff", std::nullopt, std::span(sets.data(), 2), 7);
    CHECK(cfg["task"]["alphabet_size"] == 16);
    CHECK(cfg["task"]["response_length"] == 4);
    CHECK(ex::get_strings(cfg, "rules") == std::vector<std::string>{"sft"});
    CHECK(ex::get_uint(cfg, "seed") == 7);
    const auto train = ex::resolve_config("train", std::nullopt, std::span(sets.data() + 2, 1), std::nullopt);
    CHECK(ex::get_string(train, "rule") == "dft");
  }

  TEST_CASE("file then --set precedence") {
    ScratchDir dir("config");
    std::ofstream(dir.path() / "c.json") << R"({"learning_rate": 0.5, "epochs": 3})";
    const std::vector<std::string> sets = {"epochs=4"};
    const auto cfg = ex::resolve_config("train", dir.path() / "c.json", sets, std::nullopt);
    CHECK(ex::get_double(cfg, "learning_rate") == 0.5);
    CHECK(ex::get_uint(cfg, "epochs") == 4);
  }

  TEST_CASE("unknown keys and malformed assignments are usage errors") {
    for (const std::string bad : {"nope=1", "task.nope=1", "=1", "epochs", ".epochs=1", "task..x=1", "task.=1"}) {
      CAPTURE(bad);
      const std::vector<std::string> sets = {bad};
      CHECK_THROWS_AS(ex::resolve_config("train", std::nullopt, sets, std::nullopt), ex::UsageError);
    }
  }

  TEST_CASE("typed getters reject wrong types") {
    const ex::Json j = {{"a", -1}, {"b", "x"}, {"c", 1.5}, {"d", nullptr}};
    CHECK_THROWS_AS(ex::get_uint(j, "a"), ex::UsageError);
    CHECK_THROWS_AS(ex::get_uint(j, "c"), ex::UsageError);
    CHECK_THROWS_AS(ex::get_double(j, "b"), ex::UsageError);
    CHECK_THROWS_AS(ex::get_double(j, "d"), ex::UsageError);
    CHECK(ex::is_unset(j, "d"));
    CHECK(ex::is_unset(j, "missing"));
    CHECK(ex::get_double(j, "a") == -1.0);
  }

  TEST_CASE("two-task spec round trips through JSON") {
    const auto spec = small_task();
    const auto back = ex::two_task_from_json(ex::to_json(spec));
    CHECK(back.alphabet_size == 8);
    CHECK(back.sequences_per_task == 40);
    auto bad = ex::to_json(spec);
    bad["alphabet_size"] = 4;  // no room for responses
    CHECK_THROWS_AS(ex::two_task_from_json(bad), ex::UsageError);
  }
}

TEST_SUITE("csv and svg") {
  TEST_CASE("csv round trip with schema line") {
    ScratchDir dir("csv");
    {
      ex::CsvWriter w(dir.path() / "t.csv", "demo.v1", {"name", "x", "n"});
      w.row({std::string("a"), 0.1, 3LL});
      w.row({std::string("b"), std::numeric_limits<double>::quiet_NaN(), -2LL});
      CHECK_THROWS(w.row({std::string("only")}));
      CHECK_THROWS(w.row({std::string("c,d"), 1.0, 1LL}));
    }
    CHECK(slurp(dir.path() / "t.csv").rfind("# schema: demo.v1\nname,x,n\n", 0) == 0);
    const auto t = ex::read_csv(dir.path() / "t.csv");
    CHECK(t.schema == "demo.v1");
    REQUIRE(t.rows.size() == 2);
    CHECK(parse_double(t.rows[0][t.column("x")]) == 0.1);
    CHECK(t.rows[1][t.column("n")] == "-2");
    CHECK(std::isnan(parse_double(t.rows[1][t.column("x")])));
    CHECK_THROWS(t.column("missing"));
  }

  TEST_CASE("svg rendering is deterministic and well formed") {
    ex::PlotSpec plot;
    plot.title = "t";
    plot.log_x = true;
    ex::Series s;
    s.label = "a & b";
    s.points = {{0.01, 1.0}, {0.1, 2.0}, {1.0, 0.5}};
    plot.series.push_back(s);
    const auto first = ex::render_svg(plot);
    CHECK(first == ex::render_svg(plot));
    CHECK(first.rfind("<svg", 0) == 0);
    CHECK(first.find("</svg>") != std::string::npos);
    CHECK(first.find("a &amp; b") != std::string::npos);
  }
}

TEST_SUITE("synthetic") {
  TEST_CASE("two-task problem layout") {
    Rng rng(3);
    const auto spec = small_task();
    const auto prob = ex::make_two_task_problem(spec, rng);
    const std::size_t p = spec.prompt_tokens_per_task;
    for (const auto* task : {&prob.a, &prob.b}) {
      CHECK(task->data.sequences.size() == spec.sequences_per_task);
      CHECK_FALSE(task->probe_contexts.empty());
      CHECK(std::is_sorted(task->probe_contexts.begin(), task->probe_contexts.end()));
    }
    for (const auto& seq : prob.a.data.sequences) {
      REQUIRE(seq.tokens.size() == 1 + spec.response_length);
      CHECK(seq.prompt_length == 1);
      CHECK(seq.tokens[0] < p);
      for (std::size_t t = 1; t < seq.tokens.size(); ++t) CHECK(seq.tokens[t] >= 2 * p);
    }
    for (const auto& seq : prob.b.data.sequences) {
      CHECK(seq.tokens[0] >= p);
      CHECK(seq.tokens[0] < 2 * p);
    }
    // Expert rows put no mass outside the response vocabulary.
    for (const auto& row : prob.a.expert.rows) {
      if (!row) continue;
      for (std::size_t t = 0; t < 2 * p; ++t) CHECK((*row)[t] == 0.0);
    }
  }

  TEST_CASE("pretraining moves the base toward task A") {
    Rng rng(4);
    const auto prob = ex::make_two_task_problem(small_task(), rng);
    const auto uniform = tb::TabularPolicy::uniform(1, 8);
    CHECK(ex::expert_kl(prob.base, prob.a.expert, prob.a.probe_contexts) <
          ex::expert_kl(uniform, prob.a.expert, prob.a.probe_contexts));
  }

  TEST_CASE("same rng seed gives the same problem") {
    Rng r1(9), r2(9);
    const auto a = ex::make_two_task_problem(small_task(), r1);
    const auto b = ex::make_two_task_problem(small_task(), r2);
    CHECK(a.base == b.base);
    CHECK(a.b.data.sequences.size() == b.b.data.sequences.size());
    for (std::size_t i = 0; i < a.b.data.sequences.size(); ++i) {
      CHECK(a.b.data.sequences[i].tokens == b.b.data.sequences[i].tokens);
    }
  }
}

TEST_SUITE("verify") {
  TEST_CASE("defaults pass and the pass pattern is seed independent") {
    std::vector<std::string> pattern;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      auto cfg = ex::default_config("verify");
      cfg["seed"] = seed;
      std::vector<std::string> statuses;
      for (const auto& r : ex::run_verify(cfg)) {
        CAPTURE(r.name);
        CAPTURE(r.detail);
        CHECK(r.status == ex::CheckStatus::kPass);
        statuses.push_back(r.name + ":" + std::string(ex::to_string(r.status)));
      }
      if (pattern.empty()) pattern = statuses;
      CHECK(statuses == pattern);
    }
    CHECK(pattern.size() == 15);
  }

  TEST_CASE("dominance is skipped when d violates the precondition") {
    auto cfg = ex::default_config("verify");
    cfg["dominance"]["d"] = 0.5;
    std::size_t skipped = 0;
    for (const auto& r : ex::run_verify(cfg)) {
      if (r.name.rfind("dominance", 0) == 0) {
        CHECK(r.status == ex::CheckStatus::kSkipped);
        ++skipped;
      } else {
        CHECK(r.status == ex::CheckStatus::kPass);
      }
    }
    CHECK(skipped == 2);
  }

  TEST_CASE("concentration helper hits the target mean") {
    // For a symmetric Dirichlet(a) with one spike of weight 1, the mean
    // target probability is (1 + a) / (1 + K a).
    for (std::size_t k : {5u, 20u, 100u}) {
      for (double t : {0.6, 0.9}) {
        const double a = ex::concentration_for_p_bar(k, t);
        CHECK((1.0 + a) / (1.0 + static_cast<double>(k) * a) == doctest::Approx(t).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("section rngs are distinct and reproducible") {
    auto a = ex::section_rng(5, 1), b = ex::section_rng(5, 1), c = ex::section_rng(5, 2);
    const auto x = a(), y = b(), z = c();
    CHECK(x == y);
    CHECK(x != z);
  }
}

TEST_SUITE("commands") {
  TEST_CASE("weight curves") {
    ScratchDir dir("curves");
    std::ostringstream out;
    auto cfg = ex::default_config("weight-curves");
    cfg["rules"] = {"sft", "dft", "infosft:0.5"};
    REQUIRE(ex::cmd_weight_curves(cfg, dir.path(), out) == ex::kExitOk);
    const auto t = ex::read_csv(dir.path() / "weight_curves.csv");
    CHECK(t.schema == "infosft.weight_curves.v1");
    CHECK(t.rows.size() == 3 * 999);
    for (const auto& row : t.rows) {
      const double q = parse_double(row[t.column("q")]), w = parse_double(row[t.column("w")]);
      const auto& rule = row[t.column("rule")];
      if (rule == "sft") CHECK(w == 1.0);
      if (rule == "dft") CHECK(w == q);
      if (rule == "infosft(0.5)") CHECK((w > 0.0) == (q < 0.5));
    }
    CHECK(fs::exists(dir.path() / "weight_curves.svg"));
    cfg["rules"] = ex::Json::array();
    CHECK_THROWS_AS(ex::cmd_weight_curves(cfg, dir.path(), out), ex::UsageError);
  }

  TEST_CASE("population sweep: oracle is the pointwise minimum") {
    ScratchDir dir("sweep");
    std::ostringstream out;
    auto cfg = ex::default_config("population-sweep");
    cfg["population"]["count"] = 200;
    REQUIRE(ex::cmd_population_sweep(cfg, dir.path(), out) == ex::kExitOk);
    const auto t = ex::read_csv(dir.path() / "population_sweep.csv");
    std::map<std::string, std::map<std::string, double>> by_d;
    std::map<std::string, bool> regime;
    for (const auto& row : t.rows) {
      REQUIRE(row[t.column("status")] == "ok");
      by_d[row[t.column("d")]][row[t.column("rule")]] = parse_double(row[t.column("mean_delta_kl")]);
      regime[row[t.column("d")]] = row[t.column("in_dominance_regime")] == "1";
    }
    CHECK(by_d.size() == 7);
    std::size_t in_regime = 0;
    for (const auto& [d, values] : by_d) {
      CAPTURE(d);
      REQUIRE(values.size() == 4);
      for (const auto& [rule, v] : values) CHECK(values.at("oracle") <= v + 1e-12);
      if (regime[d]) {
        ++in_regime;
        CHECK(values.at("infosft(p_bar)") < values.at("dft"));
        CHECK(values.at("infosft(p_bar)") < values.at("sft"));
      }
    }
    CHECK(in_regime > 0);
  }

  TEST_CASE("train with zero steps returns the input policy") {
    ScratchDir dir("train0");
    std::ostringstream out, err;
    auto cfg = ex::default_config("train");
    cfg["max_steps"] = 0;
    cfg["task"] = ex::to_json(small_task());
    REQUIRE(ex::cmd_train(cfg, dir.path(), out, err) == ex::kExitOk);
    CHECK(slurp(dir.path() / "policy.txt") == slurp(dir.path() / "base_policy.txt"));
    CHECK(ex::read_csv(dir.path() / "trace.csv").rows.empty());
  }

  TEST_CASE("train trace has one row per step and reads a dataset file") {
    ScratchDir dir("train");
    std::ostringstream out, err;
    auto cfg = ex::default_config("train");
    cfg["task"] = ex::to_json(small_task());
    cfg["epochs"] = 2;
    cfg["batch_size"] = 16;
    REQUIRE(ex::cmd_train(cfg, dir.path(), out, err) == ex::kExitOk);
    CHECK(ex::read_csv(dir.path() / "trace.csv").rows.size() == 2 * 3);  // 40 sequences, batches of 16

    ScratchDir again("train_file");
    cfg["dataset"] = (dir.path() / "dataset.txt").string();
    cfg["policy"] = (dir.path() / "base_policy.txt").string();
    REQUIRE(ex::cmd_train(cfg, again.path(), out, err) == ex::kExitOk);
    // Probe contexts differ (none configured here), so only the loss is compared.
    const auto t1 = ex::read_csv(dir.path() / "trace.csv"), t2 = ex::read_csv(again.path() / "trace.csv");
    REQUIRE(t1.rows.size() == t2.rows.size());
    for (std::size_t i = 0; i < t1.rows.size(); ++i) CHECK(t1.rows[i][t1.column("loss")] == t2.rows[i][t2.column("loss")]);
    CHECK(slurp(again.path() / "policy.txt") == slurp(dir.path() / "policy.txt"));
  }

  TEST_CASE("train divergence exits nonzero with a partial trace") {
    ScratchDir dir("diverge");
    std::ostringstream out, err;
    auto cfg = ex::default_config("train");
    cfg["task"] = ex::to_json(small_task());
    cfg["rule"] = "calibrated:1e307";
    cfg["learning_rate"] = 1e3;
    cfg["epochs"] = 200;
    CHECK(ex::cmd_train(cfg, dir.path(), out, err) == ex::kExitFailure);
    CHECK(fs::exists(dir.path() / "trace.csv"));
    CHECK_FALSE(fs::exists(dir.path() / "policy.txt"));
  }

  TEST_CASE("estimate-pbar on a uniform policy") {
    ScratchDir dir("pbar");
    {
      std::ofstream f(dir.path() / "uniform.txt");
      tb::write_policy(f, tb::TabularPolicy::uniform(1, 10));
    }
    std::ostringstream out;
    auto cfg = ex::default_config("estimate-pbar");
    cfg["policy"] = (dir.path() / "uniform.txt").string();
    REQUIRE(ex::cmd_estimate_pbar(cfg, dir.path(), out) == ex::kExitOk);
    const auto s = ex::read_csv(dir.path() / "pbar_summary.csv");
    REQUIRE(s.rows.size() == 1);
    CHECK(parse_double(s.rows[0][s.column("estimate")]) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(ex::read_csv(dir.path() / "pbar.csv").rows.size() == 10);

    const auto first = slurp(dir.path() / "pbar.csv");
    cfg["policy"] = nullptr;
    cfg["task"] = ex::to_json(small_task());
    REQUIRE(ex::cmd_estimate_pbar(cfg, dir.path(), out) == ex::kExitOk);
    const auto synth = slurp(dir.path() / "pbar.csv");
    REQUIRE(ex::cmd_estimate_pbar(cfg, dir.path(), out) == ex::kExitOk);
    CHECK(slurp(dir.path() / "pbar.csv") == synth);
    CHECK(synth != first);
  }

  TEST_CASE("estimate-pbar prompt file") {
    ScratchDir dir("prompts");
    {
      std::ofstream f(dir.path() / "uniform.txt");
      tb::write_policy(f, tb::TabularPolicy::uniform(1, 4));
      std::ofstream(dir.path() / "prompts.txt") << "# two prompts\n0 1\n3\n";
      std::ofstream(dir.path() / "bad.txt") << "7\n";
    }
    std::ostringstream out;
    auto cfg = ex::default_config("estimate-pbar");
    cfg["policy"] = (dir.path() / "uniform.txt").string();
    cfg["prompts"] = (dir.path() / "prompts.txt").string();
    REQUIRE(ex::cmd_estimate_pbar(cfg, dir.path(), out) == ex::kExitOk);
    CHECK(ex::read_csv(dir.path() / "pbar.csv").rows.size() == 2);
    cfg["prompts"] = (dir.path() / "bad.txt").string();
    CHECK_THROWS_AS(ex::cmd_estimate_pbar(cfg, dir.path(), out), ex::UsageError);
  }

  TEST_CASE("run_command maps errors to exit codes") {
    ScratchDir dir("run");
    std::ostringstream out, err;
    ex::CommandOptions opts;
    opts.out_dir = dir.path() / "nested" / "out";
    opts.assignments = {"grid_points=9"};
    CHECK(ex::run_command("weight-curves", opts, out, err) == ex::kExitOk);
    CHECK(fs::exists(opts.out_dir / "resolved_config.json"));
    opts.assignments = {"bogus=1"};
    CHECK(ex::run_command("weight-curves", opts, out, err) == ex::kExitUsage);
    opts.assignments = {};
    CHECK(ex::run_command("nope", opts, out, err) == ex::kExitUsage);
  }
}

TEST_SUITE("tradeoff") {
  ex::TradeoffSpec small_spec() {
    ex::TradeoffSpec spec;
    spec.task = small_task();
    spec.rules = {WeightRule::sft(), WeightRule::dft(), WeightRule::info_sft(0.93)};
    spec.learning_rates = {0.1, 1.0};
    spec.epochs = {1};
    spec.seeds = {0, 1};
    spec.batch_size = 10;
    return spec;
  }

  TEST_CASE("records are ordered and independent of the job count") {
    const auto spec = small_spec();
    const auto one = ex::run_tradeoff(spec, 1);
    const auto four = ex::run_tradeoff(spec, 4);
    REQUIRE(one.size() == 2 * 3 * 2);
    REQUIRE(four.size() == one.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
      CHECK(one[i].rule == four[i].rule);
      CHECK(one[i].new_task_fit == four[i].new_task_fit);
      CHECK(one[i].retention_kl == four[i].retention_kl);
      CHECK(one[i].status == "ok");
    }
    CHECK(one[0].seed == 0);
    CHECK(one.back().seed == 1);
  }

  TEST_CASE("vanishing learning rate leaves the base untouched") {
    auto spec = small_spec();
    spec.learning_rates = {1e-12};
    for (const auto& r : ex::run_tradeoff(spec, 2)) {
      
      CHECK(r.retention_kl < 1e-9);
    }
  }

  TEST_CASE("a diverging cell does not affect the others") {
    auto spec = small_spec();
    spec.rules = {WeightRule::dft(), WeightRule::calibrated(1e307)};
    spec.learning_rates = {0.5, 1e3};
    spec.epochs = {50};
    spec.seeds = {0};
    const auto records = ex::run_tradeoff(spec, 3);
    REQUIRE(records.size() == 4);
    std::size_t diverged = 0;
    for (const auto& r : records) {
      if (r.status == "diverged") {
        ++diverged;
        CHECK(std::isnan(r.new_task_fit));
      } else {
        CHECK(r.status == "ok");
        CHECK(std::isfinite(r.new_task_fit));
      }
    }
    CHECK(diverged >= 1);
    auto solo = spec;
    solo.rules = {WeightRule::dft()};
    const auto clean = ex::run_tradeoff(solo, 1);
    CHECK(clean[0].new_task_fit == records[0].new_task_fit);
    CHECK(clean[1].new_task_fit == records[1].new_task_fit);
  }

  TEST_CASE("rule families") {
    CHECK(ex::rule_family("infosft(0.93)") == "infosft");
    CHECK(ex::rule_family("sft") == "sft");
    CHECK(ex::rule_family("calibrated(1.5)") == "calibrated");
  }

  TEST_CASE("matched comparison pairs by seed and retention") {
    std::vector<ex::TradeoffRecord> rs(4);
    rs[0] = {.rule = "infosft(0.93)", .seed = 0, .new_task_fit = 1.0, .retention_kl = 1.0};
    rs[1] = {.rule = "dft", .seed = 0, .new_task_fit = 2.0, .retention_kl = 1.02};
    rs[2] = {.rule = "dft", .seed = 0, .new_task_fit = 0.5, .retention_kl = 2.0};  // retention too far
    rs[3] = {.rule = "dft", .seed = 1, .new_task_fit = 0.1, .retention_kl = 1.0};  // other seed
    const auto m = ex::matched_retention_comparison(rs, "infosft", "dft", 0.05);
    CHECK(m.comparisons == 1);
    CHECK(m.wins == 1);
    CHECK(m.win_rate() == 1.0);
    CHECK(ex::matched_retention_comparison(rs, "sft", "dft", 0.05).win_rate() == 0.0);
  }

  TEST_CASE("pareto frontier") {
    const std::vector<std::pair<double, double>> pts = {{1, 5}, {2, 3}, {3, 4}, {4, 1}, {2, 3.5}};
    auto f = ex::pareto_frontier(pts);
    std::sort(f.begin(), f.end());
    CHECK(f == std::vector<std::size_t>{0, 1, 3});
  }

  TEST_CASE("invalid specs are rejected") {
    auto spec = small_spec();
    spec.seeds.clear();
    CHECK_THROWS(ex::run_tradeoff(spec));
    spec = small_spec();
    spec.learning_rates = {-1.0};
    CHECK_THROWS(ex::run_tradeoff(spec));
  }
}
