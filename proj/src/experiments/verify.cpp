// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#include "infosft/experiments/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "infosft/numerics.hpp"
#include "infosft/proximal.hpp"
#include "infosft/text_format.hpp"

namespace infosft::experiments {

using proximal::PreconditionViolation;

std::string_view to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::kPass: return "PASS";
    case CheckStatus::kFailed: return "FAILED";
    case CheckStatus::kSkipped: return "SKIPPED";
  }
  return "FAILED";
}

double concentration_for_p_bar(std::size_t k, double t) {
  const double kd = static_cast<double>(k);
  if (!(t > 1.0 / kd && t < 1.0)) throw std::invalid_argument("target p_bar must lie in (1/K, 1)");
  return (1.0 - t) / (t * kd - 1.0);
}

std::vector<DistributionPair> constant_p_population(std::size_t k, std::size_t count, double p, double d,
                                                    Rng& rng) {
  std::vector<DistributionPair> out;
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t target = pick(rng);
    std::vector<double> expert(k, (1.0 - p) / static_cast<double>(k - 1));
    expert[target] = p;
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt == 100000) throw ResampleBudgetExhausted("constant_p_population: q <= d too rare");
      auto base = sample_dirichlet(k, 1.0, rng);
      for (double& b : base) b = 0.999 * b + 0.001 / static_cast<double>(k);
      if (base[target] <= d) {
        out.emplace_back(CategoricalDistribution(expert, CategoricalDistribution::Mode::kNormalize),
                         CategoricalDistribution(std::move(base), CategoricalDistribution::Mode::kNormalize),
                         target);
        break;
      }
    }
  }
  return out;
}

Rng section_rng(std::uint64_t seed, std::uint64_t section) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(section)};
  return Rng(seq);
}

namespace {

using text::format_double;

DistributionPair random_pair(std::size_t k_min, std::size_t k_max, double floor, Rng& rng) {
  std::uniform_int_distribution<std::size_t> kdist(k_min, k_max);
  PopulationSpec spec;
  spec.alphabet_size = kdist(rng);
  spec.count = 1;
  spec.floor = floor;
  return random_population(spec, rng).front();
}

CheckResult bounded(std::string name, double measured, double tolerance, std::string detail = {}) {
  return {std::move(name), measured <= tolerance ? CheckStatus::kPass : CheckStatus::kFailed, measured, tolerance,
          std::move(detail)};
}

void identity_section(const Json& cfg, std::uint64_t seed, std::vector<CheckResult>& out) {
  Rng rng = section_rng(seed, 1);
  const auto samples = get_uint(cfg, "samples");
  const auto k_min = get_uint(cfg, "alphabet_min");
  const auto k_max = get_uint(cfg, "alphabet_max");
  const double u_max = get_double(cfg, "u_max");
  std::uniform_real_distribution<double> udist(-u_max, u_max);
  double worst = 0.0;
  for (std::uint64_t i = 0; i < samples; ++i) {
    const auto pair = random_pair(k_min, k_max, 1e-9, rng);
    const auto o = proximal::gibbs_update(pair, udist(rng));
    worst = std::max(worst, std::abs(o.delta_kl_closed - o.delta_kl_enumerated));
  }
  out.push_back(bounded("closed_form_vs_enumeration", worst, get_double(cfg, "tolerance"),
                        std::to_string(samples) + " samples"));
}

void oracle_section(const Json& cfg, std::uint64_t seed, std::vector<CheckResult>& out) {
  Rng rng = section_rng(seed, 2);
  const auto pairs = get_uint(cfg, "pairs");
  const double range = get_double(cfg, "u_range");
  const double step = get_double(cfg, "grid_step");
  const auto n = static_cast<long>(std::llround(2.0 * range / step));
  double worst_arg = 0.0;
  double worst_prob = 0.0;
  std::size_t skipped = 0;
  for (std::uint64_t i = 0; i < pairs; ++i) {
    const auto pair = random_pair(get_uint(cfg, "alphabet_min"), get_uint(cfg, "alphabet_max"), 1e-3, rng);
    const double u_star = proximal::oracle_u(pair.p(), pair.q());
    worst_prob = std::max(worst_prob,
                          std::abs(proximal::gibbs_update(pair, u_star).updated[pair.target_index] - pair.p()));
    if (std::abs(u_star) > range - step) {
      ++skipped;
      continue;
    }
    double best_u = -range;
    double best = std::numeric_limits<double>::infinity();
    for (long j = 0; j <= n; ++j) {
      const double u = -range + step * static_cast<double>(j);
      const double v = proximal::delta_kl_closed(pair.p(), pair.q(), u);
      if (v < best) {
        best = v;
        best_u = u;
      }
    }
    worst_arg = std::max(worst_arg, std::abs(best_u - u_star));
  }
  out.push_back(bounded("oracle_grid_argmin", worst_arg, step,
                        std::to_string(pairs - skipped) + " pairs searched, " + std::to_string(skipped) +
                            " with |u*| outside the grid"));
  out.push_back(bounded("oracle_target_probability", worst_prob, get_double(cfg, "tolerance"),
                        std::to_string(pairs) + " pairs"));
}

void convexity_section(const Json& cfg, std::uint64_t seed, std::vector<CheckResult>& out) {
  Rng rng = section_rng(seed, 3);
  const auto pairs = get_uint(cfg, "pairs");
  const double range = get_double(cfg, "u_range");
  const double h = get_double(cfg, "grid_step");
  const auto n = static_cast<long>(std::llround(2.0 * range / h));
  std::vector<double> grid;
  for (long j = 0; j <= n; ++j) grid.push_back(-range + h * static_cast<double>(j));
  double min_second = std::numeric_limits<double>::infinity();
  double worst_rel = 0.0;
  std::size_t non_positive = 0;
  for (std::uint64_t i = 0; i < pairs; ++i) {
    const auto pair = random_pair(get_uint(cfg, "alphabet_min"), get_uint(cfg, "alphabet_max"), 1e-3, rng);
    const auto curve = proximal::delta_kl_curve(pair, grid);
    for (std::size_t j = 1; j + 1 < curve.size(); ++j) {
      const double second = (curve[j + 1].delta_kl - 2.0 * curve[j].delta_kl + curve[j - 1].delta_kl) / (h * h);
      const double analytic = proximal::delta_kl_second_derivative(pair.q(), curve[j].u);
      min_second = std::min(min_second, second);
      if (!(second > 0.0)) ++non_positive;
      worst_rel = std::max(worst_rel, std::abs(second - analytic) / analytic);
    }
  }
  out.push_back({"convexity_second_difference_positive", non_positive == 0 ? CheckStatus::kPass : CheckStatus::kFailed,
                 min_second, 0.0, std::to_string(non_positive) + " non-positive second differences"});
  out.push_back(bounded("convexity_matches_pi_one_minus_pi", worst_rel, get_double(cfg, "rel_tolerance"),
                        std::to_string(pairs) + " pairs"));
}

void c_star_section(const Json& cfg, std::uint64_t seed, std::vector<CheckResult>& out) {
  Rng rng = section_rng(seed, 4);
  const auto pops = get_uint(cfg, "populations");
  const auto sizes = get_uints(cfg, "alphabet_sizes");
  const auto ds = get_doubles(cfg, "d_values");
  const double delta = get_double(cfg, "perturbation");
  double worst_ratio = 0.0;
  double worst_local = -std::numeric_limits<double>::infinity();
  for (std::uint64_t i = 0; i < pops; ++i) {
    PopulationSpec spec;
    spec.alphabet_size = sizes[i % sizes.size()];
    spec.count = get_uint(cfg, "count");
    spec.expert_concentration = get_double(cfg, "expert_concentration");
    spec.max_target_prob = ds[(i / sizes.size()) % ds.size()];
    const auto pop = random_population(spec, rng);
    const double c = proximal::solve_c_star(pop);
    const double lp = numerics::logit(proximal::population_p_bar(pop));
    worst_ratio = std::max(worst_ratio, std::abs(c - lp) / spec.max_target_prob);
    const auto e = [&](double cc) { return proximal::expected_delta_kl(pop, WeightRule::calibrated(cc)).mean_delta_kl; };
    worst_local = std::max(worst_local, e(c) - std::min(e(c + delta), e(c - delta)));
  }
  out.push_back(bounded("c_star_within_bound", worst_ratio, get_double(cfg, "bound_factor"),
                        "max |C* - logit(p_bar)| / d over " + std::to_string(pops) + " populations"));
  out.push_back(bounded("c_star_locally_optimal", worst_local, 0.0,
                        "max E[dKL(C*)] - min E[dKL(C* +- " + format_double(delta) + ")]"));
}

void gap_section(const Json& cfg, std::uint64_t seed, std::vector<CheckResult>& out) {
  Rng rng = section_rng(seed, 5);
  const auto pops = get_uint(cfg, "populations");
  const auto sizes = get_uints(cfg, "alphabet_sizes");
  double worst = 0.0;
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::uint64_t i = 0; i < pops; ++i) {
    PopulationSpec spec;
    spec.alphabet_size = sizes[i % sizes.size()];
    spec.count = get_uint(cfg, "count");
    spec.expert_concentration = get_double(cfg, "expert_concentration");
    spec.max_target_prob = get_double(cfg, "max_target_prob");
    const auto gap = proximal::gap_identity_check(random_population(spec, rng));
    worst = std::max(worst, std::abs(gap.lhs - gap.rhs));
    min_gap = std::min(min_gap, gap.lhs);
  }
  out.push_back(bounded("gap_identity", worst, get_double(cfg, "tolerance"), std::to_string(pops) + " populations"));
  out.push_back({"gap_nonnegative", min_gap >= -1e-12 ? CheckStatus::kPass : CheckStatus::kFailed, min_gap, -1e-12,
                 "minimum gap; must be >= tolerance"});
  double worst_constant = 0.0;
  const auto constant = get_uint(cfg, "constant_p_populations");
  for (std::uint64_t i = 0; i < constant; ++i) {
    const double p = 0.5 + 0.45 * static_cast<double>(i) / static_cast<double>(std::max<std::uint64_t>(constant, 1));
    const auto pop = constant_p_population(sizes[i % sizes.size()], get_uint(cfg, "count"), p,
                                           get_double(cfg, "max_target_prob"), rng);
    worst_constant = std::max(worst_constant, std::abs(proximal::gap_identity_check(pop).lhs));
  }
  out.push_back(bounded("gap_zero_for_constant_p", worst_constant, 1e-12,
                        std::to_string(constant) + " constant-p populations"));
}

void dominance_section(const Json& cfg, std::uint64_t seed, std::vector<CheckResult>& out) {
  Rng rng = section_rng(seed, 6);
  const auto sizes = get_uints(cfg, "alphabet_sizes");
  const auto targets = get_doubles(cfg, "target_p_bar");
  const auto per = get_uint(cfg, "populations_per_alphabet");
  const bool fixed_d = !is_unset(cfg, "d");
  const double e2 = std::exp(2.0);
  double worst_dft = -std::numeric_limits<double>::infinity();
  double worst_sft = -std::numeric_limits<double>::infinity();
  std::size_t evaluated = 0, skipped = 0, sft_evaluated = 0;
  for (const auto k : sizes) {
    for (std::uint64_t i = 0; i < per; ++i) {
      const double t = targets[i % targets.size()];
      PopulationSpec spec;
      spec.alphabet_size = k;
      spec.count = get_uint(cfg, "count");
      spec.expert_concentration = concentration_for_p_bar(k, t);
      spec.max_target_prob = fixed_d ? get_double(cfg, "d") : get_double(cfg, "d_fraction") * t / e2;
      const auto pop = random_population(spec, rng);
      try {
        const auto r = proximal::dominance_check(pop, spec.max_target_prob);
        ++evaluated;
        worst_dft = std::max(worst_dft, r.info_sft - r.dft);
        if (r.sft_clause_applies) {
          ++sft_evaluated;
          worst_sft = std::max(worst_sft, r.info_sft - r.sft);
        }
      } catch (const PreconditionViolation&) {
        ++skipped;
      }
    }
  }
  const std::string detail = std::to_string(evaluated) + " populations evaluated, " + std::to_string(skipped) +
                             " skipped (precondition q <= d <= p_bar/e^2)";
  const auto status = [](std::size_t n, double worst) {
    if (n == 0) return CheckStatus::kSkipped;
    return worst < 0.0 ? CheckStatus::kPass : CheckStatus::kFailed;
  };
  out.push_back({"dominance_over_dft", status(evaluated, worst_dft), evaluated ? worst_dft : 0.0, 0.0,
                 "max E[dKL_info] - E[dKL_dft]; " + detail});
  out.push_back({"dominance_over_sft", status(sft_evaluated, worst_sft), sft_evaluated ? worst_sft : 0.0, 0.0,
                 "max E[dKL_info] - E[dKL_sft] where p_bar <= 0.98; " + detail});
}

void ratio_section(const Json& cfg, std::uint64_t seed, std::vector<CheckResult>& out) {
  Rng rng = section_rng(seed, 7);
  const auto pops = get_uint(cfg, "populations");
  const auto sizes = get_uints(cfg, "alphabet_sizes");
  const auto ds = get_doubles(cfg, "d_values");
  double worst = std::numeric_limits<double>::infinity();
  std::size_t evaluated = 0, skipped = 0;
  for (std::uint64_t i = 0; i < pops; ++i) {
    const auto k = sizes[i % sizes.size()];
    PopulationSpec spec;
    spec.alphabet_size = k;
    spec.count = get_uint(cfg, "count");
    spec.expert_concentration = concentration_for_p_bar(k, get_double(cfg, "target_p_bar"));
    spec.base_concentration = get_double(cfg, "base_concentration");
    spec.max_target_prob = ds[(i / sizes.size()) % ds.size()];
    const auto pop = random_population(spec, rng);
    try {
      const auto r = proximal::ratio_bound_check(pop, spec.max_target_prob, get_double(cfg, "constant"));
      ++evaluated;
      worst = std::min(worst, r.ratio - r.bound);
    } catch (const PreconditionViolation&) {
      ++skipped;
    }
  }
  CheckResult r{"ratio_bound", CheckStatus::kSkipped, 0.0, 0.0,
                "min ratio - bound; " + std::to_string(evaluated) + " evaluated, " + std::to_string(skipped) +
                    " skipped (precondition d <= p_bar e^-6)"};
  if (evaluated > 0) {
    r.measured = worst;
    r.status = worst >= 0.0 ? CheckStatus::kPass : CheckStatus::kFailed;
  }
  out.push_back(std::move(r));
}

void g_section(const Json& cfg, std::vector<CheckResult>& out) {
  const double lo = get_double(cfg, "x_min");
  const double hi = get_double(cfg, "x_max");
  const double step = get_double(cfg, "step");
  if (!(lo > 0.0 && hi < 1.0 && lo <= hi && step > 0.0)) {
    throw UsageError("config: g_function grid must satisfy 0 < x_min <= x_max < 1, step > 0");
  }
  std::vector<double> grid;
  const auto n = static_cast<long>(std::llround((hi - lo) / step));
  for (long i = 0; i <= n; ++i) grid.push_back(lo + step * static_cast<double>(i));
  const auto report = proximal::verify_g_positive(grid);
  out.push_back({"g_positive", report.all_positive() ? CheckStatus::kPass : CheckStatus::kFailed, report.min_value,
                 0.0,
                 std::to_string(report.points) + " grid points, minimum at x = " + format_double(report.argmin)});
  const double threshold = proximal::g_positive_threshold();
  out.push_back({"g_sign_change_beyond_grid", threshold > hi ? CheckStatus::kPass : CheckStatus::kFailed, threshold,
                 hi, "largest x with G(x) > 0; must exceed x_max"});
}

}  // namespace

std::vector<CheckResult> run_verify(const Json& config) {
  const auto seed = get_uint(config, "seed");
  std::vector<CheckResult> out;
  identity_section(get_object(config, "identity"), seed, out);
  oracle_section(get_object(config, "oracle"), seed, out);
  convexity_section(get_object(config, "convexity"), seed, out);
  c_star_section(get_object(config, "c_star"), seed, out);
  gap_section(get_object(config, "gap"), seed, out);
  dominance_section(get_object(config, "dominance"), seed, out);
  ratio_section(get_object(config, "ratio"), seed, out);
  g_section(get_object(config, "g_function"), out);
  return out;
}

}  // namespace infosft::experiments
