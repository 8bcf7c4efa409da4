// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#include "infosft/proximal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "infosft/numerics.hpp"
#include "infosft/text_format.hpp"

namespace infosft::proximal {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kBracket = 50.0;
constexpr double kDerivativeTolerance = 1e-12;
constexpr double kE2 = std::numbers::e * std::numbers::e;
// e^b is finite for b below ~709.78.
constexpr double kDirectBranchLimit = 700.0;

double log_sum_exp(std::span<const double> v) {
  double hi = kNegInf;
  for (double x : v) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

double u_for_pair(const WeightRule& rule, const DistributionPair& pair) {
  if (const auto* oracle = std::get_if<rules::Oracle>(&rule.kind()); oracle && !oracle->p) {
    return oracle_u(pair.p(), pair.q());
  }
  return u_coefficient(rule, pair.q());
}

template <class Fn>
double bisect_increasing(Fn&& fn, double lo, double hi, const char* what) {
  double f_lo = fn(lo);
  double f_hi = fn(hi);
  if (!(f_lo < 0.0 && f_hi > 0.0)) {
    if (f_lo == 0.0) return lo;
    if (f_hi == 0.0) return hi;
    throw BracketError(std::string(what) + ": no sign change on [" + text::format_double(lo) +
                       ", " + text::format_double(hi) + "]");
  }
  double mid = 0.5 * (lo + hi);
  for (int iter = 0; iter < 400; ++iter) {
    mid = 0.5 * (lo + hi);
    const double f_mid = fn(mid);
    if (std::abs(f_mid) <= kDerivativeTolerance) break;
    if (f_mid < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(mid))) {
      break;
    }
  }
  return mid;
}

}  // namespace

double delta_kl_closed(double p, double q, double u) {
  const double log_z = numerics::log_add_exp(std::log(q) + u, std::log1p(-q));
  return log_z - p * u;
}

double delta_kl_second_derivative(double q, double u) {
  // pi(y*) = q e^u / Z = sigmoid(logit(q) + u); for q == 1 the tilt is moot.
  if (q >= 1.0) return 0.0;
  const double pi = numerics::sigmoid(numerics::logit(q) + u);
  return pi * (1.0 - pi);
}

ProximalOutcome gibbs_update(const DistributionPair& pair, double u) {
  if (!std::isfinite(u)) {
    throw DomainError("gibbs_update: u must be finite");
  }
  const double p = pair.p();
  const double q = pair.q();
  const std::size_t k = pair.base.size();

  std::vector<double> log_weights(k);
  for (std::size_t i = 0; i < k; ++i) {
    log_weights[i] = pair.base[i] > 0.0 ? std::log(pair.base[i]) : kNegInf;
  }
  log_weights[pair.target_index] += u;
  const double log_norm = log_sum_exp(log_weights);

  std::vector<double> log_updated(k);
  std::vector<double> updated(k);
  for (std::size_t i = 0; i < k; ++i) {
    log_updated[i] = log_weights[i] - log_norm;
    updated[i] = std::exp(log_updated[i]);
  }

  const double log_z = numerics::log_add_exp(std::log(q) + u, std::log1p(-q));
  const double enumerated =
      kl_divergence_log(pair.expert, log_updated) - kl_divergence(pair.expert, pair.base);

  return ProximalOutcome{
      .updated = CategoricalDistribution(std::move(updated), CategoricalDistribution::Mode::kNormalize),
      .partition = std::exp(log_z),
      .log_partition = log_z,
      .u = u,
      .delta_kl_closed = log_z - p * u,
      .delta_kl_enumerated = enumerated,
  };
}

double oracle_u(double p, double q) { return numerics::logit(p) - numerics::logit(q); }

std::vector<CurvePoint> delta_kl_curve(const DistributionPair& pair, std::span<const double> u_grid) {
  std::vector<CurvePoint> out;
  out.reserve(u_grid.size());
  const double p = pair.p();
  const double q = pair.q();
  for (double u : u_grid) {
    if (!std::isfinite(u)) throw DomainError("delta_kl_curve: u must be finite");
    out.push_back({u, delta_kl_closed(p, q, u)});
  }
  return out;
}

double population_p_bar(std::span<const DistributionPair> population) {
  if (population.empty()) throw std::invalid_argument("empty population");
  double s = 0.0;
  for (const auto& pair : population) s += pair.p();
  return s / static_cast<double>(population.size());
}

double population_max_q(std::span<const DistributionPair> population) {
  double m = 0.0;
  for (const auto& pair : population) m = std::max(m, pair.q());
  return m;
}

ExpectedKlReport expected_delta_kl(std::span<const DistributionPair> population,
                                   const WeightRule& rule) {
  if (population.empty()) throw std::invalid_argument("expected_delta_kl: empty population");
  ExpectedKlReport report;
  report.rule = rule.name();
  report.count = population.size();
  report.per_pair.reserve(population.size());
  report.per_pair_closed.reserve(population.size());
  double sum = 0.0;
  double sum_closed = 0.0;
  for (std::size_t i = 0; i < population.size(); ++i) {
    try {
      const auto outcome = gibbs_update(population[i], u_for_pair(rule, population[i]));
      report.per_pair.push_back(outcome.delta_kl_enumerated);
      report.per_pair_closed.push_back(outcome.delta_kl_closed);
      sum += outcome.delta_kl_enumerated;
      sum_closed += outcome.delta_kl_closed;
    } catch (const std::exception& e) {
      throw PairEvaluationError(i, e.what());
    }
  }
  const auto n = static_cast<double>(population.size());
  report.mean_delta_kl = sum / n;
  report.mean_delta_kl_closed = sum_closed / n;
  report.p_bar = population_p_bar(population);
  report.max_q = population_max_q(population);
  return report;
}

double c_star_derivative(std::span<const DistributionPair> population, double c) {
  if (population.empty()) throw std::invalid_argument("c_star_derivative: empty population");
  double s = 0.0;
  for (const auto& pair : population) {
    const double q = pair.q();
    if (!(q < 1.0)) throw DomainError("c_star_derivative: q must be < 1");
    // e^C / (e^C + (1-q)^2) = sigmoid(C - 2 log(1 - q))
    s += numerics::sigmoid(c - 2.0 * std::log1p(-q));
  }
  return s / static_cast<double>(population.size()) - population_p_bar(population);
}

double solve_c_star(std::span<const DistributionPair> population) {
  return bisect_increasing([&](double c) { return c_star_derivative(population, c); }, -kBracket,
                           kBracket, "solve_c_star");
}

double expected_kl_minimizer_c(std::span<const DistributionPair> population) {
  if (population.empty()) throw std::invalid_argument("expected_kl_minimizer_c: empty population");
  const double p_bar = population_p_bar(population);
  const auto derivative = [&](double c) {
    double s = 0.0;
    for (const auto& pair : population) {
      const double q = pair.q();
      const double u = c - numerics::logit(q);
      s += numerics::sigmoid(numerics::logit(q) + u);
    }
    return s / static_cast<double>(population.size()) - p_bar;
  };
  return bisect_increasing(derivative, -kBracket, kBracket, "expected_kl_minimizer_c");
}

GapIdentity gap_identity_check(std::span<const DistributionPair> population) {
  const double p_bar = population_p_bar(population);
  const auto info = expected_delta_kl(population, WeightRule::calibrated(numerics::logit(p_bar)));
  const auto oracle = expected_delta_kl(population, WeightRule::oracle());
  double mean_hb = 0.0;
  for (const auto& pair : population) mean_hb += numerics::binary_entropy(pair.p());
  mean_hb /= static_cast<double>(population.size());
  return {info.mean_delta_kl - oracle.mean_delta_kl, numerics::binary_entropy(p_bar) - mean_hb};
}

DominanceReport dominance_check(std::span<const DistributionPair> population, double d) {
  const double p_bar = population_p_bar(population);
  const double max_q = population_max_q(population);
  if (max_q > d) {
    throw PreconditionViolation("dominance: max q = " + text::format_double(max_q) +
                                " exceeds d = " + text::format_double(d));
  }
  if (d > p_bar / kE2) {
    throw PreconditionViolation("dominance: d = " + text::format_double(d) +
                                " exceeds p_bar/e^2 = " + text::format_double(p_bar / kE2));
  }
  DominanceReport r{};
  r.p_bar = p_bar;
  r.d = d;
  r.clip_inactive = max_q < p_bar;
  r.info_sft = expected_delta_kl(population, WeightRule::info_sft(p_bar)).mean_delta_kl;
  r.dft = expected_delta_kl(population, WeightRule::dft()).mean_delta_kl;
  r.sft = expected_delta_kl(population, WeightRule::sft()).mean_delta_kl;
  r.oracle = expected_delta_kl(population, WeightRule::oracle()).mean_delta_kl;
  r.sft_clause_applies = p_bar <= 0.98;
  r.info_beats_dft = r.info_sft < r.dft;
  r.info_beats_sft = r.info_sft < r.sft;
  return r;
}

RatioBoundReport ratio_bound_check(std::span<const DistributionPair> population, double d,
                                   double constant) {
  const double p_bar = population_p_bar(population);
  if (population_max_q(population) > d) {
    throw PreconditionViolation("ratio bound: some q exceeds d");
  }
  if (d > p_bar * std::exp(-6.0)) {
    throw PreconditionViolation("ratio bound: d exceeds p_bar e^-6");
  }
  const double info =
      expected_delta_kl(population, WeightRule::calibrated(numerics::logit(p_bar))).mean_delta_kl;
  const double oracle = expected_delta_kl(population, WeightRule::oracle()).mean_delta_kl;
  const double bound =
      1.0 - constant * std::max(std::log(1.0 / p_bar), 1.0) / std::log(1.0 / d);
  return {info / oracle, bound, info, oracle};
}

double g_function(double x, GBranch branch) {
  if (!(x > 0.0 && x < 1.0)) throw DomainError("G(x) requires 0 < x < 1");
  const double a = x / kE2;
  const double b = kE2 / x;
  if (branch == GBranch::kAuto) {
    branch = b <= kDirectBranchLimit ? GBranch::kDirect : GBranch::kLogSpace;
  }
  double log_term = 0.0;
  if (branch == GBranch::kDirect) {
    log_term = std::log1p(a * std::expm1(b));
  } else {
    // 1 + a(e^b - 1) = a e^b (1 + (1 - a) e^{-b} / a)
    log_term = std::log(x) - 2.0 + b + std::log1p((1.0 - a) * std::exp(-b) / a);
  }
  return (1.0 - x) * log_term + x * std::log(x) + (1.0 - x) * std::log1p(-x);
}

GPositivityReport verify_g_positive(std::span<const double> x_grid) {
  GPositivityReport r;
  r.min_value = std::numeric_limits<double>::infinity();
  for (double x : x_grid) {
    const double g = g_function(x);
    ++r.points;
    if (!(g > 0.0)) ++r.non_positive;
    if (g < r.min_value) {
      r.min_value = g;
      r.argmin = x;
    }
  }
  return r;
}

double g_positive_threshold() {
  double lo = 0.98;
  double hi = 0.999;
  if (!(g_function(lo) > 0.0) || g_function(hi) > 0.0) {
    throw BracketError("g_positive_threshold: G does not change sign on [0.98, 0.999]");
  }
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (g_function(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

}  // namespace infosft::proximal
