// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "infosft/distributions.hpp"
#include "infosft/weighting.hpp"

namespace infosft::proximal {

/// An input falls outside the regime where a population bound applies.
class PreconditionViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bisection could not bracket a root.
class BracketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while evaluating one pair of a population.
class PairEvaluationError : public std::runtime_error {
 public:
  PairEvaluationError(std::size_t index, const std::string& what)
      : std::runtime_error("pair " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Result of tilting the base distribution by e^u on the observed token.
struct ProximalOutcome {
  CategoricalDistribution updated;
  /// Z = q e^u + 1 - q; +inf once e^u overflows, see log_partition.
  double partition;
  double log_partition;
  double u;
  /// log Z - p u.
  double delta_kl_closed;
  /// KL(p* || pi) - KL(p* || pi_0) by enumeration over the alphabet.
  double delta_kl_enumerated;
};

/// Closed-form change in population KL after tilting by u: log Z - p u.
double delta_kl_closed(double p, double q, double u);

/// Second derivative of delta_kl_closed in u: pi(y*) (1 - pi(y*)).
double delta_kl_second_derivative(double q, double u);

/// One-step proximal update. The updated distribution is normalized by a
/// log-sum-exp over the alphabet, independent of the closed-form Z, and
/// evaluated in log space so any finite u is representable.
ProximalOutcome gibbs_update(const DistributionPair& pair, double u);

/// u* = logit(p) - logit(q).
double oracle_u(double p, double q);

struct CurvePoint {
  double u;
  double delta_kl;
};

std::vector<CurvePoint> delta_kl_curve(const DistributionPair& pair, std::span<const double> u_grid);

struct ExpectedKlReport {
  std::string rule;
  double mean_delta_kl = 0.0;         ///< mean of the enumerated values
  double mean_delta_kl_closed = 0.0;  ///< mean of the closed-form values
  std::vector<double> per_pair;
  std::vector<double> per_pair_closed;
  double p_bar = 0.0;
  double max_q = 0.0;
  std::size_t count = 0;
};

/// Mean ΔKL of one proximal step per pair, with u = u_coefficient(rule, q).
/// An Oracle rule without a fixed p uses each pair's own expert probability.
ExpectedKlReport expected_delta_kl(std::span<const DistributionPair> population,
                                   const WeightRule& rule);

/// Mean expert probability of the observed tokens.
double population_p_bar(std::span<const DistributionPair> population);
double population_max_q(std::span<const DistributionPair> population);

/// g(C) = mean_i e^C / (e^C + (1 - q_i)^2) - p_bar.
double c_star_derivative(std::span<const DistributionPair> population, double c);

/// Root of c_star_derivative on [-50, 50] by bisection, |g| <= 1e-12 or
/// until the bracket collapses to machine precision.
double solve_c_star(std::span<const DistributionPair> population);

/// Minimizer over C of the mean closed-form ΔKL of u_C(q) = C - logit(q),
/// by bisection on its exact derivative mean_i pi_C(y*_i) - p_bar.
double expected_kl_minimizer_c(std::span<const DistributionPair> population);

struct GapIdentity {
  double lhs;  ///< E[ΔKL(u_info)] - E[ΔKL(u*)]
  double rhs;  ///< H_b(p_bar) - E[H_b(p)]
};

/// Uses the unclipped calibrated rule at C = logit(p_bar) for u_info.
GapIdentity gap_identity_check(std::span<const DistributionPair> population);

struct DominanceReport {
  double p_bar;
  double d;
  double info_sft;
  double dft;
  double sft;
  double oracle;
  bool sft_clause_applies;  ///< p_bar <= 0.98
  bool info_beats_dft;
  bool info_beats_sft;
  bool clip_inactive;

  bool holds() const noexcept {
    return info_beats_dft && (!sft_clause_applies || info_beats_sft);
  }
};

/// Compares InfoSFT(p_bar), DFT (u = 1) and SFT (u = 1/q) in expected ΔKL.
/// Throws PreconditionViolation if some q > d or d > p_bar / e^2.
DominanceReport dominance_check(std::span<const DistributionPair> population, double d);

struct RatioBoundReport {
  double ratio;  ///< E[ΔKL_info] / E[ΔKL*]
  double bound;  ///< 1 - c max(log(1/p_bar), 1) / log(1/d)
  double info;
  double oracle;
  bool holds() const noexcept { return ratio >= bound; }
};

/// Requires d <= p_bar e^{-6} and all q <= d.
RatioBoundReport ratio_bound_check(std::span<const DistributionPair> population, double d,
                                   double constant = 10.0);

enum class GBranch {
  kAuto,      ///< direct while e^{e^2/x} is representable, log-space beyond
  kDirect,    ///< log1p((x/e^2) expm1(e^2/x))
  kLogSpace,  ///< log(x) - 2 + e^2/x + log1p((1 - x/e^2) e^{-e^2/x} e^2/x)
};

/// G(x) = (1-x) log(1 + (x/e^2)(e^{e^2/x} - 1)) + x log x + (1-x) log(1-x).
double g_function(double x, GBranch branch = GBranch::kAuto);

struct GPositivityReport {
  std::size_t points = 0;
  std::size_t non_positive = 0;
  double min_value = 0.0;
  double argmin = 0.0;
  bool all_positive() const noexcept { return points > 0 && non_positive == 0; }
};

GPositivityReport verify_g_positive(std::span<const double> x_grid);

/// Largest x in [0.98, 0.999] with G(x) > 0, by bisection on the sign change.
double g_positive_threshold();

}  // namespace infosft::proximal
