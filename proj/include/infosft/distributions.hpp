// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace infosft {

/// Seeded random source. Each worker owns its own instance.
using Rng = std::mt19937_64;

/// KL requested where the second argument has no mass on part of the first's
/// support.
class SupportMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Rejection sampling gave up before producing a valid draw.
class ResampleBudgetExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Normalized probability vector over tokens 0..K-1, K >= 2. Immutable.
class CategoricalDistribution {
 public:
  enum class Mode {
    kReject,     ///< throw unless entries already sum to 1 within 1e-12
    kNormalize,  ///< divide by the sum (which must be positive and finite)
  };

  explicit CategoricalDistribution(std::vector<double> probs, Mode mode = Mode::kReject);

  static CategoricalDistribution uniform(std::size_t k);
  static CategoricalDistribution one_hot(std::size_t k, std::size_t index);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  friend bool operator==(const CategoricalDistribution&, const CategoricalDistribution&) = default;

 private:
  std::vector<double> probs_;
};

/// An expert distribution p*, a base distribution pi_0 and the observed
/// token y* drawn from the expert.
struct DistributionPair {
  DistributionPair(CategoricalDistribution expert_dist, CategoricalDistribution base_dist,
                   std::size_t target);

  CategoricalDistribution expert;
  CategoricalDistribution base;
  std::size_t target_index;

  /// Expert probability of the observed token.
  double p() const { return expert[target_index]; }
  /// Base probability of the observed token.
  double q() const { return base[target_index]; }
};

/// sum_i p_i log(p_i / r_i), nats, 0 log 0 = 0. Exact enumeration.
double kl_divergence(const CategoricalDistribution& p, const CategoricalDistribution& r);

/// Same enumeration with r given as log-probabilities; lets callers evaluate
/// KL against distributions whose entries underflow in linear space.
double kl_divergence_log(const CategoricalDistribution& p, std::span<const double> log_r);

double entropy(const CategoricalDistribution& p);

/// Draws an index with probability p[i] by inverse CDF.
std::size_t sample(const CategoricalDistribution& p, Rng& rng);

/// Symmetric Dirichlet(alpha) draw over k outcomes. Gamma variates are drawn
/// in log space so that alpha << 1 does not underflow to an all-zero vector.
std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng);

/// Parameters of the synthetic (expert, base, target) population generator.
struct PopulationSpec {
  std::size_t alphabet_size = 10;
  std::size_t count = 1000;
  double expert_concentration = 1.0;
  double base_concentration = 1.0;
  /// base = (1 - mixing) * Dirichlet draw + mixing * expert.
  double base_mixing = 0.0;
  /// Upper bound d on q = base[target]; pairs violating it are redrawn.
  double max_target_prob = 1.0;
  /// Every distribution is mixed with uniform at this weight so that all
  /// entries are strictly positive and p < 1.
  double floor = 1e-9;
  std::size_t max_attempts_per_pair = 100000;

  void validate() const;
};

std::vector<DistributionPair> random_population(const PopulationSpec& spec, Rng& rng);

/// Line-oriented population format: a header line, then one record per pair
/// `K expert[0..K) base[0..K) target`.
void write_population(std::ostream& out, std::span<const DistributionPair> population);
std::vector<DistributionPair> read_population(std::istream& in);

}  // namespace infosft
