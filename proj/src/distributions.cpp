// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#include "infosft/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "infosft/numerics.hpp"
#include "infosft/text_format.hpp"

namespace infosft {

namespace {

constexpr double kSumTolerance = 1e-12;
constexpr const char* kPopulationHeader = "# infosft-population v1";

}  // namespace

CategoricalDistribution::CategoricalDistribution(std::vector<double> probs, Mode mode)
    : probs_(std::move(probs)) {
  if (probs_.size() < 2) {
    throw std::invalid_argument("categorical distribution needs at least 2 outcomes");
  }
  for (double v : probs_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("categorical distribution entries must be finite and >= 0");
    }
  }
  const double total = std::accumulate(probs_.begin(), probs_.end(), 0.0);
  if (mode == Mode::kNormalize) {
    if (!(total > 0.0) || !std::isfinite(total)) {
      throw std::invalid_argument("cannot normalize a vector with non-positive sum");
    }
    for (double& v : probs_) v /= total;
  } else if (std::abs(total - 1.0) > kSumTolerance) {
    throw std::invalid_argument("categorical distribution does not sum to 1 (sum = " +
                                text::format_double(total) + ")");
  }
}

CategoricalDistribution CategoricalDistribution::uniform(std::size_t k) {
  return CategoricalDistribution(std::vector<double>(k, 1.0), Mode::kNormalize);
}

CategoricalDistribution CategoricalDistribution::one_hot(std::size_t k, std::size_t index) {
  if (index >= k) throw std::out_of_range("one_hot index out of range");
  std::vector<double> v(k, 0.0);
  v[index] = 1.0;
  return CategoricalDistribution(std::move(v));
}

DistributionPair::DistributionPair(CategoricalDistribution expert_dist,
                                   CategoricalDistribution base_dist, std::size_t target)
    : expert(std::move(expert_dist)), base(std::move(base_dist)), target_index(target) {
  if (expert.size() != base.size()) {
    throw std::invalid_argument("expert and base alphabets differ");
  }
  if (target_index >= expert.size()) {
    throw std::out_of_range("target index outside the alphabet");
  }
  if (!(base[target_index] > 0.0)) {
    throw std::invalid_argument("base assigns zero probability to the target token");
  }
}

double kl_divergence(const CategoricalDistribution& p, const CategoricalDistribution& r) {
  if (p.size() != r.size()) throw std::invalid_argument("KL: alphabet sizes differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (r[i] == 0.0) {
      throw SupportMismatchError("KL: r has no mass at index " + std::to_string(i) +
                                 " where p does");
    }
    kl += p[i] * std::log(p[i] / r[i]);
  }
  return kl;
}

double kl_divergence_log(const CategoricalDistribution& p, std::span<const double> log_r) {
  if (p.size() != log_r.size()) throw std::invalid_argument("KL: alphabet sizes differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (log_r[i] == -std::numeric_limits<double>::infinity()) {
      throw SupportMismatchError("KL: r has no mass at index " + std::to_string(i) +
                                 " where p does");
    }
    kl += p[i] * (std::log(p[i]) - log_r[i]);
  }
  return kl;
}

double entropy(const CategoricalDistribution& p) {
  double h = 0.0;
  for (double v : p.probs()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

std::size_t sample(const CategoricalDistribution& p, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double cumulative = 0.0;
  std::size_t last_supported = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    cumulative += p[i];
    last_supported = i;
    if (u < cumulative) return i;
  }
  // Rounding left the cumulative sum a hair below u.
  return last_supported;
}

std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("Dirichlet concentration must be positive");
  }
  // G ~ Gamma(alpha) equals Gamma(alpha + 1) * U^{1/alpha} in law.
  std::gamma_distribution<double> gamma(alpha + 1.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> log_g(k);
  for (auto& lg : log_g) {
    double u = unif(rng);
    while (u == 0.0) u = unif(rng);
    lg = std::log(gamma(rng)) + std::log(u) / alpha;
  }
  const double hi = *std::max_element(log_g.begin(), log_g.end());
  std::vector<double> out(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = std::exp(log_g[i] - hi);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

void PopulationSpec::validate() const {
  if (alphabet_size < 2) throw std::invalid_argument("population: alphabet_size must be >= 2");
  if (count == 0) throw std::invalid_argument("population: count must be >= 1");
  if (!(expert_concentration > 0.0) || !(base_concentration > 0.0)) {
    throw std::invalid_argument("population: concentrations must be positive");
  }
  if (!(base_mixing >= 0.0 && base_mixing < 1.0)) {
    throw std::invalid_argument("population: base_mixing must lie in [0, 1)");
  }
  if (!(max_target_prob > 0.0 && max_target_prob <= 1.0)) {
    throw std::invalid_argument("population: max_target_prob must lie in (0, 1]");
  }
  if (!(floor > 0.0 && floor < 1.0)) {
    throw std::invalid_argument("population: floor must lie in (0, 1)");
  }
  if (max_attempts_per_pair == 0) {
    throw std::invalid_argument("population: max_attempts_per_pair must be >= 1");
  }
}

namespace {

std::vector<double> floored(std::vector<double> v, double floor) {
  const double share = floor / static_cast<double>(v.size());
  for (auto& x : v) x = (1.0 - floor) * x + share;
  return v;
}

}  // namespace

std::vector<DistributionPair> random_population(const PopulationSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t k = spec.alphabet_size;
  std::vector<DistributionPair> out;
  out.reserve(spec.count);
  for (std::size_t n = 0; n < spec.count; ++n) {
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < spec.max_attempts_per_pair; ++attempt) {
      auto expert_probs = floored(sample_dirichlet(k, spec.expert_concentration, rng), spec.floor);
      auto base_raw = sample_dirichlet(k, spec.base_concentration, rng);
      for (std::size_t i = 0; i < k; ++i) {
        base_raw[i] = (1.0 - spec.base_mixing) * base_raw[i] + spec.base_mixing * expert_probs[i];
      }
      CategoricalDistribution expert(std::move(expert_probs), CategoricalDistribution::Mode::kNormalize);
      CategoricalDistribution base(floored(std::move(base_raw), spec.floor),
                                   CategoricalDistribution::Mode::kNormalize);
      const std::size_t target = sample(expert, rng);
      if (base[target] <= spec.max_target_prob) {
        out.emplace_back(std::move(expert), std::move(base), target);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw ResampleBudgetExhausted("population: no pair with q <= " +
                                    text::format_double(spec.max_target_prob) + " after " +
                                    std::to_string(spec.max_attempts_per_pair) + " attempts");
    }
  }
  return out;
}

void write_population(std::ostream& out, std::span<const DistributionPair> population) {
  out << kPopulationHeader << '\n';
  for (const auto& pair : population) {
    out << pair.expert.size();
    for (double v : pair.expert.probs()) out << ' ' << text::format_double(v);
    for (double v : pair.base.probs()) out << ' ' << text::format_double(v);
    out << ' ' << pair.target_index << '\n';
  }
}

std::vector<DistributionPair> read_population(std::istream& in) {
  std::vector<DistributionPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tokens = text::split_ws(line);
    if (tokens.empty()) continue;
    const auto k = static_cast<std::size_t>(text::parse_int(tokens[0]));
    if (tokens.size() != 2 * k + 2) {
      throw std::invalid_argument("population line " + std::to_string(line_no) +
                                  ": expected " + std::to_string(2 * k + 2) + " fields");
    }
    std::vector<double> expert(k), base(k);
    for (std::size_t i = 0; i < k; ++i) {
      expert[i] = text::parse_double(tokens[1 + i]);
      base[i] = text::parse_double(tokens[1 + k + i]);
    }
    const auto target = static_cast<std::size_t>(text::parse_int(tokens[2 * k + 1]));
    out.emplace_back(CategoricalDistribution(std::move(expert)),
                     CategoricalDistribution(std::move(base)), target);
  }
  return out;
}

}  // namespace infosft
