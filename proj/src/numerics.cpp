// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#include "infosft/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace infosft {

Probability::Probability(double value) : value_(value) {
  if (!(value > 0.0) || value > 1.0) {
    throw DomainError("probability must lie in (0, 1], got " + std::to_string(value));
  }
}

namespace numerics {

double logit(double t) {
  if (!(t > 0.0 && t < 1.0)) {
    throw DomainError("logit requires 0 < t < 1, got " + std::to_string(t));
  }
  // log1p keeps precision for small t; for t near 1 the (1 - t) term is exact
  // in binary when t came from a probability.
  return std::log(t) - std::log1p(-t);
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double binary_entropy(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("binary_entropy requires 0 <= t <= 1, got " + std::to_string(t));
  }
  double h = 0.0;
  if (t > 0.0) h -= t * std::log(t);
  if (t < 1.0) h -= (1.0 - t) * std::log1p(-t);
  return h;
}

double clip_nonneg(double x) noexcept { return std::max(x, 0.0); }

double log_add_exp(double a, double b) noexcept {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace numerics
}  // namespace infosft
