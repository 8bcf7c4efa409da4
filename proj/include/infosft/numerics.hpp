// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#pragma once

#include <stdexcept>
#include <string>

namespace infosft {

/// Thrown when a scalar lies outside the domain an operation accepts.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A probability in (0, 1]. Construction rejects NaN, non-positive values and
/// values above one.
class Probability {
 public:
  explicit Probability(double value);

  double value() const noexcept { return value_; }
  operator double() const noexcept { return value_; }

  /// True when 0 < value < 1, i.e. logit(value) is finite.
  bool interior() const noexcept { return value_ < 1.0; }

 private:
  double value_;
};

namespace numerics {

/// log(t / (1 - t)). Throws DomainError unless 0 < t < 1; callers that may
/// see t == 1 must clip first.
double logit(double t);

/// 1 / (1 + e^{-x}), evaluated without overflow for either sign of x.
double sigmoid(double x) noexcept;

/// -t log t - (1-t) log(1-t) in nats, with 0 log 0 = 0.
double binary_entropy(double t);

/// max(x, 0).
double clip_nonneg(double x) noexcept;

/// log(e^a + e^b) without overflow.
double log_add_exp(double a, double b) noexcept;

}  // namespace numerics
}  // namespace infosft
