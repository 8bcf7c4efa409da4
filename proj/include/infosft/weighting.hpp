// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace infosft {

namespace rules {

/// Uniform token weight: Omega(q) = 1/q.
struct Sft {};
/// Likelihood-proportional weight: Omega(q) = 1.
struct Dft {};
/// Calibrated rule used for training: Omega(q) = [logit(p_bar) - logit(q)]_+.
struct InfoSft {
  double p_bar;
};
/// Unclipped theory family: Omega(q) = C - logit(q).
struct CalibratedC {
  double c;
};
/// Omega(q) = logit(p) - logit(q). Without p, population-level evaluation
/// substitutes each pair's own expert probability.
struct Oracle {
  std::optional<double> p;
};

}  // namespace rules

/// Likelihood-dependent weighting scheme. Beta is fixed to 1, so the
/// proximal coefficient u(q) equals Omega(q).
class WeightRule {
 public:
  using Kind = std::variant<rules::Sft, rules::Dft, rules::InfoSft, rules::CalibratedC, rules::Oracle>;

  static WeightRule sft() { return WeightRule(rules::Sft{}); }
  static WeightRule dft() { return WeightRule(rules::Dft{}); }
  static WeightRule info_sft(double p_bar);
  static WeightRule calibrated(double c);
  static WeightRule oracle(std::optional<double> p = std::nullopt);

  /// Parses "sft", "dft", "infosft" / "infosft:<p_bar>", "calibrated:<C>",
  /// "oracle" / "oracle:<p>". Bare "infosft" uses `default_p_bar`.
  static WeightRule parse(const std::string& text, double default_p_bar = 0.93);

  const Kind& kind() const noexcept { return kind_; }

  /// Short stable identifier, e.g. "infosft(0.93)".
  std::string name() const;

  /// "sft", "dft", "infosft", "calibrated" or "oracle".
  std::string family() const;

  template <typename T>
  bool is() const noexcept {
    return std::holds_alternative<T>(kind_);
  }

 private:
  explicit WeightRule(Kind kind) : kind_(kind) {}
  Kind kind_;
};

/// Effective reward Omega(q). q must lie in (0, 1); q == 1 is accepted only
/// by SFT and DFT.
double omega(const WeightRule& rule, double q);

/// Gradient multiplier w(q) = q * Omega(q).
double token_weight(const WeightRule& rule, double q);

/// Proximal coefficient u(q) = Omega(q) / beta with beta = 1.
double u_coefficient(const WeightRule& rule, double q);

struct WeightPoint {
  double q;
  double w;
};

/// Pointwise token_weight over `grid`; every grid value must lie in (0, 1).
std::vector<WeightPoint> weight_curve(const WeightRule& rule, std::span<const double> grid);

/// n points i/(n+1), i = 1..n.
std::vector<double> open_unit_grid(std::size_t n);

/// Number of sign changes in the first differences of `values`, ignoring
/// zero differences.
std::size_t difference_sign_changes(std::span<const double> values);

}  // namespace infosft
