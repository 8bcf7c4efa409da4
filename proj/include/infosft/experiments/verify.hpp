// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "infosft/distributions.hpp"
#include "infosft/experiments/config.hpp"

namespace infosft::experiments {

enum class CheckStatus { kPass, kFailed, kSkipped };

/// "PASS", "FAILED" or "SKIPPED".
std::string_view to_string(CheckStatus status);

struct CheckResult {
  std::string name;
  CheckStatus status = CheckStatus::kPass;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

/// Runs the proximal invariant suite described by a `verify` config, in a
/// fixed order, single-threaded.
std::vector<CheckResult> run_verify(const Json& config);

/// Symmetric Dirichlet concentration whose draws have E[sum_i p_i^2] = t,
/// i.e. the expected expert probability of an expert-sampled target.
double concentration_for_p_bar(std::size_t k, double t);

/// Pairs whose expert puts exactly p on the target and spreads the rest
/// uniformly; bases are Dirichlet(1) draws with q <= d.
std::vector<DistributionPair> constant_p_population(std::size_t k, std::size_t count, double p, double d,
                                                    Rng& rng);

/// Independent stream for section `section` of a run seeded with `seed`.
Rng section_rng(std::uint64_t seed, std::uint64_t section);

}  // namespace infosft::experiments
