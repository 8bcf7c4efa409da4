// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#include "infosft/weighting.hpp"

#include <cmath>
#include <stdexcept>

#include "infosft/numerics.hpp"
#include "infosft/text_format.hpp"

namespace infosft {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_interior(double value, const char* what) {
  if (!(value > 0.0 && value < 1.0)) {
    throw DomainError(std::string(what) + " must lie in (0, 1), got " + text::format_double(value));
  }
}

void require_probability(double q) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw DomainError("token probability must lie in (0, 1], got " + text::format_double(q));
  }
}

}  // namespace

WeightRule WeightRule::info_sft(double p_bar) {
  require_interior(p_bar, "InfoSFT p_bar");
  return WeightRule(rules::InfoSft{p_bar});
}

WeightRule WeightRule::calibrated(double c) {
  if (!std::isfinite(c)) throw DomainError("calibration shift C must be finite");
  return WeightRule(rules::CalibratedC{c});
}

WeightRule WeightRule::oracle(std::optional<double> p) {
  if (p) require_interior(*p, "oracle expert probability");
  return WeightRule(rules::Oracle{p});
}

WeightRule WeightRule::parse(const std::string& text, double default_p_bar) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const bool has_arg = colon != std::string::npos;
  const auto arg = [&]() { return text::parse_double(std::string_view(text).substr(colon + 1)); };
  if (head == "sft" && !has_arg) return sft();
  if (head == "dft" && !has_arg) return dft();
  if (head == "infosft") return info_sft(has_arg ? arg() : default_p_bar);
  if (head == "calibrated" && has_arg) return calibrated(arg());
  if (head == "oracle") return has_arg ? oracle(arg()) : oracle();
  throw std::invalid_argument("unknown weight rule '" + text + "'");
}

std::string WeightRule::name() const {
  return std::visit(
      Overloaded{
          [](const rules::Sft&) { return std::string("sft"); },
          [](const rules::Dft&) { return std::string("dft"); },
          [](const rules::InfoSft& r) { return "infosft(" + text::format_double(r.p_bar) + ")"; },
          [](const rules::CalibratedC& r) { return "calibrated(" + text::format_double(r.c) + ")"; },
          [](const rules::Oracle& r) {
            return r.p ? "oracle(" + text::format_double(*r.p) + ")" : std::string("oracle");
          },
      },
      kind_);
}

std::string WeightRule::family() const {
  return std::visit(Overloaded{
                        [](const rules::Sft&) { return "sft"; },
                        [](const rules::Dft&) { return "dft"; },
                        [](const rules::InfoSft&) { return "infosft"; },
                        [](const rules::CalibratedC&) { return "calibrated"; },
                        [](const rules::Oracle&) { return "oracle"; },
                    },
                    kind_);
}

double omega(const WeightRule& rule, double q) {
  require_probability(q);
  return std::visit(
      Overloaded{
          [q](const rules::Sft&) { return 1.0 / q; },
          [](const rules::Dft&) { return 1.0; },
          [q](const rules::InfoSft& r) {
            return numerics::clip_nonneg(numerics::logit(r.p_bar) - numerics::logit(q));
          },
          [q](const rules::CalibratedC& r) { return r.c - numerics::logit(q); },
          [q](const rules::Oracle& r) -> double {
            if (!r.p) {
              throw std::invalid_argument("oracle rule needs an expert probability here");
            }
            return numerics::logit(*r.p) - numerics::logit(q);
          },
      },
      rule.kind());
}

double token_weight(const WeightRule& rule, double q) {
  // q * (1/q) can round to 1 - 2^-53.
  if (rule.is<rules::Sft>()) {
    require_probability(q);
    return 1.0;
  }
  return q * omega(rule, q);
}

double u_coefficient(const WeightRule& rule, double q) { return omega(rule, q); }

std::vector<WeightPoint> weight_curve(const WeightRule& rule, std::span<const double> grid) {
  std::vector<WeightPoint> out;
  out.reserve(grid.size());
  for (double q : grid) {
    require_interior(q, "weight-curve grid point");
    out.push_back({q, token_weight(rule, q)});
  }
  return out;
}

std::vector<double> open_unit_grid(std::size_t n) {
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i) {
    grid[i] = static_cast<double>(i + 1) / static_cast<double>(n + 1);
  }
  return grid;
}

std::size_t difference_sign_changes(std::span<const double> values) {
  std::size_t changes = 0;
  int last_sign = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double diff = values[i] - values[i - 1];
    const int sign = diff > 0.0 ? 1 : (diff < 0.0 ? -1 : 0);
    if (sign == 0) continue;
    if (last_sign != 0 && sign != last_sign) ++changes;
    last_sign = sign;
  }
  return changes;
}

}  // namespace infosft
