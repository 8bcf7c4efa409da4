// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace infosft::text {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

/// Parses a double, rejecting trailing garbage.
double parse_double(std::string_view token);

long long parse_int(std::string_view token);

/// Splits on runs of ASCII whitespace.
std::vector<std::string_view> split_ws(std::string_view line);

}  // namespace infosft::text
