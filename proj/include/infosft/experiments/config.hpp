// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "infosft/distributions.hpp"
#include "infosft/experiments/synthetic.hpp"
#include "json.hpp"

namespace infosft::experiments {

using Json = nlohmann::ordered_json;

/// Bad command line or config content. The CLI maps this to exit status 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The commands the front end knows, in the order they are listed.
std::span<const std::string_view> command_names();

/// Complete default configuration for `command`. Every key a command reads
/// is present here.
Json default_config(std::string_view command);

/// Defaults, then the config file (if any), then each `path.to.key=value`
/// assignment, then `seed`. Keys absent from the defaults are rejected.
/// Values in assignments are parsed as JSON, falling back to a plain string.
Json resolve_config(std::string_view command, const std::optional<std::filesystem::path>& file,
                    std::span<const std::string> assignments, std::optional<std::uint64_t> seed);

void apply_assignment(Json& config, std::string_view assignment);

/// Writes `config` as resolved_config.json under `out_dir`.
void write_resolved_config(const std::filesystem::path& out_dir, const Json& config);

/// Typed lookups with the key path in the error message.
double get_double(const Json& node, std::string_view key);
std::uint64_t get_uint(const Json& node, std::string_view key);
std::string get_string(const Json& node, std::string_view key);
std::vector<double> get_doubles(const Json& node, std::string_view key);
std::vector<std::uint64_t> get_uints(const Json& node, std::string_view key);
std::vector<std::string> get_strings(const Json& node, std::string_view key);
const Json& get_object(const Json& node, std::string_view key);
/// True when `key` is absent or null.
bool is_unset(const Json& node, std::string_view key);

Json to_json(const TwoTaskSpec& spec);
TwoTaskSpec two_task_from_json(const Json& node);

}  // namespace infosft::experiments
