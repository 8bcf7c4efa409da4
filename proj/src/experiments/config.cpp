// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#include "infosft/experiments/config.hpp"

#include <array>
#include <fstream>
#include <string>
#include <vector>

namespace infosft::experiments {

namespace {

constexpr std::array<std::string_view, 6> kCommands = {
    "verify", "weight-curves", "population-sweep", "train", "tradeoff", "estimate-pbar",
};

Json verify_defaults() {
  return Json{
      {"seed", 0},
      {"identity", {{"samples", 1000}, {"alphabet_min", 2}, {"alphabet_max", 50}, {"u_max", 8.0}, {"tolerance", 1e-10}}},
      {"oracle",
       {{"pairs", 100}, {"alphabet_min", 2}, {"alphabet_max", 50}, {"u_range", 10.0}, {"grid_step", 1e-3},
        {"tolerance", 1e-12}}},
      {"convexity",
       {{"pairs", 100}, {"alphabet_min", 2}, {"alphabet_max", 20}, {"u_range", 8.0}, {"grid_step", 1e-2},
        {"rel_tolerance", 1e-3}}},
      {"c_star",
       {{"populations", 100}, {"count", 100}, {"alphabet_sizes", {10, 20, 50}}, {"d_values", {0.002, 0.005, 0.01}},
        {"expert_concentration", 0.2}, {"perturbation", 0.05}, {"bound_factor", 5.0}}},
      {"gap",
       {{"populations", 100}, {"count", 200}, {"alphabet_sizes", {5, 20, 50}}, {"max_target_prob", 0.05},
        {"expert_concentration", 0.1}, {"tolerance", 1e-10}, {"constant_p_populations", 20}}},
      {"dominance",
       {{"alphabet_sizes", {5, 20, 100}}, {"populations_per_alphabet", 20}, {"count", 200},
        {"target_p_bar", {0.6, 0.75, 0.9}}, {"d_fraction", 0.3}, {"d", nullptr}}},
      {"ratio",
       {{"populations", 30}, {"count", 200}, {"alphabet_sizes", {10, 20}}, {"d_values", {1e-3, 1e-4, 1e-5}},
        {"target_p_bar", 0.9}, {"base_concentration", 0.05}, {"constant", 10.0}}},
      {"g_function", {{"x_min", 0.01}, {"x_max", 0.988}, {"step", 1e-3}}},
  };
}

TwoTaskSpec training_task() {
  TwoTaskSpec spec;
  spec.expert_concentration = 0.02;
  return spec;
}

}  // namespace

std::span<const std::string_view> command_names() { return kCommands; }

Json to_json(const TwoTaskSpec& spec) {
  return Json{
      {"alphabet_size", spec.alphabet_size},
      {"prompt_tokens_per_task", spec.prompt_tokens_per_task},
      {"response_length", spec.response_length},
      {"sequences_per_task", spec.sequences_per_task},
      {"expert_concentration", spec.expert_concentration},
      {"shift_strength", spec.shift_strength},
      {"pretrain_learning_rate", spec.pretrain_learning_rate},
      {"pretrain_epochs", spec.pretrain_epochs},
  };
}

TwoTaskSpec two_task_from_json(const Json& node) {
  TwoTaskSpec spec;
  spec.alphabet_size = get_uint(node, "alphabet_size");
  spec.prompt_tokens_per_task = get_uint(node, "prompt_tokens_per_task");
  spec.response_length = get_uint(node, "response_length");
  spec.sequences_per_task = get_uint(node, "sequences_per_task");
  spec.expert_concentration = get_double(node, "expert_concentration");
  spec.shift_strength = get_double(node, "shift_strength");
  spec.pretrain_learning_rate = get_double(node, "pretrain_learning_rate");
  spec.pretrain_epochs = get_uint(node, "pretrain_epochs");
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return spec;
}

Json default_config(std::string_view command) {
  if (command == "verify") return verify_defaults();
  if (command == "weight-curves") {
    return Json{{"seed", 0}, {"rules", {"sft", "dft", "infosft:0.93"}}, {"grid_points", 999}};
  }
  if (command == "population-sweep") {
    return Json{
        {"seed", 0},
        {"rules", {"sft", "dft", "infosft", "oracle"}},
        {"d_values", {0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001}},
        {"population",
         {{"alphabet_size", 20}, {"count", 500}, {"expert_concentration", 0.05}, {"base_concentration", 1.0},
          {"base_mixing", 0.0}, {"floor", 1e-9}}},
    };
  }
  if (command == "train") {
    return Json{
        {"seed", 0},
        {"rule", "infosft"},
        {"p_bar", 0.93},
        {"learning_rate", 5.0},
        {"epochs", 20},
        {"batch_size", 20},
        {"max_steps", nullptr},
        {"q_clip_hi", 1.0 - 1e-6},
        {"probe_contexts", Json::array()},
        {"dataset", nullptr},
        {"policy", nullptr},
        {"task", to_json(training_task())},
    };
  }
  if (command == "tradeoff") {
    return Json{
        {"seed", 0},
        {"seeds", 20},
        {"rules", {"sft", "dft", "infosft"}},
        {"p_bar", 0.93},
        {"learning_rates", {0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1, 1.5, 2, 3, 5, 7, 10, 15, 20, 30, 50, 70, 100}},
        {"epochs", {1, 2}},
        {"batch_size", 20},
        {"match_tolerance", 0.05},
        {"task", to_json(TwoTaskSpec{})},
    };
  }
  if (command == "estimate-pbar") {
    return Json{
        {"seed", 0},
        {"policy", nullptr},
        {"prompts", nullptr},
        {"num_samples", 100},
        {"max_len", 8},
        {"temperature", 1.0},
        {"task", to_json(training_task())},
    };
  }
  throw UsageError("unknown command '" + std::string(command) + "'");
}

namespace {

void check_known_keys(const Json& defaults, const Json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw UsageError("config: expected an object at '" + prefix + "'");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw UsageError("config: unknown key '" + path + "'");
    if (defaults[key].is_object() && !value.is_null()) check_known_keys(defaults[key], value, path);
  }
}

void merge_into(Json& target, const Json& patch) {
  for (const auto& [key, value] : patch.items()) {
    if (value.is_object() && target[key].is_object()) {
      merge_into(target[key], value);
    } else {
      target[key] = value;
    }
  }
}

std::string path_of(std::string_view key) { return std::string(key); }

bool is_non_negative_integer(const Json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

const Json& lookup(const Json& node, std::string_view key) {
  const auto it = node.find(std::string(key));
  if (it == node.end() || it->is_null()) throw UsageError("config: missing value for '" + path_of(key) + "'");
  return *it;
}

}  // namespace

void apply_assignment(Json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw UsageError("--set expects key.path=value, got '" + std::string(assignment) + "'");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  std::vector<std::string> keys;
  for (std::size_t start = 0;;) {
    const auto dot = path.find('.', start);
    keys.push_back(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (keys.back().empty()) throw UsageError("--set: empty key in '" + path + "'");
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  Json patch = value;
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) patch = Json{{*it, patch}};
  merge_into(config, patch);
}

Json resolve_config(std::string_view command, const std::optional<std::filesystem::path>& file,
                    std::span<const std::string> assignments, std::optional<std::uint64_t> seed) {
  const Json defaults = default_config(command);
  Json config = defaults;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw UsageError("cannot read config file " + file->string());
    Json patch = Json::parse(in, nullptr, false);
    if (patch.is_discarded()) throw UsageError("config file " + file->string() + " is not valid JSON");
    check_known_keys(defaults, patch, "");
    merge_into(config, patch);
  }
  for (const auto& a : assignments) {
    Json patch;
    apply_assignment(patch, a);
    check_known_keys(defaults, patch, "");
    merge_into(config, patch);
  }
  if (seed) config["seed"] = *seed;
  return config;
}

void write_resolved_config(const std::filesystem::path& out_dir, const Json& config) {
  std::ofstream out(out_dir / "resolved_config.json", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write resolved_config.json in " + out_dir.string());
  out << config.dump(2) << '\n';
}

double get_double(const Json& node, std::string_view key) {
  const auto& v = lookup(node, key);
  if (!v.is_number()) throw UsageError("config: '" + path_of(key) + "' must be a number");
  return v.get<double>();
}

std::uint64_t get_uint(const Json& node, std::string_view key) {
  const auto& v = lookup(node, key);
  if (!is_non_negative_integer(v)) {
    throw UsageError("config: '" + path_of(key) + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string get_string(const Json& node, std::string_view key) {
  const auto& v = lookup(node, key);
  if (!v.is_string()) throw UsageError("config: '" + path_of(key) + "' must be a string");
  return v.get<std::string>();
}

namespace {

template <typename T, typename Check>
std::vector<T> get_list(const Json& node, std::string_view key, Check check, const char* what) {
  const auto& v = lookup(node, key);
  if (!v.is_array()) throw UsageError("config: '" + path_of(key) + "' must be a list");
  std::vector<T> out;
  for (const auto& item : v) {
    if (!check(item)) throw UsageError("config: '" + path_of(key) + "' must hold " + what);
    out.push_back(item.template get<T>());
  }
  return out;
}

}  // namespace

std::vector<double> get_doubles(const Json& node, std::string_view key) {
  return get_list<double>(node, key, [](const Json& j) { return j.is_number(); }, "numbers");
}

std::vector<std::uint64_t> get_uints(const Json& node, std::string_view key) {
  return get_list<std::uint64_t>(
      node, key, is_non_negative_integer, "non-negative integers");
}

std::vector<std::string> get_strings(const Json& node, std::string_view key) {
  return get_list<std::string>(node, key, [](const Json& j) { return j.is_string(); }, "strings");
}

const Json& get_object(const Json& node, std::string_view key) {
  const auto& v = lookup(node, key);
  if (!v.is_object()) throw UsageError("config: '" + path_of(key) + "' must be an object");
  return v;
}

bool is_unset(const Json& node, std::string_view key) {
  const auto it = node.find(std::string(key));
  return it == node.end() || it->is_null();
}

}  // namespace infosft::experiments
