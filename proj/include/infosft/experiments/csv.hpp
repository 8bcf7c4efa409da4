// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace infosft::experiments {

using CsvCell = std::variant<std::string, double, long long>;

/// Comma-separated table whose first line is `# schema: infosft.<kind>.v<n>`.
/// Doubles are written in shortest round-trip form so reruns are byte-equal.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::string_view schema,
            std::initializer_list<std::string_view> columns);

  void row(std::initializer_list<CsvCell> cells);
  void row(const std::vector<CsvCell>& cells);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

struct CsvTable {
  std::string schema;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

/// Reads a file written by CsvWriter. Fields never contain commas.
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace infosft::experiments
