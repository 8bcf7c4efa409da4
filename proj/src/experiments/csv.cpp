// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#include "infosft/experiments/csv.hpp"

#include <stdexcept>

#include "infosft/text_format.hpp"

namespace infosft::experiments {

namespace {

constexpr std::string_view kSchemaPrefix = "# schema: ";

std::string render(const CsvCell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) {
    if (s->find_first_of(",\n") != std::string::npos) {
      throw std::invalid_argument("csv: field contains a separator: " + *s);
    }
    return *s;
  }
  if (const auto* d = std::get_if<double>(&cell)) return text::format_double(*d);
  return std::to_string(std::get<long long>(cell));
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

CsvWriter::CsvWriter(const std::filesystem::path& path, std::string_view schema,
                     std::initializer_list<std::string_view> columns)
    : out_(path, std::ios::binary | std::ios::trunc), columns_(columns.size()) {
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out_ << kSchemaPrefix << schema << '\n';
  bool first = true;
  for (auto c : columns) {
    out_ << (first ? "" : ",") << c;
    first = false;
  }
  out_ << '\n';
}

void CsvWriter::row(std::initializer_list<CsvCell> cells) { row(std::vector<CsvCell>(cells)); }

void CsvWriter::row(const std::vector<CsvCell>& cells) {
  if (cells.size() != columns_) throw std::invalid_argument("csv: row width does not match header");
  for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << render(cells[i]);
  out_ << '\n';
  if (!out_) throw std::runtime_error("csv: write failed");
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw std::out_of_range("csv: no column '" + std::string(name) + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line) || !line.starts_with(kSchemaPrefix)) {
    throw std::invalid_argument(path.string() + ": missing schema line");
  }
  table.schema = line.substr(kSchemaPrefix.size());
  if (!std::getline(in, line)) throw std::invalid_argument(path.string() + ": missing header");
  table.header = split_commas(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_commas(line);
    if (fields.size() != table.header.size()) {
      throw std::invalid_argument(path.string() + ": ragged row");
    }
    table.rows.push_back(std::move(fields));
  }
  return table;
}

}  // namespace infosft::experiments
