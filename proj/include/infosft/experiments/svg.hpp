// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace infosft::experiments {

struct Series {
  enum class Style { kLine, kMarkers, kLineMarkers };

  std::string label;
  std::vector<std::pair<double, double>> points;
  Style style = Style::kLine;
  /// Empty picks from a fixed palette by series index.
  std::string color;
  bool dashed = false;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

/// Static SVG. Non-finite points, and non-positive ones on log axes, are
/// dropped.
std::string render_svg(const PlotSpec& plot);
void write_svg(const std::filesystem::path& path, const PlotSpec& plot);

}  // namespace infosft::experiments
