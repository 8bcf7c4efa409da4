// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The InfoSFT Authors

#include "infosft/experiments/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace infosft::experiments {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 180.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

constexpr std::array<const char*, 8> kPalette = {
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
};

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;

  double transform(double v) const { return log ? std::log10(v) : v; }
  double fraction(double v) const { return (transform(v) - lo) / (hi - lo); }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      for (double e = std::ceil(lo); e <= std::floor(hi) + 1e-9; e += 1.0) out.push_back(std::pow(10.0, e));
      if (out.size() < 2) out = {std::pow(10.0, lo), std::pow(10.0, hi)};
      return out;
    }
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
      if (m * mag >= raw) {
        step = m * mag;
        break;
      }
    }
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) {
      out.push_back(std::abs(t) < 1e-12 * span ? 0.0 : t);
    }
    return out;
  }
};

bool usable(double v, bool log) { return std::isfinite(v) && (!log || v > 0.0); }

Axis fit_axis(const PlotSpec& plot, bool x) {
  const bool log = x ? plot.log_x : plot.log_y;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : plot.series) {
    for (const auto& [px, py] : s.points) {
      if (!usable(px, plot.log_x) || !usable(py, plot.log_y)) continue;
      const double v = x ? px : py;
      const double t = log ? std::log10(v) : v;
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  } else {
    const double pad = 0.04 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  return Axis{lo, hi, log};
}

}  // namespace

std::string render_svg(const PlotSpec& plot) {
  const Axis ax = fit_axis(plot, true);
  const Axis ay = fit_axis(plot, false);
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  const auto sx = [&](double v) { return kLeft + ax.fraction(v) * pw; };
  const auto sy = [&](double v) { return kTop + (1.0 - ay.fraction(v)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << fixed(kLeft + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
    << escape(plot.title) << "</text>\n";
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << fixed(pw) << "\" height=\"" << fixed(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (double t : ax.ticks()) {
    if (ax.fraction(t) < 0.0 || ax.fraction(t) > 1.0) continue;
    const double x = sx(t);
    o << "<line x1=\"" << fixed(x) << "\" y1=\"" << fixed(kTop + ph) << "\" x2=\"" << fixed(x) << "\" y2=\""
      << fixed(kTop + ph + 5) << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << fixed(x) << "\" y=\"" << fixed(kTop + ph + 18) << "\" text-anchor=\"middle\">"
      << tick_label(t) << "</text>\n";
  }
  for (double t : ay.ticks()) {
    if (ay.fraction(t) < 0.0 || ay.fraction(t) > 1.0) continue;
    const double y = sy(t);
    o << "<line x1=\"" << fixed(kLeft - 5) << "\" y1=\"" << fixed(y) << "\" x2=\"" << fixed(kLeft) << "\" y2=\""
      << fixed(y) << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << fixed(kLeft - 8) << "\" y=\"" << fixed(y + 4) << "\" text-anchor=\"end\">"
      << tick_label(t) << "</text>\n";
  }
  o << "<text x=\"" << fixed(kLeft + pw / 2) << "\" y=\"" << fixed(kHeight - 15)
    << "\" text-anchor=\"middle\">" << escape(plot.x_label) << "</text>\n";
  o << "<text transform=\"translate(18," << fixed(kTop + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(plot.y_label) << "</text>\n";

  for (std::size_t i = 0; i < plot.series.size(); ++i) {
    const auto& s = plot.series[i];
    const std::string color = s.color.empty() ? kPalette[i % kPalette.size()] : s.color;
    std::vector<std::pair<double, double>> pts;
    for (const auto& [x, y] : s.points) {
      if (usable(x, plot.log_x) && usable(y, plot.log_y)) pts.emplace_back(sx(x), sy(y));
    }
    const bool line = s.style != Series::Style::kMarkers;
    const bool markers = s.style != Series::Style::kLine;
    if (line && pts.size() > 1) {
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\""
        << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"";
      for (std::size_t j = 0; j < pts.size(); ++j) {
        o << (j ? " " : "") << fixed(pts[j].first) << "," << fixed(pts[j].second);
      }
      o << "\"/>\n";
    }
    if (markers) {
      for (const auto& [x, y] : pts) {
        o << "<circle cx=\"" << fixed(x) << "\" cy=\"" << fixed(y) << "\" r=\"3\" fill=\"" << color
          << "\" fill-opacity=\"0.6\"/>\n";
      }
    }
    const double ly = kTop + 14 + 18.0 * static_cast<double>(i);
    const double lx = kLeft + pw + 12;
    o << "<line x1=\"" << fixed(lx) << "\" y1=\"" << fixed(ly - 4) << "\" x2=\"" << fixed(lx + 22) << "\" y2=\""
      << fixed(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\""
      << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
    o << "<text x=\"" << fixed(lx + 28) << "\" y=\"" << fixed(ly) << "\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_svg(const std::filesystem::path& path, const PlotSpec& plot) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << render_svg(plot);
}

}  // namespace infosft::experiments
