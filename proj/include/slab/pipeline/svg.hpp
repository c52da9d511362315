#pragma once

// Static SVG figures: one panel per dataset, AIC against ln(params) or
// -ln(perplexity), one polyline per architecture. All coordinates are
// printed with fixed precision so output is byte-stable.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "slab/meta/meta.hpp"

namespace slab::pipeline {

/// Fixed plot style. Golden-file tests depend on these values.
namespace style {
inline constexpr int kPanelWidth = 260;
inline constexpr int kPanelHeight = 200;
inline constexpr int kColumns = 3;
inline constexpr int kMarginLeft = 56;
inline constexpr int kMarginRight = 12;
inline constexpr int kMarginTop = 40;
inline constexpr int kMarginBottom = 36;
inline constexpr int kHeader = 40;
inline constexpr int kLegend = 28;
inline constexpr const char* kFont = "Helvetica, Arial, sans-serif";
inline constexpr const char* kBackground = "#ffffff";
inline constexpr const char* kAxis = "#333333";

inline const char* color(meta::Architecture a) {
  switch (a) {
    case meta::Architecture::pythia: return "#1f77b4";
    case meta::Architecture::rwkv: return "#d62728";
    case meta::Architecture::mamba: return "#2ca02c";
  }
  return "#000000";
}

inline const char* label(meta::Architecture a) {
  switch (a) {
    case meta::Architecture::pythia: return "Transformer (Pythia)";
    case meta::Architecture::rwkv: return "RWKV";
    case meta::Architecture::mamba: return "Mamba";
  }
  return "?";
}
}  // namespace style

struct PlotPoint {
  meta::Architecture architecture = meta::Architecture::pythia;
  std::string model;
  double x = 0.0;
  double aic = 0.0;
};

struct PlotPanel {
  std::string title;
  std::string subtitle;
  std::vector<PlotPoint> points;
};

struct Figure {
  std::string title;
  std::string x_label;
  std::vector<PlotPanel> panels;
};

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string fixed(double v) {
  auto s = fmt::format("{:.2f}", v);
  return s == "-0.00" ? "0.00" : s;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    const double span = hi - lo;
    const double p = span > 0.0 ? 0.05 * span : std::max(0.5, 0.05 * std::abs(lo));
    lo -= p;
    hi += p;
  }
  double map(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

inline std::string render_panel(const PlotPanel& panel, double ox, double oy) {
  std::string s;
  const double x0 = ox + style::kMarginLeft, x1 = ox + style::kPanelWidth - style::kMarginRight;
  const double y0 = oy + style::kPanelHeight - style::kMarginBottom, y1 = oy + style::kMarginTop;
  s += fmt::format("<g class=\"panel\">\n<text x=\"{}\" y=\"{}\" font-size=\"12\" font-weight=\"bold\">{}</text>\n",
                   fixed(ox + 8), fixed(oy + 16), xml_escape(panel.title));
  if (!panel.subtitle.empty())
    s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\">{}</text>\n", fixed(ox + 8),
                     fixed(oy + 30), xml_escape(panel.subtitle));
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"{}\"/>\n",
                   fixed(x0), fixed(y1), fixed(x1 - x0), fixed(y0 - y1), style::kAxis);
  if (panel.points.empty()) {
    s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">no data</text>\n</g>\n",
                     fixed((x0 + x1) / 2), fixed((y0 + y1) / 2));
    return s;
  }
  Range rx, ry;
  for (const auto& p : panel.points) {
    rx.add(p.x);
    ry.add(p.aic);
  }
  rx.pad();
  ry.pad();
  // axis extremes as tick labels
  s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"end\">{}</text>\n", fixed(x0 - 4),
                   fixed(y0), fmt::format("{:.1f}", ry.lo));
  s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"end\">{}</text>\n", fixed(x0 - 4),
                   fixed(y1 + 8), fmt::format("{:.1f}", ry.hi));
  s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"9\">{}</text>\n", fixed(x0), fixed(y0 + 12),
                   fmt::format("{:.2f}", rx.lo));
  s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"end\">{}</text>\n", fixed(x1),
                   fixed(y0 + 12), fmt::format("{:.2f}", rx.hi));
  for (auto arch : {meta::Architecture::pythia, meta::Architecture::rwkv, meta::Architecture::mamba}) {
    std::vector<PlotPoint> pts;
    for (const auto& p : panel.points)
      if (p.architecture == arch) pts.push_back(p);
    if (pts.empty()) continue;
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.x < b.x; });
    std::string coords;
    for (const auto& p : pts)
      coords += fmt::format("{}{},{}", coords.empty() ? "" : " ", fixed(rx.map(p.x, x0, x1)),
                            fixed(ry.map(p.aic, y0, y1)));
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                     style::color(arch), coords);
    for (const auto& p : pts)
      s += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{}\"><title>{}</title></circle>\n",
                       fixed(rx.map(p.x, x0, x1)), fixed(ry.map(p.aic, y0, y1)), style::color(arch),
                       xml_escape(p.model));
  }
  return s + "</g>\n";
}

}  // namespace detail

inline std::string render_svg(const Figure& fig) {
  const int n = static_cast<int>(fig.panels.size());
  const int cols = std::max(1, std::min(style::kColumns, n));
  const int rows = std::max(1, (n + cols - 1) / cols);
  const int width = cols * style::kPanelWidth;
  const int height = style::kHeader + rows * style::kPanelHeight + style::kLegend;
  std::string s = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"{2}\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"{3}\"/>\n"
      "<text x=\"8\" y=\"18\" font-size=\"14\" font-weight=\"bold\">{4}</text>\n"
      "<text x=\"8\" y=\"34\" font-size=\"10\">x: {5}; y: AIC</text>\n",
      width, height, style::kFont, style::kBackground, detail::xml_escape(fig.title),
      detail::xml_escape(fig.x_label));
  for (int i = 0; i < n; ++i)
    s += detail::render_panel(fig.panels[static_cast<std::size_t>(i)], (i % cols) * style::kPanelWidth,
                              style::kHeader + (i / cols) * style::kPanelHeight);
  double lx = 8;
  const double ly = style::kHeader + rows * style::kPanelHeight + 16;
  for (auto arch : {meta::Architecture::pythia, meta::Architecture::rwkv, meta::Architecture::mamba}) {
    s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                     detail::fixed(lx), detail::fixed(ly - 4), detail::fixed(lx + 18), detail::fixed(ly - 4),
                     style::color(arch));
    s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\">{}</text>\n", detail::fixed(lx + 22),
                     detail::fixed(ly), style::label(arch));
    lx += 150;
  }
  return s + "</svg>\n";
}

}  // namespace slab::pipeline
