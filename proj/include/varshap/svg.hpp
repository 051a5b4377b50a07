#pragma once

// Static SVG bar charts: horizontal bars with labels, grouped into panels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "varshap/core.hpp"

namespace varshap::svg {

inline std::string escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Bar {
  std::string label;
  double value = 0.0;
};

struct Panel {
  std::string title;
  std::vector<Bar> bars;
};

namespace detail {

inline std::string number(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace detail

/// Renders panels stacked vertically. Bars grow right for positive values and
/// left for negative ones from a shared zero line; each panel scales to its
/// own largest magnitude.
inline std::string bar_chart(std::string_view title, const std::vector<Panel>& panels) {
  constexpr double kWidth = 640.0;
  constexpr double kLabelWidth = 200.0;
  constexpr double kValueWidth = 70.0;
  constexpr double kBarHeight = 18.0;
  constexpr double kGap = 6.0;
  constexpr double kPanelHeader = 28.0;
  constexpr double kTop = 36.0;

  double height = kTop;
  for (const auto& p : panels) {
    height += kPanelHeader + static_cast<double>(p.bars.size()) * (kBarHeight + kGap) + kGap;
  }

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << kWidth << ' ' << height << "\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"10\" y=\"22\" font-size=\"16\" font-weight=\"bold\">" << escape(title)
     << "</text>\n";

  const double plot_left = kLabelWidth;
  const double plot_width = kWidth - kLabelWidth - kValueWidth;
  double y = kTop;
  for (const auto& p : panels) {
    os << "<g class=\"panel\">\n";
    os << "<text x=\"10\" y=\"" << y + 18.0 << "\" font-size=\"13\" font-weight=\"bold\">"
       << escape(p.title) << "</text>\n";
    y += kPanelHeader;

    double max_abs = 0.0;
    bool any_negative = false;
    for (const auto& b : p.bars) {
      if (std::isfinite(b.value)) {
        max_abs = std::max(max_abs, std::abs(b.value));
        any_negative = any_negative || b.value < 0.0;
      }
    }
    const double zero_x = any_negative ? plot_left + plot_width / 2.0 : plot_left;
    const double span = any_negative ? plot_width / 2.0 : plot_width;
    const double panel_top = y;

    for (const auto& b : p.bars) {
      const bool finite = std::isfinite(b.value);
      const double len = finite && max_abs > 0.0 ? std::abs(b.value) / max_abs * span : 0.0;
      const double x = finite && b.value < 0.0 ? zero_x - len : zero_x;
      os << "<text x=\"" << plot_left - 6.0 << "\" y=\"" << y + 13.0
         << "\" font-size=\"12\" text-anchor=\"end\">" << escape(b.label) << "</text>\n";
      os << "<rect class=\"bar\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << len
         << "\" height=\"" << kBarHeight << "\" fill=\""
         << (finite && b.value < 0.0 ? "#c0504d" : "#4f81bd") << "\"/>\n";
      os << "<text x=\"" << kWidth - kValueWidth + 6.0 << "\" y=\"" << y + 13.0
         << "\" font-size=\"12\">" << (finite ? detail::number(b.value) : std::string("n/a"))
         << "</text>\n";
      y += kBarHeight + kGap;
    }
    os << "<line x1=\"" << zero_x << "\" y1=\"" << panel_top - 2.0 << "\" x2=\"" << zero_x
       << "\" y2=\"" << y - kGap + 2.0 << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    os << "</g>\n";
    y += kGap;
  }
  os << "</svg>\n";
  return os.str();
}

/// One panel per attribution vector, one bar per feature.
inline Panel attribution_panel(std::string title, std::span<const double> phi,
                               const std::vector<std::string>& feature_names) {
  Panel p{std::move(title), {}};
  for (std::size_t i = 0; i < phi.size(); ++i) {
    p.bars.push_back({i < feature_names.size() ? feature_names[i] : "X" + std::to_string(i + 1),
                      phi[i]});
  }
  return p;
}

}  // namespace varshap::svg
