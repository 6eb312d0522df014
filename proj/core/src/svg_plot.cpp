#include "calx/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "calx/error.hpp"

namespace calx {

const char* plot_kind_name(PlotKind kind) {
  switch (kind) {
    case PlotKind::Regular: return "regular";
    case PlotKind::Uncertainty: return "uncertainty";
    case PlotKind::Counterfactual: return "counterfactual";
  }
  return "unknown";
}

PlotKind parse_plot_kind(const std::string& name) {
  if (name == "regular") return PlotKind::Regular;
  if (name == "uncertainty") return PlotKind::Uncertainty;
  if (name == "counterfactual") return PlotKind::Counterfactual;
  throw Error(Errc::IncompatiblePlotKind, "unknown plot kind '" + name + "'");
}

namespace {

std::string xml_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string short_num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

/// Linear value-to-x mapping over [x0, x0+span]; values are clamped to the
/// domain so infinite bounds run to the plot edge.
struct Scale {
  double lo = 0.0;
  double hi = 1.0;
  double x0 = 0.0;
  double span = 1.0;

  void include(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (hi <= lo) {
      lo -= 1.0;
      hi += 1.0;
      return;
    }
    const double margin = 0.05 * (hi - lo);
    lo -= margin;
    hi += margin;
  }
  double at(double v) const {
    const double c = std::clamp(v, lo, hi);
    return x0 + (c - lo) / (hi - lo) * span;
  }
};

constexpr double kRowHeight = 26.0;
constexpr double kHeaderHeight = 64.0;
constexpr double kFooterHeight = 30.0;
constexpr double kLabelWidth = 210.0;
constexpr double kValueWidth = 90.0;

const char* kStyle =
    "text{font-family:monospace;font-size:12px;fill:#222;}"
    ".title{font-size:13px;}"
    ".band{fill:#f5d6d3;}"
    ".marker{stroke:#202020;stroke-width:2;}"
    ".bar-pos{fill:#c23b22;}"
    ".bar-neg{fill:#2f6fb7;}"
    ".spread{fill:#444;fill-opacity:0.3;}"
    ".interval{fill:#e8a59b;}"
    ".tick{stroke:#a32015;stroke-width:2;}"
    ".axis{stroke:#888;stroke-width:1;}"
    ".zero{stroke:#aaa;stroke-width:1;stroke-dasharray:3 2;}";

bool counterfactual_layout(const ExplanationDocument& doc) {
  return doc.mode.rfind("counterfactual", 0) == 0;
}

std::string header_title(const ExplanationDocument& doc) {
  std::ostringstream out;
  if (doc.probabilistic) {
    out << "P(y &lt;= " << short_num(doc.threshold) << ") = "
        << short_num(doc.p) << "  [" << short_num(doc.p_low) << ", "
        << short_num(doc.p_high) << "]";
  } else {
    out << "prediction " << short_num(doc.median) << "  ["
        << short_num(doc.low) << ", " << short_num(doc.high) << "]  ("
        << short_num(doc.low_percentile) << "-"
        << short_num(doc.high_percentile) << "%)";
  }
  return out.str();
}

void append_axis(std::ostringstream& svg, const Scale& scale, double y,
                 bool with_zero) {
  svg << "<g class=\"axis-row\">";
  svg << "<line class=\"axis\" x1=\"" << px(scale.x0) << "\" y1=\"" << px(y)
      << "\" x2=\"" << px(scale.x0 + scale.span) << "\" y2=\"" << px(y)
      << "\"/>";
  svg << "<text x=\"" << px(scale.x0) << "\" y=\"" << px(y + 14.0)
      << "\">" << short_num(scale.lo) << "</text>";
  svg << "<text x=\"" << px(scale.x0 + scale.span) << "\" y=\""
      << px(y + 14.0) << "\" text-anchor=\"end\">" << short_num(scale.hi)
      << "</text>";
  if (with_zero && scale.lo < 0.0 && scale.hi > 0.0) {
    svg << "<text x=\"" << px(scale.at(0.0)) << "\" y=\"" << px(y + 14.0)
        << "\" text-anchor=\"middle\">0</text>";
  }
  svg << "</g>";
}

}  // namespace

std::string render_svg(const ExplanationDocument& doc, PlotKind kind,
                       const PlotOptions& options) {
  const bool cf_doc = counterfactual_layout(doc);
  if (kind == PlotKind::Counterfactual) {
    require(cf_doc, Errc::IncompatiblePlotKind,
            "counterfactual plot needs a counterfactual document, got '" +
                doc.mode + "'");
  } else {
    require(!cf_doc, Errc::IncompatiblePlotKind,
            std::string(plot_kind_name(kind)) +
                " plot needs a factual document, got '" + doc.mode + "'");
  }
  const bool one_sided =
      std::isinf(doc.low_percentile) || std::isinf(doc.high_percentile);
  require(kind != PlotKind::Uncertainty || !one_sided, Errc::ConflictingFlags,
          "uncertainty plot is undefined for one-sided explanations");

  const std::size_t n_rules = std::min(options.top_k, doc.rules.size());
  const double width = options.width;
  const double height =
      kHeaderHeight + static_cast<double>(n_rules) * kRowHeight +
      kFooterHeight;
  const double plot_x = kLabelWidth;
  const double plot_w = width - kLabelWidth - kValueWidth;

  // prediction-space scale for the header band (and all counterfactual
  // geometry); probability documents pin it to [0, 1]
  Scale vscale;
  vscale.x0 = plot_x;
  vscale.span = plot_w;
  if (doc.probabilistic) {
    vscale.lo = 0.0;
    vscale.hi = 1.0;
  } else {
    vscale.lo = doc.median;
    vscale.hi = doc.median;
    vscale.include(doc.low);
    vscale.include(doc.high);
    if (cf_doc) {
      for (std::size_t i = 0; i < n_rules; ++i) {
        vscale.include(doc.rules[i].prediction_estimate);
        vscale.include(doc.rules[i].low);
        vscale.include(doc.rules[i].high);
      }
    }
    vscale.pad();
  }

  // weight-space scale for factual bar rows
  Scale wscale;
  wscale.x0 = plot_x;
  wscale.span = plot_w;
  wscale.lo = 0.0;
  wscale.hi = 0.0;
  for (std::size_t i = 0; i < n_rules; ++i) {
    wscale.include(doc.rules[i].weight);
    if (kind == PlotKind::Uncertainty) {
      wscale.include(doc.rules[i].weight_low);
      wscale.include(doc.rules[i].weight_high);
    }
  }
  wscale.pad();

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(width)
      << "\" height=\"" << px(height) << "\" viewBox=\"0 0 " << px(width)
      << " " << px(height) << "\">\n";
  svg << "<style>" << kStyle << "</style>\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << px(width) << "\" height=\""
      << px(height) << "\" fill=\"#ffffff\"/>\n";

  // header: title plus the prediction band with a center marker
  const double band_y = 34.0;
  const double band_h = 16.0;
  const double band_lo = doc.probabilistic ? doc.p_low : doc.low;
  const double band_hi = doc.probabilistic ? doc.p_high : doc.high;
  const double band_mid = doc.probabilistic ? doc.p : doc.median;
  svg << "<g class=\"header\">";
  svg << "<text class=\"title\" x=\"8\" y=\"20\">" << header_title(doc)
      << "</text>";
  svg << "<rect class=\"band\" x=\"" << px(vscale.at(band_lo)) << "\" y=\""
      << px(band_y) << "\" width=\""
      << px(std::max(0.0, vscale.at(band_hi) - vscale.at(band_lo)))
      << "\" height=\"" << px(band_h) << "\"/>";
  svg << "<line class=\"marker\" x1=\"" << px(vscale.at(band_mid))
      << "\" y1=\"" << px(band_y - 2.0) << "\" x2=\""
      << px(vscale.at(band_mid)) << "\" y2=\"" << px(band_y + band_h + 2.0)
      << "\"/>";
  svg << "</g>\n";

  if (kind == PlotKind::Counterfactual) {
    // background band spanning the prediction interval across all rows
    svg << "<rect class=\"band\" x=\"" << px(vscale.at(band_lo)) << "\" y=\""
        << px(kHeaderHeight) << "\" width=\""
        << px(std::max(0.0, vscale.at(band_hi) - vscale.at(band_lo)))
        << "\" height=\""
        << px(static_cast<double>(n_rules) * kRowHeight) << "\"/>\n";
  }

  const double zero_x = wscale.at(0.0);
  if (kind != PlotKind::Counterfactual && n_rules > 0) {
    svg << "<line class=\"zero\" x1=\"" << px(zero_x) << "\" y1=\""
        << px(kHeaderHeight) << "\" x2=\"" << px(zero_x) << "\" y2=\""
        << px(kHeaderHeight + static_cast<double>(n_rules) * kRowHeight)
        << "\"/>\n";
  }

  for (std::size_t i = 0; i < n_rules; ++i) {
    const DocumentRule& rule = doc.rules[i];
    const double row_y = kHeaderHeight + static_cast<double>(i) * kRowHeight;
    const double bar_y = row_y + 6.0;
    const double bar_h = kRowHeight - 12.0;
    svg << "<g class=\"rule\">";
    if (kind == PlotKind::Counterfactual) {
      const double x_lo = vscale.at(rule.low);
      const double x_hi = vscale.at(rule.high);
      svg << "<rect class=\"interval\" x=\"" << px(x_lo) << "\" y=\""
          << px(bar_y) << "\" width=\"" << px(std::max(0.0, x_hi - x_lo))
          << "\" height=\"" << px(bar_h) << "\"/>";
      svg << "<line class=\"tick\" x1=\"" << px(vscale.at(rule.prediction_estimate))
          << "\" y1=\"" << px(bar_y - 2.0) << "\" x2=\""
          << px(vscale.at(rule.prediction_estimate)) << "\" y2=\""
          << px(bar_y + bar_h + 2.0) << "\"/>";
    } else {
      const double wx = wscale.at(rule.weight);
      const double bar_x = std::min(zero_x, wx);
      const double bar_w = std::fabs(wx - zero_x);
      svg << "<rect class=\"" << (rule.weight < 0.0 ? "bar-neg" : "bar-pos")
          << "\" x=\"" << px(bar_x) << "\" y=\"" << px(bar_y)
          << "\" width=\"" << px(bar_w) << "\" height=\"" << px(bar_h)
          << "\"/>";
      if (kind == PlotKind::Uncertainty) {
        const double lo_x = wscale.at(std::min(rule.weight_low, rule.weight_high));
        const double hi_x = wscale.at(std::max(rule.weight_low, rule.weight_high));
        svg << "<rect class=\"spread\" x=\"" << px(lo_x) << "\" y=\""
            << px(bar_y + bar_h / 4.0) << "\" width=\""
            << px(std::max(0.0, hi_x - lo_x)) << "\" height=\""
            << px(bar_h / 2.0) << "\"/>";
      }
    }
    svg << "<text x=\"8\" y=\"" << px(row_y + kRowHeight / 2.0 + 4.0)
        << "\">" << xml_escape(rule.condition_text) << "</text>";
    svg << "<text x=\"" << px(width - 8.0) << "\" y=\""
        << px(row_y + kRowHeight / 2.0 + 4.0) << "\" text-anchor=\"end\">"
        << xml_escape(rule.instance_text) << "</text>";
    svg << "</g>\n";
  }

  const double axis_y =
      kHeaderHeight + static_cast<double>(n_rules) * kRowHeight + 8.0;
  if (kind == PlotKind::Counterfactual) {
    append_axis(svg, vscale, axis_y, false);
  } else {
    append_axis(svg, wscale, axis_y, true);
  }
  svg << "\n</svg>\n";
  return svg.str();
}

void save_svg(const std::string& svg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::IoFailure, "cannot open '" + path + "'");
  out << svg;
  require(out.good(), Errc::IoFailure, "write failed for '" + path + "'");
}

}  // namespace calx
