#ifndef CALX_SVG_PLOT_HPP
#define CALX_SVG_PLOT_HPP

#include <string>

#include "calx/explanation_io.hpp"

namespace calx {

/// Regular: prediction band on top, signed weight bars per rule.
/// Uncertainty: regular plus a translucent weight-interval overlay per rule.
/// Counterfactual: shared value axis, background prediction band, one
/// interval bar with an estimate tick per rule.
enum class PlotKind { Regular, Uncertainty, Counterfactual };

const char* plot_kind_name(PlotKind kind);
PlotKind parse_plot_kind(const std::string& name);

struct PlotOptions {
  std::size_t top_k = 10;  ///< rule rows shown (by document order)
  double width = 720.0;
};

/// Deterministic SVG for a fixed document (byte-identical across runs).
/// Throws IncompatiblePlotKind when the document's rule layout does not
/// match the kind, and ConflictingFlags for uncertainty plots of one-sided
/// documents (the weight intervals are undefined there).
std::string render_svg(const ExplanationDocument& doc, PlotKind kind,
                       const PlotOptions& options = {});

void save_svg(const std::string& svg, const std::string& path);

}  // namespace calx

#endif
