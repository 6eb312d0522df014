#ifndef CALX_EXPLANATION_IO_HPP
#define CALX_EXPLANATION_IO_HPP

#include <span>
#include <string>
#include <vector>

#include "calx/explainer.hpp"

namespace calx {

/// Serializable form of one rule. Estimate fields are only meaningful when
/// has_estimate is set (counterfactual rule layouts).
struct DocumentRule {
  std::string condition_text;
  std::size_t feature = 0;
  double weight = 0.0;
  double weight_low = 0.0;
  double weight_high = 0.0;
  bool has_estimate = false;
  double prediction_estimate = 0.0;
  double low = 0.0;
  double high = 0.0;
  double instance_value = 0.0;
  std::string instance_text;
  std::size_t coverage_count = 0;

  bool operator==(const DocumentRule&) const = default;
};

/// On-disk explanation. Infinite bounds serialize as the strings "-inf" and
/// "inf"; everything else round-trips exactly (parse(render(doc)) == doc).
struct ExplanationDocument {
  int schema_version = 1;
  std::string mode;  ///< see mode_name()
  std::vector<double> instance;
  bool probabilistic = false;
  /// Regression modes.
  double median = 0.0;
  double low = 0.0;
  double high = 0.0;
  /// Probabilistic modes.
  double p = 0.0;
  double p_low = 0.0;
  double p_high = 0.0;
  bool has_threshold = false;
  double threshold = 0.0;
  double low_percentile = 5.0;
  double high_percentile = 95.0;
  std::vector<DocumentRule> rules;
  std::vector<std::string> diagnostics;

  bool operator==(const ExplanationDocument&) const = default;
};

ExplanationDocument doc_from_explanation(const Explanation& explanation,
                                         std::span<const double> instance,
                                         const FeatureSchema& schema);

std::string render_document(const ExplanationDocument& doc);
/// Throws BadDocument on malformed input or unsupported schema_version.
ExplanationDocument parse_document(const std::string& text);

void save_document(const ExplanationDocument& doc, const std::string& path);
ExplanationDocument load_document(const std::string& path);

}  // namespace calx

#endif
