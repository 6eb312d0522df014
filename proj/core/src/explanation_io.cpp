#include "calx/explanation_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "calx/error.hpp"
#include "json.hpp"

namespace calx {

namespace {

nlohmann::json encode_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double decode_real(const nlohmann::json& j, const char* field) {
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw Error(Errc::BadDocument,
                std::string(field) + ": unrecognized bound '" + s + "'");
  }
  require(j.is_number(), Errc::BadDocument,
          std::string(field) + " must be a number or inf marker");
  return j.get<double>();
}

}  // namespace

ExplanationDocument doc_from_explanation(const Explanation& explanation,
                                         std::span<const double> instance,
                                         const FeatureSchema& schema) {
  ExplanationDocument doc;
  doc.mode = mode_name(explanation.mode);
  doc.instance.assign(instance.begin(), instance.end());
  doc.probabilistic = explanation.probabilistic();
  if (doc.probabilistic) {
    doc.p = explanation.probability.p;
    doc.p_low = explanation.probability.p_low;
    doc.p_high = explanation.probability.p_high;
  } else {
    doc.median = explanation.prediction.median;
    doc.low = explanation.prediction.low;
    doc.high = explanation.prediction.high;
  }
  if (explanation.threshold) {
    doc.has_threshold = true;
    doc.threshold = *explanation.threshold;
  }
  doc.low_percentile = explanation.low_percentile;
  doc.high_percentile = explanation.high_percentile;
  for (const FeatureRule& rule : explanation.rules) {
    DocumentRule out;
    out.condition_text = rule.condition.text(schema);
    out.feature = rule.feature;
    out.weight = rule.weight;
    out.weight_low = rule.weight_low;
    out.weight_high = rule.weight_high;
    out.has_estimate = rule.has_estimate;
    out.prediction_estimate = rule.prediction_estimate;
    out.low = rule.low;
    out.high = rule.high;
    out.instance_value = rule.instance_value;
    out.instance_text = rule.instance_text;
    out.coverage_count = rule.coverage_count;
    doc.rules.push_back(std::move(out));
  }
  doc.diagnostics = explanation.diagnostics;
  return doc;
}

std::string render_document(const ExplanationDocument& doc) {
  nlohmann::json j;
  j["schema_version"] = doc.schema_version;
  j["mode"] = doc.mode;
  j["instance"] = doc.instance;
  nlohmann::json prediction;
  if (doc.probabilistic) {
    prediction["p"] = encode_real(doc.p);
    prediction["p_low"] = encode_real(doc.p_low);
    prediction["p_high"] = encode_real(doc.p_high);
  } else {
    prediction["median"] = encode_real(doc.median);
    prediction["low"] = encode_real(doc.low);
    prediction["high"] = encode_real(doc.high);
  }
  j["prediction"] = std::move(prediction);
  if (doc.has_threshold) j["threshold"] = doc.threshold;
  j["percentiles"] = {encode_real(doc.low_percentile),
                      encode_real(doc.high_percentile)};
  nlohmann::json rules = nlohmann::json::array();
  for (const DocumentRule& rule : doc.rules) {
    nlohmann::json r;
    r["condition_text"] = rule.condition_text;
    r["feature"] = rule.feature;
    r["weight"] = encode_real(rule.weight);
    r["weight_low"] = encode_real(rule.weight_low);
    r["weight_high"] = encode_real(rule.weight_high);
    if (rule.has_estimate) {
      r["prediction_estimate"] = encode_real(rule.prediction_estimate);
      r["low"] = encode_real(rule.low);
      r["high"] = encode_real(rule.high);
    }
    r["instance_value"] = encode_real(rule.instance_value);
    r["instance_text"] = rule.instance_text;
    r["coverage_count"] = rule.coverage_count;
    rules.push_back(std::move(r));
  }
  j["rules"] = std::move(rules);
  if (!doc.diagnostics.empty()) j["diagnostics"] = doc.diagnostics;
  return j.dump(2) + "\n";
}

ExplanationDocument parse_document(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadDocument, e.what());
  }
  try {
    ExplanationDocument doc;
    doc.schema_version = j.at("schema_version").get<int>();
    require(doc.schema_version == 1, Errc::BadDocument,
            "unsupported schema_version " +
                std::to_string(doc.schema_version));
    doc.mode = j.at("mode").get<std::string>();
    doc.instance = j.at("instance").get<std::vector<double>>();
    const nlohmann::json& prediction = j.at("prediction");
    doc.probabilistic = prediction.contains("p");
    if (doc.probabilistic) {
      doc.p = decode_real(prediction.at("p"), "p");
      doc.p_low = decode_real(prediction.at("p_low"), "p_low");
      doc.p_high = decode_real(prediction.at("p_high"), "p_high");
    } else {
      doc.median = decode_real(prediction.at("median"), "median");
      doc.low = decode_real(prediction.at("low"), "low");
      doc.high = decode_real(prediction.at("high"), "high");
    }
    if (j.contains("threshold")) {
      doc.has_threshold = true;
      doc.threshold = j.at("threshold").get<double>();
    }
    const nlohmann::json& percentiles = j.at("percentiles");
    require(percentiles.is_array() && percentiles.size() == 2,
            Errc::BadDocument, "percentiles must be a two-element array");
    doc.low_percentile = decode_real(percentiles[0], "percentiles[0]");
    doc.high_percentile = decode_real(percentiles[1], "percentiles[1]");
    for (const nlohmann::json& r : j.at("rules")) {
      DocumentRule rule;
      rule.condition_text = r.at("condition_text").get<std::string>();
      rule.feature = r.at("feature").get<std::size_t>();
      rule.weight = decode_real(r.at("weight"), "weight");
      rule.weight_low = decode_real(r.at("weight_low"), "weight_low");
      rule.weight_high = decode_real(r.at("weight_high"), "weight_high");
      rule.has_estimate = r.contains("prediction_estimate");
      if (rule.has_estimate) {
        rule.prediction_estimate =
            decode_real(r.at("prediction_estimate"), "prediction_estimate");
        rule.low = decode_real(r.at("low"), "low");
        rule.high = decode_real(r.at("high"), "high");
      }
      rule.instance_value = decode_real(r.at("instance_value"),
                                        "instance_value");
      rule.instance_text = r.at("instance_text").get<std::string>();
      rule.coverage_count = r.at("coverage_count").get<std::size_t>();
      doc.rules.push_back(std::move(rule));
    }
    if (j.contains("diagnostics"))
      doc.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadDocument, e.what());
  }
}

void save_document(const ExplanationDocument& doc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::IoFailure, "cannot open '" + path + "'");
  out << render_document(doc);
  require(out.good(), Errc::IoFailure, "write failed for '" + path + "'");
}

ExplanationDocument load_document(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::IoFailure, "cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_document(text);
}

}  // namespace calx
