#include "calx/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "calx/error.hpp"
#include "calx/random.hpp"

namespace calx {

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

namespace {

/// Linearly interpolated percentile over an ascending vector (numpy-style).
double percentile_linear(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p / 100.0 * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

/// Mean that returns the common value exactly when all entries are equal,
/// so unchanged perturbations produce weights of exactly zero.
double mean_of(const std::vector<double>& xs) {
  bool all_equal = true;
  for (double x : xs) {
    if (x != xs.front()) {
      all_equal = false;
      break;
    }
  }
  if (all_equal) return xs.front();
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

const double kPercentiles[3] = {25.0, 50.0, 75.0};

}  // namespace

Discretizer Discretizer::fit(const DataTable& calibration, std::size_t depth) {
  require(calibration.has_targets(), Errc::EmptyCalibration,
          "discretizer needs calibration targets");
  require(calibration.n_rows() > 0, Errc::EmptyCalibration,
          "discretizer needs calibration rows");
  Discretizer out;
  out.depth = depth;
  out.thresholds.resize(calibration.n_cols());

  std::vector<std::size_t> all(calibration.n_rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  TreeParams params;
  params.max_depth = depth;
  params.min_leaf = 1;
  params.n_candidate_features = 0;  // deterministic: no feature sampling

  for (std::size_t f = 0; f < calibration.n_cols(); ++f) {
    if (calibration.schema().is_categorical(f)) continue;
    FeatureSchema single;
    single.names = {calibration.schema().names[f]};
    single.kinds = {FeatureKind::Numerical};
    single.categorical_values = {{}};
    DataTable column(single, calibration.column(f), calibration.targets());
    RegressionTree tree;
    Rng rng = make_rng(0);  // unused: all candidates are evaluated
    tree.fit(column, all, params, rng);
    out.thresholds[f] = tree.thresholds(0);
    if (out.thresholds[f].empty()) {
      // the tree declines to split when no cut reduces SSE (constant
      // targets); fall back to the median cut so the feature still carries
      // a rule, provided there is anything to split
      std::vector<double> unique = calibration.column(f);
      std::sort(unique.begin(), unique.end());
      unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
      const std::size_t m = unique.size();
      if (m >= 2)
        out.thresholds[f] = {(unique[(m - 1) / 2] + unique[(m + 1) / 2]) /
                             2.0};
    }
  }
  return out;
}

double Discretizer::nearest_threshold(std::size_t f, double v) const {
  const auto& ts = thresholds[f];
  auto it = std::lower_bound(ts.begin(), ts.end(), v);
  if (it == ts.begin()) return ts.front();
  if (it == ts.end()) return ts.back();
  const double above = *it;
  const double below = *(it - 1);
  // ties resolve to the lower threshold
  return (above - v < v - below) ? above : below;
}

bool Condition::covers(std::span<const double> row) const {
  switch (kind) {
    case Kind::Equals:
      return row[feature] == value;
    case Kind::LessEq:
      return row[feature] <= value;
    case Kind::Greater:
      return row[feature] > value;
    case Kind::Conjunction:
      for (const Condition& part : parts)
        if (!part.covers(row)) return false;
      return true;
  }
  return false;
}

std::string Condition::text(const FeatureSchema& schema) const {
  switch (kind) {
    case Kind::Equals:
      return schema.names[feature] + " = " +
             schema.code_name(feature, static_cast<int>(value));
    case Kind::LessEq:
      return schema.names[feature] + " <= " + format_number(value);
    case Kind::Greater:
      return schema.names[feature] + " > " + format_number(value);
    case Kind::Conjunction: {
      std::string out;
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += " & ";
        out += parts[i].text(schema);
      }
      return out;
    }
  }
  return {};
}

const char* mode_name(ExplanationMode mode) {
  switch (mode) {
    case ExplanationMode::Factual: return "factual";
    case ExplanationMode::Counterfactual: return "counterfactual";
    case ExplanationMode::FactualProbabilistic:
      return "factual_probabilistic";
    case ExplanationMode::CounterfactualProbabilistic:
      return "counterfactual_probabilistic";
  }
  return "unknown";
}

CalibratedExplainer::CalibratedExplainer(const Regressor& model,
                                         DataTable calibration,
                                         const DifficultyEstimator* difficulty,
                                         ExplainerOptions options) {
  initialize(model, std::move(calibration), difficulty, options);
}

void CalibratedExplainer::initialize(const Regressor& model,
                                     DataTable calibration,
                                     const DifficultyEstimator* difficulty,
                                     ExplainerOptions options) {
  require(calibration.n_rows() >= 2, Errc::EmptyCalibration,
          "explainer needs at least 2 calibration rows");
  require(calibration.has_targets(), Errc::EmptyCalibration,
          "calibration rows need targets");
  require(options.tau >= 0.0 && options.tau <= 1.0, Errc::InvalidPercentiles,
          "tau must lie in [0, 1]");

  model_ = &model;
  calibration_ = std::move(calibration);
  difficulty_ = difficulty;
  options_ = options;
  if (options.tau_mode == TauMode::SeededUniform) {
    Rng rng = make_rng(options.seed, 0x7a);
    tau_ = uniform_real(rng);
  } else {
    tau_ = options.tau;
  }

  cal_predictions_ = model_->predict(calibration_);
  cal_sigmas_.clear();
  if (difficulty_) cal_sigmas_ = difficulty_->estimate(calibration_);
  const double beta = difficulty_ ? difficulty_->beta() : options_.beta;

  const std::size_t q = calibration_.n_rows();
  std::vector<double> residuals(q);
  for (std::size_t i = 0; i < q; ++i)
    residuals[i] = calibration_.target(i) - cal_predictions_[i];

  ResidualSet full{residuals, cal_sigmas_, beta};
  cps_ = nonconformity_scores(full);

  // probabilistic halves: scores from the first ceil(q/2) rows, Venn-Abers
  // labels from the complementary rows
  const std::size_t half = (q + 1) / 2;
  ResidualSet first;
  first.beta = beta;
  first.residuals.assign(residuals.begin(),
                         residuals.begin() + static_cast<long>(half));
  if (!cal_sigmas_.empty())
    first.sigmas.assign(cal_sigmas_.begin(),
                        cal_sigmas_.begin() + static_cast<long>(half));
  cps_p_ = nonconformity_scores(first);
  va_rows_.clear();
  for (std::size_t i = half; i < q; ++i) va_rows_.push_back(i);

  disc_factual_ = Discretizer::fit(calibration_, 1);
  disc_cf_ = Discretizer::fit(calibration_, 3);

  const std::size_t d = calibration_.n_cols();
  sorted_columns_.assign(d, {});
  observed_codes_.assign(d, {});
  for (std::size_t f = 0; f < d; ++f) {
    std::vector<double> column = calibration_.column(f);
    std::sort(column.begin(), column.end());
    if (calibration_.schema().is_categorical(f)) {
      column.erase(std::unique(column.begin(), column.end()), column.end());
      observed_codes_[f] = std::move(column);
    } else {
      sorted_columns_[f] = std::move(column);
    }
  }

  va_mutex_ = std::make_unique<std::mutex>();
  va_cache_.clear();
  va_fits_ = 0;
}

void CalibratedExplainer::require_initialized() const {
  require(initialized(), Errc::UninitializedState,
          "explainer has not been initialized");
}

double CalibratedExplainer::sigma_for(std::span<const double> row) const {
  return difficulty_ ? difficulty_->estimate_row(row) : 0.0;
}

PredictionSummary CalibratedExplainer::predict(std::span<const double> row,
                                               double low_percentile,
                                               double high_percentile) const {
  require_initialized();
  const double pred = model_->predict_row(row);
  std::optional<double> sigma;
  if (cps_.normalized) sigma = sigma_for(row);
  const Cpd cpd = build_cpd(cps_, pred, sigma, tau_);
  return interval(cpd, low_percentile, high_percentile);
}

Cpd CalibratedExplainer::cpd_for(std::span<const double> row) const {
  require_initialized();
  const double pred = model_->predict_row(row);
  std::optional<double> sigma;
  if (cps_.normalized) sigma = sigma_for(row);
  return build_cpd(cps_, pred, sigma, tau_);
}

CalibratedExplainer::Calibrated CalibratedExplainer::calibrate_regression(
    std::span<const double> row, double low_percentile,
    double high_percentile) const {
  const PredictionSummary s = predict(row, low_percentile, high_percentile);
  return {s.median, s.low, s.high};
}

// Venn-Abers scores are the threshold mapped into residual space per row,
// (t - h) / (sigma + beta), clamped to the observed nonconformity range, not
// the CPD's cdf value at t. The cdf is a monotone transform of this margin,
// so the isotonic fit is unchanged except at its plateaus, where distinct
// margins would collapse into spurious score ties whose pooling wobbles as t
// moves. Inside the clamps the margin order is fixed across thresholds, so
// raising t can only flip labels 0 -> 1 and the calibrated probability is
// non-decreasing. The clamps are what make far-out thresholds saturate: an
// extreme t drives every score onto one clamp, pooling the test row with a
// uniformly labeled calibration set. A row only reaches a clamp once its own
// label matches that end, so pool membership never drags the fit down. For
// the top clamp that follows from labels being y <= t: a margin at the
// largest score implies t >= y. The bottom clamp sits one ulp below the
// smallest score so that a row whose target equals the threshold exactly
// (label already 1) stays out of the all-zero pool.
double CalibratedExplainer::va_score(double margin) const {
  const double bottom = std::nextafter(
      cps_.alphas.front(), -std::numeric_limits<double>::infinity());
  return std::clamp(margin, bottom, cps_.alphas.back());
}

double CalibratedExplainer::threshold_margin(std::span<const double> row,
                                             double threshold) const {
  const double pred = model_->predict_row(row);
  if (!cps_p_.normalized) return va_score(threshold - pred);
  return va_score((threshold - pred) / (sigma_for(row) + options_.beta));
}

const VennAbersCalibrator& CalibratedExplainer::va_for(
    double threshold) const {
  std::lock_guard<std::mutex> lock(*va_mutex_);
  auto it = va_cache_.find(threshold);
  if (it != va_cache_.end()) return *it->second;

  std::vector<std::pair<double, double>> points;
  points.reserve(va_rows_.size());
  for (std::size_t i : va_rows_) {
    double score = threshold - cal_predictions_[i];
    if (cps_p_.normalized) score /= cal_sigmas_[i] + options_.beta;
    const double label = calibration_.target(i) <= threshold ? 1.0 : 0.0;
    points.emplace_back(va_score(score), label);
  }
  auto calibrator = std::make_unique<VennAbersCalibrator>(points);
  ++va_fits_;
  const VennAbersCalibrator& ref = *calibrator;
  va_cache_.emplace(threshold, std::move(calibrator));
  return ref;
}

std::size_t CalibratedExplainer::va_fit_count() const {
  std::lock_guard<std::mutex> lock(*va_mutex_);
  return va_fits_;
}

CalibratedExplainer::Calibrated CalibratedExplainer::calibrate_probability(
    std::span<const double> row, double threshold) const {
  require(std::isfinite(threshold), Errc::NonFiniteThreshold,
          "threshold must be finite");
  const VennAbersCalibrator& va = va_for(threshold);
  const ProbabilityTriple t = va.evaluate(threshold_margin(row, threshold));
  return {t.p, t.p_low, t.p_high};
}

std::size_t CalibratedExplainer::coverage(const Condition& condition) const {
  std::size_t count = 0;
  for (std::size_t r = 0; r < calibration_.n_rows(); ++r)
    if (condition.covers(calibration_.row(r))) ++count;
  return count;
}

std::vector<double> CalibratedExplainer::region_values(
    std::size_t feature, const Condition& condition) const {
  std::vector<double> out;
  if (condition.kind == Condition::Kind::Equals) {
    out.push_back(condition.value);
    return out;
  }
  for (double v : sorted_columns_[feature]) {
    const bool in_region = condition.kind == Condition::Kind::LessEq
                               ? v <= condition.value
                               : v > condition.value;
    if (in_region) out.push_back(v);
  }
  return out;
}

std::vector<PerturbationSet> CalibratedExplainer::perturbation_sets(
    std::span<const double> row) const {
  require_initialized();
  std::vector<PerturbationSet> out;
  const std::size_t d = calibration_.n_cols();
  for (std::size_t f = 0; f < d; ++f) {
    PerturbationSet set;
    set.feature = f;
    set.categorical = calibration_.schema().is_categorical(f);
    if (set.categorical) {
      const auto& codes = observed_codes_[f];
      if (codes.size() >= 2) {
        for (double code : codes)
          set.variants.push_back({code, static_cast<int>(code),
                                  code == row[f]});
      }
    } else if (!disc_factual_.thresholds[f].empty()) {
      const double t = disc_factual_.nearest_threshold(f, row[f]);
      set.has_threshold = true;
      set.threshold = t;
      const bool instance_left = row[f] <= t;
      for (int group = 0; group < 2; ++group) {
        Condition cond;
        cond.feature = f;
        cond.value = t;
        cond.kind =
            group == 0 ? Condition::Kind::LessEq : Condition::Kind::Greater;
        const std::vector<double> values = region_values(f, cond);
        if (values.empty()) continue;
        const bool covering = (group == 0) == instance_left;
        for (double p : kPercentiles)
          set.variants.push_back(
              {percentile_linear(values, p), group, covering});
      }
    }
    out.push_back(std::move(set));
  }
  return out;
}

std::vector<double> CalibratedExplainer::rule_variant_values(
    const FeatureRule& rule, std::span<const double> row, bool factual) const {
  const std::size_t f = rule.feature;
  if (rule.condition.kind == Condition::Kind::Equals) {
    if (!factual) return {rule.condition.value};
    std::vector<double> values;
    for (double code : observed_codes_[f])
      if (code != row[f]) values.push_back(code);
    return values;
  }
  // numerical: the rule's own region (covering group for factual rules)
  const std::vector<double> region = region_values(f, rule.condition);
  if (region.empty()) return {};
  std::vector<double> values;
  for (double p : kPercentiles)
    values.push_back(percentile_linear(region, p));
  return values;
}

Explanation CalibratedExplainer::explain_rules(std::span<const double> row,
                                               bool counterfactual,
                                               bool probabilistic,
                                               double low_percentile,
                                               double high_percentile,
                                               double threshold) const {
  require_initialized();
  require(row.size() == calibration_.n_cols(), Errc::SchemaMismatch,
          "instance width does not match the calibration schema");

  Explanation out;
  out.mode = counterfactual
                 ? (probabilistic ? ExplanationMode::CounterfactualProbabilistic
                                  : ExplanationMode::Counterfactual)
                 : (probabilistic ? ExplanationMode::FactualProbabilistic
                                  : ExplanationMode::Factual);
  out.low_percentile = low_percentile;
  out.high_percentile = high_percentile;

  Calibrated base;
  if (probabilistic) {
    out.threshold = threshold;
    base = calibrate_probability(row, threshold);
    out.probability = {base.center, base.low, base.high};
  } else {
    out.prediction = predict(row, low_percentile, high_percentile);
    base = {out.prediction.median, out.prediction.low, out.prediction.high};
  }

  auto calibrate_variant = [&](std::span<const double> r) {
    return probabilistic ? calibrate_probability(r, threshold)
                         : calibrate_regression(r, low_percentile,
                                                high_percentile);
  };

  std::vector<double> scratch(row.begin(), row.end());
  const FeatureSchema& schema = calibration_.schema();

  auto make_rule = [&](const Condition& condition, std::size_t f,
                       const std::vector<double>& values) {
    std::vector<double> centers, lows, highs;
    centers.reserve(values.size());
    for (double v : values) {
      scratch[f] = v;
      const Calibrated c = calibrate_variant(scratch);
      centers.push_back(c.center);
      lows.push_back(c.low);
      highs.push_back(c.high);
    }
    scratch[f] = row[f];

    FeatureRule rule;
    rule.condition = condition;
    rule.feature = f;
    const double mc = mean_of(centers);
    const double ml = mean_of(lows);
    const double mh = mean_of(highs);
    rule.weight = base.center - mc;
    rule.weight_low = base.center - ml;
    rule.weight_high = base.center - mh;
    if (counterfactual) {
      rule.has_estimate = true;
      rule.prediction_estimate = mc;
      rule.low = ml;
      rule.high = mh;
    }
    rule.instance_value = row[f];
    rule.instance_text =
        schema.is_categorical(f)
            ? schema.code_name(f, static_cast<int>(row[f]))
            : format_number(row[f]);
    rule.coverage_count = coverage(condition);
    return rule;
  };

  for (std::size_t f = 0; f < calibration_.n_cols(); ++f) {
    if (schema.is_categorical(f)) {
      const auto& codes = observed_codes_[f];
      std::vector<double> alternatives;
      for (double code : codes)
        if (code != row[f]) alternatives.push_back(code);
      if (codes.size() < 2 || alternatives.empty()) {
        out.diagnostics.push_back("feature '" + schema.names[f] +
                                  "': fewer than two observed codes, rule "
                                  "suppressed");
        continue;
      }
      if (counterfactual) {
        for (double code : alternatives) {
          Condition cond;
          cond.kind = Condition::Kind::Equals;
          cond.feature = f;
          cond.value = code;
          out.rules.push_back(make_rule(cond, f, {code}));
        }
      } else {
        Condition cond;
        cond.kind = Condition::Kind::Equals;
        cond.feature = f;
        cond.value = row[f];
        out.rules.push_back(make_rule(cond, f, alternatives));
      }
    } else {
      const Discretizer& disc = counterfactual ? disc_cf_ : disc_factual_;
      const auto& ts = disc.thresholds[f];
      if (ts.empty()) {
        out.diagnostics.push_back("feature '" + schema.names[f] +
                                  "': no split threshold, rule suppressed");
        continue;
      }
      if (counterfactual) {
        // one rule per threshold, on the side away from the instance
        for (double t : ts) {
          Condition cond;
          cond.feature = f;
          cond.value = t;
          cond.kind = row[f] <= t ? Condition::Kind::Greater
                                  : Condition::Kind::LessEq;
          const std::vector<double> region = region_values(f, cond);
          if (region.empty()) {
            out.diagnostics.push_back("feature '" + schema.names[f] +
                                      "': empty region at threshold " +
                                      format_number(t) + ", rule suppressed");
            continue;
          }
          std::vector<double> values;
          for (double p : kPercentiles)
            values.push_back(percentile_linear(region, p));
          out.rules.push_back(make_rule(cond, f, values));
        }
      } else {
        const double t = disc_factual_.nearest_threshold(f, row[f]);
        Condition cond;
        cond.feature = f;
        cond.value = t;
        cond.kind =
            row[f] <= t ? Condition::Kind::LessEq : Condition::Kind::Greater;
        const std::vector<double> region = region_values(f, cond);
        if (region.empty()) {
          out.diagnostics.push_back("feature '" + schema.names[f] +
                                    "': empty covering group, rule "
                                    "suppressed");
          continue;
        }
        std::vector<double> values;
        for (double p : kPercentiles)
          values.push_back(percentile_linear(region, p));
        out.rules.push_back(make_rule(cond, f, values));
      }
    }
  }

  std::stable_sort(out.rules.begin(), out.rules.end(),
                   [](const FeatureRule& a, const FeatureRule& b) {
                     const double wa = std::fabs(a.weight);
                     const double wb = std::fabs(b.weight);
                     if (wa != wb) return wa > wb;
                     return a.feature < b.feature;
                   });
  return out;
}

Explanation CalibratedExplainer::explain_factual(std::span<const double> row,
                                                 double low_percentile,
                                                 double high_percentile) const {
  return explain_rules(row, false, false, low_percentile, high_percentile,
                       0.0);
}

Explanation CalibratedExplainer::explain_counterfactual(
    std::span<const double> row, double low_percentile,
    double high_percentile) const {
  return explain_rules(row, true, false, low_percentile, high_percentile,
                       0.0);
}

Explanation CalibratedExplainer::explain_probabilistic(
    std::span<const double> row, double threshold, bool counterfactual) const {
  require(std::isfinite(threshold), Errc::NonFiniteThreshold,
          "threshold must be finite");
  return explain_rules(row, counterfactual, true, 5.0, 95.0, threshold);
}

Explanation CalibratedExplainer::add_conjunctions(const Explanation& explanation,
                                                  std::span<const double> row,
                                                  std::size_t max_order,
                                                  std::size_t top_n) const {
  require_initialized();
  require(max_order == 2 || max_order == 3, Errc::OrderUnsupported,
          "conjunction order must be 2 or 3");
  const bool probabilistic = explanation.probabilistic();
  const bool counterfactual =
      explanation.mode == ExplanationMode::Counterfactual ||
      explanation.mode == ExplanationMode::CounterfactualProbabilistic;
  const double threshold = explanation.threshold.value_or(0.0);
  const double low_percentile = explanation.low_percentile;
  const double high_percentile = explanation.high_percentile;

  Calibrated base;
  if (probabilistic) {
    base = calibrate_probability(row, threshold);
  } else {
    base = calibrate_regression(row, low_percentile, high_percentile);
  }

  auto calibrate_variant = [&](std::span<const double> r) {
    return probabilistic ? calibrate_probability(r, threshold)
                         : calibrate_regression(r, low_percentile,
                                                high_percentile);
  };

  // constituents: the top_n non-conjunctive rules in their current order
  std::vector<const FeatureRule*> heads;
  for (const FeatureRule& rule : explanation.rules) {
    if (rule.conjunctive) continue;
    heads.push_back(&rule);
    if (heads.size() == top_n) break;
  }

  Explanation out = explanation;
  const FeatureSchema& schema = calibration_.schema();
  std::vector<double> scratch(row.begin(), row.end());

  auto build_conjunction = [&](const std::vector<const FeatureRule*>& combo) {
    // distinct features only
    for (std::size_t a = 0; a < combo.size(); ++a)
      for (std::size_t b = a + 1; b < combo.size(); ++b)
        if (combo[a]->feature == combo[b]->feature) return;

    std::vector<std::vector<double>> value_sets;
    for (const FeatureRule* rule : combo) {
      std::vector<double> values =
          rule_variant_values(*rule, row, !counterfactual);
      if (values.empty()) return;
      value_sets.push_back(std::move(values));
    }

    // cross product of the constituent perturbation sets
    std::vector<double> centers, lows, highs;
    std::vector<std::size_t> pick(combo.size(), 0);
    while (true) {
      for (std::size_t i = 0; i < combo.size(); ++i)
        scratch[combo[i]->feature] = value_sets[i][pick[i]];
      const Calibrated c = calibrate_variant(scratch);
      centers.push_back(c.center);
      lows.push_back(c.low);
      highs.push_back(c.high);
      std::size_t level = 0;
      while (level < combo.size()) {
        if (++pick[level] < value_sets[level].size()) break;
        pick[level] = 0;
        ++level;
      }
      if (level == combo.size()) break;
    }
    for (const FeatureRule* rule : combo)
      scratch[rule->feature] = row[rule->feature];

    FeatureRule rule;
    rule.conjunctive = true;
    rule.condition.kind = Condition::Kind::Conjunction;
    for (const FeatureRule* part : combo)
      rule.condition.parts.push_back(part->condition);
    std::sort(rule.condition.parts.begin(), rule.condition.parts.end(),
              [](const Condition& a, const Condition& b) {
                return a.feature < b.feature;
              });
    rule.feature = rule.condition.parts.front().feature;

    const double mc = mean_of(centers);
    const double ml = mean_of(lows);
    const double mh = mean_of(highs);
    rule.weight = base.center - mc;
    rule.weight_low = base.center - ml;
    rule.weight_high = base.center - mh;
    if (counterfactual) {
      rule.has_estimate = true;
      rule.prediction_estimate = mc;
      rule.low = ml;
      rule.high = mh;
    }
    rule.instance_value = row[rule.feature];
    std::string text;
    for (std::size_t i = 0; i < rule.condition.parts.size(); ++i) {
      const Condition& part = rule.condition.parts[i];
      if (i) text += " & ";
      text += schema.is_categorical(part.feature)
                  ? schema.code_name(part.feature,
                                     static_cast<int>(row[part.feature]))
                  : format_number(row[part.feature]);
    }
    rule.instance_text = std::move(text);
    rule.coverage_count = coverage(rule.condition);
    out.rules.push_back(std::move(rule));
  };

  for (std::size_t i = 0; i < heads.size(); ++i)
    for (std::size_t j = i + 1; j < heads.size(); ++j)
      build_conjunction({heads[i], heads[j]});
  if (max_order == 3) {
    for (std::size_t i = 0; i < heads.size(); ++i)
      for (std::size_t j = i + 1; j < heads.size(); ++j)
        for (std::size_t k = j + 1; k < heads.size(); ++k)
          build_conjunction({heads[i], heads[j], heads[k]});
  }

  std::stable_sort(out.rules.begin(), out.rules.end(),
                   [](const FeatureRule& a, const FeatureRule& b) {
                     const double wa = std::fabs(a.weight);
                     const double wb = std::fabs(b.weight);
                     if (wa != wb) return wa > wb;
                     return a.feature < b.feature;
                   });
  return out;
}

}  // namespace calx
