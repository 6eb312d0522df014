#include <cmath>
#include <random>
#include <set>

#include "calx/error.hpp"
#include "calx/explainer.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace calx;

namespace {

// x0 = 1..20 with a three-level step target; depth-3 discretization yields
// exactly the two level boundaries, and the step model has zero residuals.
double step_model(double v) {
  if (v <= 6.5) return 0.0;
  if (v <= 13.5) return 5.0;
  return 10.0;
}

DataTable step_calibration() {
  std::vector<double> values;
  std::vector<double> targets;
  for (int i = 1; i <= 20; ++i) {
    values.push_back(static_cast<double>(i));
    targets.push_back(step_model(static_cast<double>(i)));
  }
  return testing::make_table(testing::numeric_schema(1), values, targets);
}

// two-feature linear model with an exact calibration grid (zero residuals)
struct LinearFixture {
  FunctionRegressor model{[](std::span<const double> row) {
    return 2.0 * row[0] + 3.0 * row[1];
  }};
  DataTable calibration;

  LinearFixture() {
    std::vector<double> values;
    std::vector<double> targets;
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        const double a = static_cast<double>(i);
        const double b = static_cast<double>(j);
        values.insert(values.end(), {a, b});
        targets.push_back(2.0 * a + 3.0 * b);
      }
    }
    calibration = testing::make_table(testing::numeric_schema(2), values,
                                      targets);
  }
};

FeatureSchema color_schema() {
  FeatureSchema schema;
  schema.names = {"color", "x1"};
  schema.kinds = {FeatureKind::Categorical, FeatureKind::Numerical};
  schema.categorical_values = {{"a", "b", "c"}, {}};
  return schema;
}

// prediction depends only on the categorical code
struct ColorFixture {
  FunctionRegressor model{[](std::span<const double> row) {
    if (row[0] == 0.0) return 1.0;
    if (row[0] == 1.0) return 0.8;
    return 0.5;
  }};
  DataTable calibration;

  ColorFixture() {
    std::vector<double> values;
    std::vector<double> targets;
    for (int rep = 0; rep < 7; ++rep) {
      for (int code = 0; code < 3; ++code) {
        const double c = static_cast<double>(code);
        values.insert(values.end(), {c, 0.1 * static_cast<double>(rep)});
        targets.push_back(code == 0 ? 1.0 : code == 1 ? 0.8 : 0.5);
      }
    }
    calibration = testing::make_table(color_schema(), values, targets);
  }
};

}  // namespace

TEST_CASE("discretizers expose tree thresholds per depth") {
  // step targets over {1..10}: the depth-1 split lands at 5.5
  std::vector<double> xs, ys;
  for (int i = 1; i <= 10; ++i) {
    xs.push_back(static_cast<double>(i));
    ys.push_back(i <= 5 ? 0.0 : 10.0);
  }
  const DataTable cal =
      testing::make_table(testing::numeric_schema(1), xs, ys);
  const Discretizer d1 = Discretizer::fit(cal, 1);
  REQUIRE(d1.thresholds.size() == 1);
  CHECK(d1.thresholds[0] == std::vector<double>{5.5});

  const Discretizer d3 = Discretizer::fit(step_calibration(), 3);
  CHECK(d3.thresholds[0] == std::vector<double>{6.5, 13.5});
}

TEST_CASE("nearest threshold resolves ties to the lower value") {
  Discretizer d;
  d.depth = 1;
  d.thresholds = {{2.0, 4.0}};
  CHECK(d.nearest_threshold(0, 3.0) == 2.0);  // equidistant
  CHECK(d.nearest_threshold(0, 3.1) == 4.0);
  CHECK(d.nearest_threshold(0, 0.0) == 2.0);
}

TEST_CASE("condition text uses the documented formats") {
  const FeatureSchema schema = color_schema();
  Condition eq{Condition::Kind::Equals, 0, 1.0, {}};
  CHECK(eq.text(schema) == "color = b");
  Condition le{Condition::Kind::LessEq, 1, 34.26, {}};
  CHECK(le.text(schema) == "x1 <= 34.26");
  Condition gt{Condition::Kind::Greater, 1, 34.26, {}};
  CHECK(gt.text(schema) == "x1 > 34.26");
  Condition both{Condition::Kind::Conjunction, 0, 0.0, {eq, gt}};
  CHECK(both.text(schema) == "color = b & x1 > 34.26");

  const std::vector<double> row{1.0, 40.0};
  CHECK(eq.covers(row));
  CHECK_FALSE(le.covers(row));
  CHECK(gt.covers(row));
  CHECK(both.covers(row));
}

TEST_CASE("perturbation sets follow the documented group construction") {
  std::vector<double> xs, ys;
  for (int i = 1; i <= 10; ++i) {
    xs.push_back(static_cast<double>(i));
    ys.push_back(i <= 5 ? 0.0 : 10.0);
  }
  const DataTable cal =
      testing::make_table(testing::numeric_schema(1), xs, ys);
  const FunctionRegressor model(
      [](std::span<const double> row) { return row[0] <= 5.5 ? 0.0 : 10.0; });
  const CalibratedExplainer state(model, cal);

  const std::vector<double> row{3.0};
  const auto sets = state.perturbation_sets(row);
  REQUIRE(sets.size() == 1);
  const PerturbationSet& set = sets[0];
  CHECK(set.has_threshold);
  CHECK(set.threshold == 5.5);
  REQUIRE(set.variants.size() == 6);

  std::vector<double> covering, other;
  for (const auto& v : set.variants)
    (v.covers_instance ? covering : other).push_back(v.value);
  CHECK(covering == std::vector<double>{2.0, 3.0, 4.0});
  CHECK(other == std::vector<double>{7.0, 8.0, 9.0});
}

TEST_CASE("categorical perturbations enumerate observed codes") {
  const ColorFixture fx;
  const CalibratedExplainer state(fx.model, fx.calibration);
  const std::vector<double> row{0.0, 0.35};
  const auto sets = state.perturbation_sets(row);
  REQUIRE(sets.size() == 2);
  CHECK(sets[0].categorical);
  REQUIRE(sets[0].variants.size() == 3);
  int covering = 0;
  for (const auto& v : sets[0].variants)
    if (v.covers_instance) {
      ++covering;
      CHECK(v.value == 0.0);
    }
  CHECK(covering == 1);
}

TEST_CASE("factual weights on a categorical-only model") {
  const ColorFixture fx;
  const CalibratedExplainer state(fx.model, fx.calibration);
  const std::vector<double> row{0.0, 0.35};
  const Explanation e = state.explain_factual(row, 5.0, 95.0);
  CHECK(e.mode == ExplanationMode::Factual);
  CHECK(e.prediction.median == 1.0);

  const FeatureRule* color_rule = nullptr;
  for (const auto& rule : e.rules)
    if (rule.feature == 0) color_rule = &rule;
  REQUIRE(color_rule != nullptr);
  CHECK(color_rule->condition.kind == Condition::Kind::Equals);
  CHECK(color_rule->condition.covers(row));
  CHECK(color_rule->instance_text == "a");
  // m' averages the two alternative codes: (0.8 + 0.5) / 2
  CHECK(color_rule->weight == doctest::Approx(1.0 - 0.65).epsilon(1e-12));
}

TEST_CASE("single alternative code gives a one-term mean") {
  FeatureSchema schema;
  schema.names = {"c"};
  schema.kinds = {FeatureKind::Categorical};
  schema.categorical_values = {{"a", "b"}};
  std::vector<double> values;
  std::vector<double> targets;
  for (int rep = 0; rep < 10; ++rep) {
    values.push_back(static_cast<double>(rep % 2));
    targets.push_back(rep % 2 == 0 ? 1.0 : 0.8);
  }
  const DataTable cal = testing::make_table(schema, values, targets);
  const FunctionRegressor model(
      [](std::span<const double> row) { return row[0] == 0.0 ? 1.0 : 0.8; });
  const CalibratedExplainer state(model, cal);
  const std::vector<double> row{0.0};
  const Explanation e = state.explain_factual(row, 25.0, 75.0);
  REQUIRE(e.rules.size() == 1);
  CHECK(e.rules[0].weight == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("ignored features carry exactly zero weight") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> values;
  std::vector<double> targets;
  for (int i = 0; i < 40; ++i) {
    const double a = unif(rng);
    const double b = unif(rng);
    values.insert(values.end(), {a, b});
    targets.push_back(2.0 * a + 0.3 * (unif(rng) - 0.5));  // noisy residuals
  }
  const DataTable cal =
      testing::make_table(testing::numeric_schema(2), values, targets);
  const FunctionRegressor model(
      [](std::span<const double> row) { return 2.0 * row[0]; });
  const CalibratedExplainer state(model, cal);

  for (int i = 0; i < 5; ++i) {
    const std::vector<double> row{unif(rng), unif(rng)};
    const Explanation e = state.explain_factual(row, 5.0, 95.0);
    for (const auto& rule : e.rules) {
      if (rule.feature != 1) continue;
      CHECK(rule.weight == 0.0);  // exact: perturbing x1 cannot move h
      CHECK(rule.weight_low == e.prediction.median - e.prediction.low);
      CHECK(rule.weight_high == e.prediction.median - e.prediction.high);
    }
  }
}

TEST_CASE("explanation prediction matches the conformal interval") {
  const LinearFixture fx;
  const CalibratedExplainer state(fx.model, fx.calibration);
  const std::vector<double> row{1.5, 2.5};
  const Explanation e = state.explain_factual(row, 10.0, 90.0);
  const PredictionSummary direct = state.predict(row, 10.0, 90.0);
  const PredictionSummary via_cpd =
      interval(state.cpd_for(row), 10.0, 90.0);
  CHECK(e.prediction.median == direct.median);
  CHECK(e.prediction.low == direct.low);
  CHECK(e.prediction.high == direct.high);
  CHECK(direct.median == via_cpd.median);
  CHECK(direct.low == via_cpd.low);
  CHECK(direct.high == via_cpd.high);
  CHECK(e.low_percentile == 10.0);
  CHECK(e.high_percentile == 90.0);
}

TEST_CASE("factual rules cover the instance and sort by weight magnitude") {
  const LinearFixture fx;
  const CalibratedExplainer state(fx.model, fx.calibration);
  std::mt19937_64 rng(67);
  std::uniform_real_distribution<double> unif(0.0, 4.0);
  for (int i = 0; i < 10; ++i) {
    const std::vector<double> row{unif(rng), unif(rng)};
    const Explanation e = state.explain_factual(row, 5.0, 95.0);
    for (std::size_t r = 0; r < e.rules.size(); ++r) {
      CHECK(e.rules[r].condition.covers(row));
      CHECK(std::isfinite(e.rules[r].weight));
      CHECK(std::isfinite(e.rules[r].weight_low));
      CHECK(std::isfinite(e.rules[r].weight_high));
      if (r > 0)
        CHECK(std::fabs(e.rules[r - 1].weight) >=
              std::fabs(e.rules[r].weight));
    }
  }
}

TEST_CASE("counterfactual rules on a categorical feature") {
  const ColorFixture fx;
  const CalibratedExplainer state(fx.model, fx.calibration);
  const std::vector<double> row{0.0, 0.35};
  const Explanation e = state.explain_counterfactual(row, 5.0, 95.0);
  CHECK(e.mode == ExplanationMode::Counterfactual);

  std::vector<const FeatureRule*> color_rules;
  for (const auto& rule : e.rules)
    if (rule.feature == 0) color_rules.push_back(&rule);
  REQUIRE(color_rules.size() == 2);  // one per alternative code
  for (const auto* rule : color_rules) {
    CHECK(rule->condition.kind == Condition::Kind::Equals);
    CHECK_FALSE(rule->condition.covers(row));
    CHECK(rule->has_estimate);
  }
  // sorted by |weight|: code c (|1.0 - 0.5|) precedes code b (|1.0 - 0.8|)
  CHECK(color_rules[0]->condition.value == 2.0);
  CHECK(color_rules[0]->prediction_estimate ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(color_rules[1]->prediction_estimate ==
        doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("counterfactual rules cover the regions beyond each threshold") {
  const FunctionRegressor model(
      [](std::span<const double> row) { return step_model(row[0]); });
  const DataTable cal = step_calibration();
  const CalibratedExplainer state(model, cal);
  const std::vector<double> row{10.0};  // middle bin
  const Explanation e = state.explain_counterfactual(row, 5.0, 95.0);

  REQUIRE(e.rules.size() == 2);
  for (const auto& rule : e.rules) CHECK_FALSE(rule.condition.covers(row));

  const FeatureRule* lower = nullptr;
  const FeatureRule* upper = nullptr;
  for (const auto& rule : e.rules) {
    if (rule.condition.kind == Condition::Kind::LessEq) lower = &rule;
    if (rule.condition.kind == Condition::Kind::Greater) upper = &rule;
  }
  REQUIRE(lower != nullptr);
  REQUIRE(upper != nullptr);
  CHECK(lower->condition.value == 6.5);
  CHECK(upper->condition.value == 13.5);
  // region percentiles keep the perturbed prediction on the far side
  CHECK(lower->prediction_estimate == 0.0);
  CHECK(upper->prediction_estimate == 10.0);
  CHECK(lower->weight == 5.0);
  CHECK(upper->weight == -5.0);
  CHECK(lower->coverage_count == 6);
  CHECK(upper->coverage_count == 7);
  // zero residuals: every rule interval is a point at its estimate
  CHECK(lower->low == 0.0);
  CHECK(lower->high == 0.0);
  CHECK(upper->low == 10.0);
  CHECK(upper->high == 10.0);
}

TEST_CASE("probabilistic mode splits calibration and caches calibrators") {
  const LinearFixture fx;
  const CalibratedExplainer state(fx.model, fx.calibration);
  CHECK(state.cps().q() == 25);
  CHECK(state.cps_p().q() == 13);  // ceil(25 / 2)

  const std::vector<double> rows[3] = {{0.5, 0.5}, {1.5, 1.5}, {3.5, 2.5}};
  for (const auto& row : rows) {
    const Explanation e = state.explain_probabilistic(row, 6.0);
    CHECK(e.mode == ExplanationMode::FactualProbabilistic);
    CHECK(e.probabilistic());
    REQUIRE(e.threshold.has_value());
    CHECK(*e.threshold == 6.0);
    CHECK(e.probability.p >= 0.0);
    CHECK(e.probability.p <= 1.0);
    CHECK(e.probability.p_low <= e.probability.p + 1e-12);
    CHECK(e.probability.p <= e.probability.p_high + 1e-12);
  }
  CHECK(state.va_fit_count() == 1);  // one fit, three evaluations
  (void)state.explain_probabilistic(rows[0], 9.0);
  CHECK(state.va_fit_count() == 2);

  try {
    (void)state.explain_probabilistic(rows[0],
                                      std::numeric_limits<double>::infinity());
    FAIL("expected NonFiniteThreshold");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonFiniteThreshold);
  }
}

TEST_CASE("calibrated threshold probability is monotone and saturates") {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> values;
  std::vector<double> targets;
  for (int i = 0; i < 100; ++i) {
    const double a = unif(rng);
    values.push_back(a);
    targets.push_back(10.0 * a + 0.5 * gauss(rng));
  }
  const DataTable cal =
      testing::make_table(testing::numeric_schema(1), values, targets);
  const FunctionRegressor model(
      [](std::span<const double> row) { return 10.0 * row[0]; });
  const CalibratedExplainer state(model, cal);

  const std::vector<double> row{0.5};
  double prev = -1.0;
  for (int g = 0; g < 20; ++g) {
    const double t = -2.0 + 14.0 * static_cast<double>(g) / 19.0;
    const Explanation e = state.explain_probabilistic(row, t);
    CHECK(e.probability.p >= prev - 1e-12);
    prev = e.probability.p;
  }
  const Explanation low = state.explain_probabilistic(row, -100.0);
  const Explanation high = state.explain_probabilistic(row, 100.0);
  CHECK(low.probability.p <= 0.05);
  CHECK(high.probability.p >= 0.95);

  // counterfactual layout carries probability estimates per rule
  const Explanation cf = state.explain_probabilistic(row, 5.0, true);
  CHECK(cf.mode == ExplanationMode::CounterfactualProbabilistic);
  for (const auto& rule : cf.rules) {
    CHECK(rule.has_estimate);
    CHECK(rule.prediction_estimate >= 0.0);
    CHECK(rule.prediction_estimate <= 1.0);
    CHECK_FALSE(rule.condition.covers(row));
  }
}

TEST_CASE("threshold probability has no dip at calibration target boundaries") {
  // One calibration row (index 7) holds both the smallest target and the
  // smallest residual, and lands in the isotonic half of the split. A
  // threshold equal to that target is the worst case for the score clamp:
  // the row's label is already 1 there, so it must not be pooled with the
  // bottom-clamped rows whose labels are still 0.
  std::vector<double> values;
  std::vector<double> targets;
  for (int i = 0; i < 10; ++i) {
    values.push_back(static_cast<double>(i + 1));
    targets.push_back(static_cast<double>(i + 1));
  }
  targets[7] = -3.0;
  const DataTable cal =
      testing::make_table(testing::numeric_schema(1), values, targets);
  const FunctionRegressor model(
      [](std::span<const double> row) { return row[0]; });
  const CalibratedExplainer state(model, cal);

  // A far-off query keeps its own score clamped near the bottom for small t.
  const std::vector<double> row{25.0};
  double prev = -1.0;
  for (int g = 0; g <= 1500; ++g) {
    const double t = -4.0 + 0.01 * static_cast<double>(g);
    const Explanation e = state.explain_probabilistic(row, t);
    CHECK(e.probability.p >= prev - 1e-12);
    prev = e.probability.p;
  }
}

TEST_CASE("conjunction weights add for independent features") {
  const LinearFixture fx;
  const CalibratedExplainer state(fx.model, fx.calibration);
  const std::vector<double> row{3.2, 0.7};
  const Explanation base = state.explain_factual(row, 5.0, 95.0);
  REQUIRE(base.rules.size() == 2);
  const Explanation with = state.add_conjunctions(base, row, 2, 5);

  const FeatureRule* conj = nullptr;
  double w0 = 0.0, w1 = 0.0;
  for (const auto& rule : with.rules) {
    if (rule.conjunctive) {
      REQUIRE(conj == nullptr);  // exactly one pair from two base rules
      conj = &rule;
    } else if (rule.feature == 0) {
      w0 = rule.weight;
    } else {
      w1 = rule.weight;
    }
  }
  REQUIRE(conj != nullptr);
  CHECK(conj->condition.kind == Condition::Kind::Conjunction);
  CHECK(conj->condition.parts.size() == 2);
  CHECK(conj->condition.parts[0].feature !=
        conj->condition.parts[1].feature);
  CHECK(conj->weight == doctest::Approx(w0 + w1).epsilon(1e-6));
  CHECK(conj->condition.covers(row));
}

TEST_CASE("conjunction search limits and orders") {
  const LinearFixture fx;
  const CalibratedExplainer state(fx.model, fx.calibration);
  const std::vector<double> row{3.2, 0.7};
  const Explanation base = state.explain_factual(row, 5.0, 95.0);

  const Explanation none = state.add_conjunctions(base, row, 2, 1);
  for (const auto& rule : none.rules) CHECK_FALSE(rule.conjunctive);

  try {
    (void)state.add_conjunctions(base, row, 4, 5);
    FAIL("expected OrderUnsupported");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OrderUnsupported);
  }
}

TEST_CASE("order-3 conjunctions combine three distinct features") {
  const FunctionRegressor model([](std::span<const double> row) {
    return row[0] + row[1] + row[2];
  });
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> values;
  std::vector<double> targets;
  for (int i = 0; i < 30; ++i) {
    const double a = unif(rng), b = unif(rng), c = unif(rng);
    values.insert(values.end(), {a, b, c});
    targets.push_back(a + b + c);
  }
  const DataTable cal =
      testing::make_table(testing::numeric_schema(3), values, targets);
  const CalibratedExplainer state(model, cal);
  const std::vector<double> row{0.9, 0.1, 0.5};
  const Explanation base = state.explain_factual(row, 5.0, 95.0);
  const Explanation with = state.add_conjunctions(base, row, 3, 5);

  bool saw_triple = false;
  for (const auto& rule : with.rules) {
    if (!rule.conjunctive) continue;
    std::set<std::size_t> features;
    for (const auto& part : rule.condition.parts)
      features.insert(part.feature);
    CHECK(features.size() == rule.condition.parts.size());
    if (rule.condition.parts.size() == 3) saw_triple = true;
  }
  CHECK(saw_triple);
}

TEST_CASE("explanations are deterministic for a fixed seed") {
  const LinearFixture fx;
  ExplainerOptions options;
  options.seed = 7;
  const CalibratedExplainer a(fx.model, fx.calibration, nullptr, options);
  const CalibratedExplainer b(fx.model, fx.calibration, nullptr, options);
  const std::vector<double> row{2.5, 1.5};
  for (int rep = 0; rep < 3; ++rep) {
    const Explanation ea = a.explain_factual(row, 5.0, 95.0);
    const Explanation eb = b.explain_factual(row, 5.0, 95.0);
    REQUIRE(ea.rules.size() == eb.rules.size());
    for (std::size_t i = 0; i < ea.rules.size(); ++i) {
      CHECK(ea.rules[i].weight == eb.rules[i].weight);
      CHECK(ea.rules[i].weight_low == eb.rules[i].weight_low);
      CHECK(ea.rules[i].weight_high == eb.rules[i].weight_high);
    }
  }
}

TEST_CASE("seeded-uniform tau stays fixed per instance lifetime") {
  const LinearFixture fx;
  ExplainerOptions options;
  options.tau_mode = TauMode::SeededUniform;
  options.seed = 3;
  const CalibratedExplainer a(fx.model, fx.calibration, nullptr, options);
  const CalibratedExplainer b(fx.model, fx.calibration, nullptr, options);
  CHECK(a.tau() == b.tau());
  CHECK(a.tau() >= 0.0);
  CHECK(a.tau() < 1.0);

  options.seed = 4;
  const CalibratedExplainer c(fx.model, fx.calibration, nullptr, options);
  CHECK(c.tau() != a.tau());

  const CalibratedExplainer fixed(fx.model, fx.calibration);
  CHECK(fixed.tau() == 0.5);
}

TEST_CASE("uninitialized state and missing targets are rejected") {
  CalibratedExplainer empty;
  const std::vector<double> row{0.0, 0.0};
  try {
    (void)empty.explain_factual(row, 5.0, 95.0);
    FAIL("expected UninitializedState");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UninitializedState);
  }

  const LinearFixture fx;
  const DataTable no_targets(fx.calibration.schema(),
                             {0.0, 0.0, 1.0, 1.0}, {});
  try {
    CalibratedExplainer state(fx.model, no_targets);
    FAIL("expected EmptyCalibration");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyCalibration);
  }
}

TEST_CASE("constant features suppress their rule with a diagnostic") {
  const FunctionRegressor model(
      [](std::span<const double> row) { return row[0]; });
  std::vector<double> values;
  std::vector<double> targets;
  for (int i = 0; i < 20; ++i) {
    values.insert(values.end(), {static_cast<double>(i), 3.0});
    targets.push_back(static_cast<double>(i));
  }
  const DataTable cal =
      testing::make_table(testing::numeric_schema(2), values, targets);
  const CalibratedExplainer state(model, cal);
  const std::vector<double> row{5.0, 3.0};
  const Explanation e = state.explain_factual(row, 5.0, 95.0);
  for (const auto& rule : e.rules) CHECK(rule.feature != 1);
  CHECK_FALSE(e.diagnostics.empty());
}
