#include "calx/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include "calx/error.hpp"
#include "json.hpp"

namespace calx {

double exact_mean(const std::vector<double>& xs) {
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

double population_variance(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  const double mean = exact_mean(xs);
  double acc = 0.0;
  for (double x : xs) {
    const double dev = x - mean;
    acc += dev * dev;
  }
  return acc / static_cast<double>(xs.size());
}

const char* eval_mode_name(EvalMode mode) {
  switch (mode) {
    case EvalMode::Fcer: return "fcer";
    case EvalMode::Ccer: return "ccer";
    case EvalMode::Pfcer: return "pfcer";
    case EvalMode::Pccer: return "pccer";
  }
  return "unknown";
}

const char* normalization_name(Normalization norm) {
  switch (norm) {
    case Normalization::None: return "none";
    case Normalization::Distance: return "distance";
    case Normalization::TargetStd: return "std";
    case Normalization::AbsError: return "abserror";
    case Normalization::Variance: return "variance";
  }
  return "unknown";
}

EvalMode parse_eval_mode(const std::string& name) {
  if (name == "fcer") return EvalMode::Fcer;
  if (name == "ccer") return EvalMode::Ccer;
  if (name == "pfcer") return EvalMode::Pfcer;
  if (name == "pccer") return EvalMode::Pccer;
  throw Error(Errc::ConflictingFlags, "unknown mode '" + name + "'");
}

Normalization parse_normalization(const std::string& name) {
  if (name == "none") return Normalization::None;
  if (name == "distance") return Normalization::Distance;
  if (name == "std") return Normalization::TargetStd;
  if (name == "abserror") return Normalization::AbsError;
  if (name == "variance") return Normalization::Variance;
  throw Error(Errc::ConflictingFlags, "unknown normalization '" + name + "'");
}

namespace {

struct Prepared {
  Split parts;
  ForestModel model;
  DataTable test_instances;
};

Prepared prepare(const DataTable& data, const EvalConfig& config,
                 std::uint64_t split_seed, std::uint64_t model_seed) {
  SplitSpec spec;
  spec.proper_training_fraction = config.proper_training_fraction;
  spec.calibration_count = config.calibration_size;
  spec.seed = split_seed;
  Prepared out;
  out.parts = split(data, spec);
  require(out.parts.test.n_rows() >= config.n_test, Errc::InsufficientRows,
          "test partition has " + std::to_string(out.parts.test.n_rows()) +
              " rows, need " + std::to_string(config.n_test));
  std::vector<std::size_t> head(config.n_test);
  for (std::size_t i = 0; i < config.n_test; ++i) head[i] = i;
  out.test_instances = out.parts.test.subset(head);
  ForestParams params = config.forest;
  params.seed = model_seed;
  out.model = fit_forest(out.parts.proper_training, params);
  return out;
}

/// kNN difficulty reference: leading rows of the (already shuffled)
/// training split, capped.
DataTable difficulty_reference(const DataTable& train,
                               const EvalConfig& config) {
  const std::size_t n =
      std::min(config.difficulty_reference_cap, train.n_rows());
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return train.subset(idx);
}

std::unique_ptr<DifficultyEstimator> make_difficulty(
    Normalization norm, const DataTable& train, const ForestModel& model,
    const EvalConfig& config) {
  if (norm == Normalization::None) return nullptr;
  DifficultyPayload payload;
  DifficultyOptions options = config.difficulty;
  const DataTable reference = difficulty_reference(train, config);
  switch (norm) {
    case Normalization::Distance:
      return std::make_unique<DifficultyEstimator>(DifficultyEstimator::fit(
          DifficultyMode::KnnDistance, reference, payload, options));
    case Normalization::TargetStd:
      payload.targets = reference.targets();
      return std::make_unique<DifficultyEstimator>(DifficultyEstimator::fit(
          DifficultyMode::KnnTargetStd, reference, payload, options));
    case Normalization::AbsError: {
      const auto& oob = model.oob_predictions();
      payload.residuals.resize(reference.n_rows());
      for (std::size_t i = 0; i < reference.n_rows(); ++i)
        payload.residuals[i] = reference.target(i) - oob[i];
      return std::make_unique<DifficultyEstimator>(DifficultyEstimator::fit(
          DifficultyMode::KnnAbsError, reference, payload, options));
    }
    case Normalization::Variance:
      payload.model = &model;
      return std::make_unique<DifficultyEstimator>(DifficultyEstimator::fit(
          DifficultyMode::EnsembleVariance, reference, payload, options));
    case Normalization::None:
      break;
  }
  return nullptr;
}

Explanation run_mode(const CalibratedExplainer& state, EvalMode mode,
                     std::span<const double> row, const EvalConfig& config) {
  switch (mode) {
    case EvalMode::Fcer:
      return state.explain_factual(row, config.low_percentile,
                                   config.high_percentile);
    case EvalMode::Ccer:
      return state.explain_counterfactual(row, config.low_percentile,
                                          config.high_percentile);
    case EvalMode::Pfcer:
      return state.explain_probabilistic(row, config.threshold, false);
    case EvalMode::Pccer:
      return state.explain_probabilistic(row, config.threshold, true);
  }
  throw Error(Errc::ConflictingFlags, "unhandled mode");
}

bool counterfactual_mode(EvalMode mode) {
  return mode == EvalMode::Ccer || mode == EvalMode::Pccer;
}

/// Per repetition x instance: the rank-1 feature and each feature's tracked
/// value (weight, or prediction estimate for counterfactual modes, of that
/// feature's best rule).
struct RunRecord {
  std::size_t rank1_feature = 0;
  std::map<std::size_t, double> feature_value;
};

RunRecord record_run(const Explanation& explanation, bool counterfactual) {
  require(!explanation.rules.empty(), Errc::EmptyInput,
          "explanation produced no rules");
  RunRecord record;
  record.rank1_feature = explanation.rules.front().feature;
  for (const FeatureRule& rule : explanation.rules) {
    if (rule.conjunctive) continue;
    const double value =
        counterfactual ? rule.prediction_estimate : rule.weight;
    record.feature_value.emplace(rule.feature, value);  // best rule first
  }
  return record;
}

struct StabilityResult {
  double value = 0.0;
  std::vector<std::size_t> top_features;
};

/// Mean over instances of Var(tracked value of the instance's top feature),
/// where the top feature is the most frequent rank-1 feature across
/// repetitions (ties: lowest index).
StabilityResult stability_statistic(
    const std::vector<std::vector<RunRecord>>& runs, std::size_t n_test) {
  StabilityResult result;
  std::vector<double> per_instance;
  for (std::size_t j = 0; j < n_test; ++j) {
    std::map<std::size_t, std::size_t> counts;
    for (const auto& rep : runs) ++counts[rep[j].rank1_feature];
    std::size_t top = 0;
    std::size_t best = 0;
    for (const auto& [feature, count] : counts) {
      if (count > best) {  // map iterates ascending: ties keep lowest index
        best = count;
        top = feature;
      }
    }
    result.top_features.push_back(top);
    std::vector<double> values;
    for (const auto& rep : runs) {
      auto it = rep[j].feature_value.find(top);
      if (it != rep[j].feature_value.end()) values.push_back(it->second);
    }
    per_instance.push_back(population_variance(values));
  }
  result.value = per_instance.empty() ? 0.0 : exact_mean(per_instance);
  return result;
}

}  // namespace

EvalReport measure_stability(const DataTable& data, const EvalConfig& config) {
  require(config.repetitions >= 2, Errc::EmptyInput,
          "stability needs at least two repetitions");
  const Normalization norm = config.normalizations.empty()
                                 ? Normalization::None
                                 : config.normalizations.front();
  Prepared prep = prepare(data, config, config.seed, config.seed);
  auto difficulty =
      make_difficulty(norm, prep.parts.proper_training, prep.model, config);

  EvalReport report;
  report.metric = "stability";
  report.empty = config.n_test == 0;

  for (EvalMode mode : config.modes) {
    std::vector<std::vector<RunRecord>> runs;
    for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
      ExplainerOptions options;
      options.seed = config.seed_policy == SeedPolicy::IterationAsSeed
                         ? rep
                         : config.seed;
      options.tau_mode = config.tau_mode;
      CalibratedExplainer state(prep.model, prep.parts.calibration,
                                difficulty.get(), options);
      std::vector<RunRecord> per_instance;
      for (std::size_t j = 0; j < config.n_test; ++j) {
        const Explanation e =
            run_mode(state, mode, prep.test_instances.row(j), config);
        per_instance.push_back(record_run(e, counterfactual_mode(mode)));
      }
      runs.push_back(std::move(per_instance));
    }
    StabilityResult stat = stability_statistic(runs, config.n_test);
    report.cells.push_back(
        {norm, mode, stat.value, std::move(stat.top_features)});
  }
  return report;
}

EvalReport measure_robustness(const DataTable& data,
                              const EvalConfig& config) {
  require(config.repetitions >= 2, Errc::EmptyInput,
          "robustness needs at least two repetitions");
  const Normalization norm = config.normalizations.empty()
                                 ? Normalization::None
                                 : config.normalizations.front();

  // fixed test instances from the base split; the remaining rows are
  // redrawn into training/calibration each repetition
  SplitSpec base_spec;
  base_spec.proper_training_fraction = config.proper_training_fraction;
  base_spec.calibration_count = config.calibration_size;
  base_spec.seed = config.seed;
  Split base = split(data, base_spec);
  require(base.test.n_rows() >= config.n_test, Errc::InsufficientRows,
          "test partition too small");
  std::vector<std::size_t> head(config.n_test);
  for (std::size_t i = 0; i < config.n_test; ++i) head[i] = i;
  const DataTable test_instances = base.test.subset(head);

  // pool = proper training + calibration rows
  std::vector<double> pool_values;
  std::vector<double> pool_targets;
  auto append = [&](const DataTable& part) {
    for (std::size_t r = 0; r < part.n_rows(); ++r) {
      auto row = part.row(r);
      pool_values.insert(pool_values.end(), row.begin(), row.end());
      pool_targets.push_back(part.target(r));
    }
  };
  append(base.proper_training);
  append(base.calibration);
  DataTable pool(data.schema(), std::move(pool_values),
                 std::move(pool_targets));
  const double pool_fraction =
      static_cast<double>(base.proper_training.n_rows()) /
      static_cast<double>(pool.n_rows());

  EvalReport report;
  report.metric = "robustness";
  report.empty = config.n_test == 0;

  std::vector<std::vector<std::vector<RunRecord>>> runs_per_mode(
      config.modes.size());
  std::vector<std::vector<double>> predictions(config.n_test);

  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    SplitSpec rep_spec;
    rep_spec.proper_training_fraction = pool_fraction;
    rep_spec.calibration_count = config.calibration_size;
    rep_spec.seed = rep;
    Split draw = split(pool, rep_spec);
    ForestParams params = config.forest;
    params.seed = config.seed;
    ForestModel model = fit_forest(draw.proper_training, params);
    auto difficulty =
        make_difficulty(norm, draw.proper_training, model, config);
    ExplainerOptions options;
    options.seed = config.seed;
    options.tau_mode = config.tau_mode;
    CalibratedExplainer state(model, draw.calibration, difficulty.get(),
                              options);

    for (std::size_t j = 0; j < config.n_test; ++j)
      predictions[j].push_back(model.predict_row(test_instances.row(j)));

    for (std::size_t m = 0; m < config.modes.size(); ++m) {
      std::vector<RunRecord> per_instance;
      for (std::size_t j = 0; j < config.n_test; ++j) {
        const Explanation e = run_mode(state, config.modes[m],
                                       test_instances.row(j), config);
        per_instance.push_back(
            record_run(e, counterfactual_mode(config.modes[m])));
      }
      runs_per_mode[m].push_back(std::move(per_instance));
    }
  }

  for (std::size_t m = 0; m < config.modes.size(); ++m) {
    StabilityResult stat =
        stability_statistic(runs_per_mode[m], config.n_test);
    report.cells.push_back(
        {norm, config.modes[m], stat.value, std::move(stat.top_features)});
  }

  std::vector<double> per_instance_var;
  per_instance_var.reserve(config.n_test);
  for (std::size_t j = 0; j < config.n_test; ++j)
    per_instance_var.push_back(population_variance(predictions[j]));
  report.prediction_variance =
      per_instance_var.empty() ? 0.0 : exact_mean(per_instance_var);
  report.has_prediction_variance = true;
  return report;
}

EvalReport measure_runtime(const DataTable& data, const EvalConfig& config) {
  Prepared prep = prepare(data, config, config.seed, config.seed);

  EvalReport report;
  report.metric = "runtime";
  report.empty = config.n_test == 0;

  for (Normalization norm : config.normalizations) {
    auto difficulty =
        make_difficulty(norm, prep.parts.proper_training, prep.model, config);
    ExplainerOptions options;
    options.seed = config.seed;
    options.tau_mode = config.tau_mode;
    CalibratedExplainer state(prep.model, prep.parts.calibration,
                              difficulty.get(), options);
    for (EvalMode mode : config.modes) {
      EvalCell cell;
      cell.normalization = norm;
      cell.mode = mode;
      if (!report.empty) {
        const auto start = std::chrono::steady_clock::now();
        for (std::size_t j = 0; j < config.n_test; ++j)
          (void)run_mode(state, mode, prep.test_instances.row(j), config);
        const auto stop = std::chrono::steady_clock::now();
        const double seconds =
            std::chrono::duration<double>(stop - start).count();
        cell.value = seconds / static_cast<double>(config.n_test);
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json doc;
  doc["metric"] = metric;
  doc["empty"] = empty;
  nlohmann::json cells_json = nlohmann::json::array();
  for (const EvalCell& cell : cells) {
    nlohmann::json cell_json = {
        {"normalization", normalization_name(cell.normalization)},
        {"mode", eval_mode_name(cell.mode)},
        {"value", cell.value}};
    if (!cell.top_features.empty())
      cell_json["top_features"] = cell.top_features;
    cells_json.push_back(std::move(cell_json));
  }
  doc["cells"] = std::move(cells_json);
  if (has_prediction_variance)
    doc["prediction_variance"] = prediction_variance;
  return doc.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  // column order: modes in first-seen order
  std::vector<EvalMode> modes;
  std::vector<Normalization> norms;
  for (const EvalCell& cell : cells) {
    if (std::find(modes.begin(), modes.end(), cell.mode) == modes.end())
      modes.push_back(cell.mode);
    if (std::find(norms.begin(), norms.end(), cell.normalization) ==
        norms.end())
      norms.push_back(cell.normalization);
  }
  auto value_of = [&](Normalization n, EvalMode m) {
    for (const EvalCell& cell : cells)
      if (cell.normalization == n && cell.mode == m) return cell.value;
    return std::nan("");
  };

  if (metric == "runtime") {
    out << "normalization";
    for (EvalMode m : modes) out << ',' << eval_mode_name(m);
    out << ",average\n";
    std::vector<double> column_sums(modes.size(), 0.0);
    for (Normalization n : norms) {
      out << normalization_name(n);
      double row_sum = 0.0;
      for (std::size_t i = 0; i < modes.size(); ++i) {
        const double v = value_of(n, modes[i]);
        column_sums[i] += v;
        row_sum += v;
        out << ',' << v;
      }
      out << ',' << row_sum / static_cast<double>(modes.size()) << '\n';
    }
    out << "average";
    double total = 0.0;
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const double v = column_sums[i] / static_cast<double>(norms.size());
      total += v;
      out << ',' << v;
    }
    out << ',' << total / static_cast<double>(modes.size()) << '\n';
  } else {
    out << "metric";
    for (EvalMode m : modes) out << ',' << eval_mode_name(m);
    out << '\n' << metric;
    for (EvalMode m : modes) out << ',' << value_of(norms.front(), m);
    out << '\n';
    if (has_prediction_variance)
      out << "prediction_variance," << prediction_variance << '\n';
  }
  return out.str();
}

}  // namespace calx
