#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "calx/dataset.hpp"
#include "calx/difficulty.hpp"
#include "calx/error.hpp"
#include "calx/explainer.hpp"
#include "calx/explanation_io.hpp"
#include "calx/forest.hpp"
#include "calx/harness.hpp"
#include "calx/regressor.hpp"
#include "calx/svg_plot.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace calx;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t default_seed() {
  const char* env = std::getenv("CALX_SEED");
  if (env == nullptr || *env == '\0') return 42;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  require(end != env && *end == '\0', Errc::ConflictingFlags,
          "CALX_SEED must be a nonnegative integer");
  return v;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::IoFailure, "cannot read " + path);
  return {std::istreambuf_iterator<char>(in),
          std::istreambuf_iterator<char>()};
}

void spill(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::IoFailure, "cannot write " + path);
  out << text;
  require(out.good(), Errc::IoFailure, "short write to " + path);
}

double parse_bound(const std::string& token) {
  if (token == "inf") return kInf;
  if (token == "-inf") return -kInf;
  try {
    std::size_t pos = 0;
    const double v = std::stod(token, &pos);
    require(pos == token.size(), Errc::InvalidPercentiles,
            "bad percentile '" + token + "'");
    return v;
  } catch (const std::logic_error&) {
    throw Error(Errc::InvalidPercentiles, "bad percentile '" + token + "'");
  }
}

std::pair<double, double> parse_percentiles(const std::string& text) {
  const std::size_t comma = text.find(',');
  require(comma != std::string::npos && text.find(',', comma + 1) ==
                                            std::string::npos,
          Errc::InvalidPercentiles,
          "percentiles must be 'low,high' (tokens may be -inf/inf)");
  return {parse_bound(text.substr(0, comma)),
          parse_bound(text.substr(comma + 1))};
}

DifficultyMode difficulty_mode(const std::string& name) {
  if (name == "distance") return DifficultyMode::KnnDistance;
  if (name == "std") return DifficultyMode::KnnTargetStd;
  if (name == "abserror") return DifficultyMode::KnnAbsError;
  if (name == "variance") return DifficultyMode::EnsembleVariance;
  throw Error(Errc::ConflictingFlags, "unknown difficulty '" + name + "'");
}

/// Wraps another model and remembers every row it was asked about, in first
/// query order; feeds --dump-queries.
class RecordingRegressor final : public Regressor {
 public:
  explicit RecordingRegressor(const Regressor& inner) : inner_(&inner) {}

  std::vector<double> predict(const DataTable& table) const override {
    std::vector<double> out(table.n_rows());
    for (std::size_t r = 0; r < table.n_rows(); ++r)
      out[r] = predict_row(table.row(r));
    return out;
  }

  double predict_row(std::span<const double> row) const override {
    std::string key(row.size() * sizeof(double), '\0');
    std::memcpy(key.data(), row.data(), key.size());
    if (seen_.insert(key).second)
      rows_.emplace_back(row.begin(), row.end());
    return inner_->predict_row(row);
  }

  const std::vector<std::vector<double>>& rows() const { return rows_; }

 private:
  const Regressor* inner_;
  mutable std::unordered_set<std::string> seen_;
  mutable std::vector<std::vector<double>> rows_;
};

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string data;
  std::string schema;
  std::string target;
  std::string out;
  std::string difficulty = "none";
  std::string predictions;
  std::size_t cal = 500;
  double train_frac = 0.8;
  std::size_t trees = 100;
  std::size_t max_depth = 0;
  std::size_t min_leaf = 1;
  std::size_t difficulty_k = 0;
  std::size_t difficulty_ref = 500;
  double beta = 0.01;
  std::uint64_t seed = 42;
};

int cmd_fit(const FitArgs& args) {
  require(fs::exists(args.schema), Errc::IoFailure,
          "schema not found: " + args.schema);
  const SchemaFile sf = load_schema(args.schema);
  const std::string target = args.target.empty() ? sf.target : args.target;
  require(!target.empty(), Errc::BadSchema,
          "no target column (give --target or set it in the schema)");
  const DataTable data = load_csv(args.data, sf.schema, target);

  SplitSpec spec;
  spec.proper_training_fraction = args.train_frac;
  spec.calibration_count = args.cal;
  spec.seed = args.seed;
  const Split parts = split(data, spec);

  const bool external = !args.predictions.empty();
  if (external) {
    require(args.difficulty != "abserror" && args.difficulty != "variance",
            Errc::ConflictingFlags,
            "difficulty '" + args.difficulty +
                "' needs model internals (out-of-bag or per-member "
                "predictions) and cannot be used with --predictions");
    const DataTable preds = load_csv(args.predictions, sf.schema,
                                     "prediction");
    PrecomputedRegressor lookup;
    for (std::size_t r = 0; r < preds.n_rows(); ++r)
      lookup.add(preds.row(r), preds.target(r));
    for (std::size_t r = 0; r < parts.calibration.n_rows(); ++r)
      require(lookup.contains(parts.calibration.row(r)),
              Errc::PayloadMismatch,
              "predictions file lacks calibration row " + std::to_string(r));
  }

  fs::create_directories(args.out);
  const fs::path run(args.out);

  ForestModel model;
  if (!external) {
    ForestParams params;
    params.n_trees = args.trees;
    params.max_depth = args.max_depth;
    params.min_leaf = args.min_leaf;
    params.seed = args.seed;
    model = fit_forest(parts.proper_training, params);
    model.save((run / "model.json").string());
  }

  if (args.difficulty != "none") {
    (void)difficulty_mode(args.difficulty);  // validate the name early
    const std::size_t n_ref =
        std::min(args.difficulty_ref, parts.proper_training.n_rows());
    std::vector<std::size_t> head(n_ref);
    for (std::size_t i = 0; i < n_ref; ++i) head[i] = i;
    const DataTable reference = parts.proper_training.subset(head);
    save_csv(reference, (run / "reference.csv").string(), target);

    if (args.difficulty == "abserror") {
      FeatureSchema rs;
      rs.names = {"residual"};
      rs.kinds = {FeatureKind::Numerical};
      rs.categorical_values = {{}};
      std::vector<double> residuals(n_ref);
      const auto& oob = model.oob_predictions();
      for (std::size_t i = 0; i < n_ref; ++i)
        residuals[i] = reference.target(i) - oob[i];
      save_csv(DataTable(rs, residuals, {}),
               (run / "residuals.csv").string());
    }
  }

  save_csv(parts.calibration, (run / "calibration.csv").string(), target);

  json manifest;
  manifest["schema"] = json::parse(schema_to_json(sf.schema, target));
  manifest["target"] = target;
  manifest["difficulty"] = args.difficulty;
  manifest["difficulty_k"] = args.difficulty_k;
  manifest["beta"] = args.beta;
  manifest["seed"] = args.seed;
  manifest["external"] = external;
  manifest["counts"] = {{"training", parts.proper_training.n_rows()},
                        {"calibration", parts.calibration.n_rows()},
                        {"held_out", parts.test.n_rows()}};
  if (!external)
    manifest["forest"] = {{"trees", args.trees},
                          {"max_depth", args.max_depth},
                          {"min_leaf", args.min_leaf}};
  spill((run / "manifest.json").string(), manifest.dump(2) + "\n");

  std::cout << "training rows: " << parts.proper_training.n_rows() << "\n"
            << "calibration rows: " << parts.calibration.n_rows() << "\n"
            << "held-out rows: " << parts.test.n_rows() << "\n"
            << "artifacts: " << args.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// explain

struct ExplainArgs {
  std::string run;
  std::string data;
  std::string out;
  std::string mode = "factual";
  std::string percentiles = "5,95";
  std::string plot;
  std::string predictions;
  std::string dump_queries;
  std::vector<std::size_t> rows;
  double threshold = 0.0;
  bool has_threshold = false;
  std::size_t conjunctions = 0;
  std::size_t top_k = 10;
  std::uint64_t seed = 0;
  bool has_seed = false;
};

struct RunArtifacts {
  FeatureSchema schema;
  std::string target;
  json manifest;
  DataTable calibration;
  std::unique_ptr<ForestModel> forest;  ///< internal runs only
  std::unique_ptr<PrecomputedRegressor> lookup;
  const Regressor* model = nullptr;
  std::unique_ptr<DifficultyEstimator> difficulty;
};

RunArtifacts load_run(const std::string& run_dir,
                      const std::string& predictions, bool need_model) {
  const fs::path run(run_dir);
  RunArtifacts art;
  try {
    art.manifest = json::parse(slurp((run / "manifest.json").string()));
    art.schema =
        parse_schema(art.manifest.at("schema").dump()).schema;
    art.target = art.manifest.at("target").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::BadDocument,
                std::string("bad run manifest: ") + e.what());
  }
  art.calibration =
      load_csv((run / "calibration.csv").string(), art.schema, art.target);

  const bool external = art.manifest.value("external", false);
  if (external) {
    require(!predictions.empty() || !need_model, Errc::ConflictingFlags,
            "this run was fitted against external predictions; pass "
            "--predictions");
    if (!predictions.empty()) {
      const DataTable preds = load_csv(predictions, art.schema, "prediction");
      art.lookup = std::make_unique<PrecomputedRegressor>();
      for (std::size_t r = 0; r < preds.n_rows(); ++r)
        art.lookup->add(preds.row(r), preds.target(r));
      art.model = art.lookup.get();
    }
  } else {
    art.forest = std::make_unique<ForestModel>(
        ForestModel::load((run / "model.json").string()));
    art.model = art.forest.get();
  }

  const std::string choice =
      art.manifest.value("difficulty", std::string("none"));
  if (choice != "none") {
    const DifficultyMode mode = difficulty_mode(choice);
    const DataTable reference =
        load_csv((run / "reference.csv").string(), art.schema, art.target);
    DifficultyPayload payload;
    if (mode == DifficultyMode::KnnTargetStd)
      payload.targets = reference.targets();
    if (mode == DifficultyMode::KnnAbsError) {
      FeatureSchema rs;
      rs.names = {"residual"};
      rs.kinds = {FeatureKind::Numerical};
      rs.categorical_values = {{}};
      payload.residuals =
          load_csv((run / "residuals.csv").string(), rs, "").column(0);
    }
    if (mode == DifficultyMode::EnsembleVariance) {
      require(!external, Errc::ConflictingFlags,
              "variance difficulty needs per-member predictions");
      payload.model = art.forest.get();
    }
    DifficultyOptions options;
    options.beta = art.manifest.value("beta", 0.01);
    const std::size_t k = art.manifest.value("difficulty_k", 0);
    if (k > 0) options.k = k;
    art.difficulty = std::make_unique<DifficultyEstimator>(
        DifficultyEstimator::fit(mode, reference, payload, options));
  }
  return art;
}

Explanation explain_one(const CalibratedExplainer& state,
                        std::span<const double> row, const ExplainArgs& args,
                        double lo, double hi) {
  const bool counterfactual = args.mode == "counterfactual";
  Explanation e;
  if (args.has_threshold)  // probabilistic takes precedence over percentiles
    e = state.explain_probabilistic(row, args.threshold, counterfactual);
  else if (counterfactual)
    e = state.explain_counterfactual(row, lo, hi);
  else
    e = state.explain_factual(row, lo, hi);
  if (args.conjunctions != 0)
    e = state.add_conjunctions(e, row, args.conjunctions);
  return e;
}

int dump_queries(const RunArtifacts& art, const DataTable& test,
                 const ExplainArgs& args, double lo, double hi) {
  // run the full pipeline against a recording stub and persist every row it
  // asks about; conjunctions enumerate all rule pairs so the dump covers any
  // later top-n selection
  const FunctionRegressor zero(
      [](std::span<const double>) { return 0.0; });
  const bool external = art.manifest.value("external", false);
  const RecordingRegressor recorder(
      external ? static_cast<const Regressor&>(zero) : *art.model);

  ExplainerOptions options;
  options.seed = args.has_seed ? args.seed
                               : art.manifest.value("seed", std::uint64_t{42});
  options.beta = art.manifest.value("beta", 0.01);
  const CalibratedExplainer state(recorder, art.calibration,
                                  art.difficulty.get(), options);

  for (std::size_t r = 0; r < test.n_rows(); ++r) {
    const auto row = test.row(r);
    const Explanation factual = state.explain_factual(row, lo, hi);
    const Explanation cf = state.explain_counterfactual(row, lo, hi);
    if (args.has_threshold) {
      (void)state.explain_probabilistic(row, args.threshold, false);
      (void)state.explain_probabilistic(row, args.threshold, true);
    }
    if (args.conjunctions != 0) {
      (void)state.add_conjunctions(factual, row, args.conjunctions,
                                   factual.rules.size());
      (void)state.add_conjunctions(cf, row, args.conjunctions,
                                   cf.rules.size());
    }
  }

  std::vector<double> flat;
  for (const auto& row : recorder.rows())
    flat.insert(flat.end(), row.begin(), row.end());
  save_csv(DataTable(art.schema, flat, {}), args.dump_queries);
  std::cout << "wrote " << recorder.rows().size() << " query rows to "
            << args.dump_queries << "\n";
  return 0;
}

int cmd_explain(const ExplainArgs& args) {
  const RunArtifacts art =
      load_run(args.run, args.predictions, args.dump_queries.empty());
  const DataTable test = load_csv(args.data, art.schema, "");
  const auto [lo, hi] = parse_percentiles(args.percentiles);

  if (!args.dump_queries.empty()) return dump_queries(art, test, args, lo, hi);

  ExplainerOptions options;
  options.seed = args.has_seed ? args.seed
                               : art.manifest.value("seed", std::uint64_t{42});
  options.beta = art.manifest.value("beta", 0.01);
  const CalibratedExplainer state(*art.model, art.calibration,
                                  art.difficulty.get(), options);

  std::vector<std::size_t> rows = args.rows;
  if (rows.empty())
    for (std::size_t r = 0; r < test.n_rows(); ++r) rows.push_back(r);

  fs::create_directories(args.out);
  const fs::path out(args.out);
  for (std::size_t r : rows) {
    require(r < test.n_rows(), Errc::InsufficientRows,
            "row " + std::to_string(r) + " out of range (test data has " +
                std::to_string(test.n_rows()) + " rows)");
    const auto row = test.row(r);
    const Explanation e = explain_one(state, row, args, lo, hi);
    const ExplanationDocument doc = doc_from_explanation(e, row, art.schema);

    char stem[32];
    std::snprintf(stem, sizeof stem, "explanation_%04zu", r);
    save_document(doc, (out / (std::string(stem) + ".json")).string());
    if (!args.plot.empty()) {
      PlotOptions plot_options;
      plot_options.top_k = args.top_k;
      const std::string svg =
          render_svg(doc, parse_plot_kind(args.plot), plot_options);
      save_svg(svg, (out / (std::string(stem) + ".svg")).string());
    }
  }
  std::cout << "wrote " << rows.size() << " explanation(s) to " << args.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvalArgs {
  std::string data;
  std::string schema;
  std::string target;
  std::string metric = "stability";
  std::string out = "eval";
  std::vector<std::string> modes = {"fcer", "ccer", "pfcer", "pccer"};
  std::vector<std::string> normalizations = {"none"};
  std::size_t repetitions = 100;
  std::size_t n_test = 10;
  std::size_t cal = 500;
  double train_frac = 0.5;
  double threshold = 0.5;
  std::string percentiles = "5,95";
  std::size_t trees = 100;
  std::uint64_t seed = 42;
};

int cmd_evaluate(const EvalArgs& args) {
  require(fs::exists(args.schema), Errc::IoFailure,
          "schema not found: " + args.schema);
  const SchemaFile sf = load_schema(args.schema);
  const std::string target = args.target.empty() ? sf.target : args.target;
  require(!target.empty(), Errc::BadSchema,
          "no target column (give --target or set it in the schema)");
  const DataTable data = load_csv(args.data, sf.schema, target);

  EvalConfig config;
  config.repetitions = args.repetitions;
  config.n_test = args.n_test;
  config.calibration_size = args.cal;
  config.proper_training_fraction = args.train_frac;
  config.threshold = args.threshold;
  std::tie(config.low_percentile, config.high_percentile) =
      parse_percentiles(args.percentiles);
  config.modes.clear();
  for (const auto& name : args.modes)
    config.modes.push_back(parse_eval_mode(name));
  config.normalizations.clear();
  for (const auto& name : args.normalizations)
    config.normalizations.push_back(parse_normalization(name));
  config.forest.n_trees = args.trees;
  config.seed = args.seed;

  EvalReport report;
  if (args.metric == "stability")
    report = measure_stability(data, config);
  else if (args.metric == "robustness")
    report = measure_robustness(data, config);
  else if (args.metric == "runtime")
    report = measure_runtime(data, config);
  else
    throw Error(Errc::ConflictingFlags,
                "unknown metric '" + args.metric +
                    "' (expected stability, robustness, or runtime)");

  const fs::path out(args.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  spill(args.out + ".json", report.to_json());
  spill(args.out + ".csv", report.to_csv());
  std::cout << report.to_csv();
  return 0;
}

std::string one_line(std::string text) {
  for (char& c : text)
    if (c == '\n' || c == '\r') c = ' ';
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calibrated local explanations for regression models"};
  app.require_subcommand(1);

  FitArgs fit_args;
  EvalArgs eval_args;
  ExplainArgs explain_args;
  try {
    fit_args.seed = default_seed();
    eval_args.seed = fit_args.seed;
  } catch (const Error& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  }

  CLI::App* fit = app.add_subcommand(
      "fit", "split data, fit a forest, persist run artifacts");
  fit->add_option("--data", fit_args.data, "training CSV")->required();
  fit->add_option("--schema", fit_args.schema, "schema JSON")->required();
  fit->add_option("--target", fit_args.target,
                  "target column (defaults to the schema's)");
  fit->add_option("--out", fit_args.out, "run directory")->required();
  fit->add_option("--cal", fit_args.cal, "calibration rows");
  fit->add_option("--train-frac", fit_args.train_frac,
                  "fraction of rows used for training");
  fit->add_option("--trees", fit_args.trees, "forest size");
  fit->add_option("--max-depth", fit_args.max_depth, "0 = unlimited");
  fit->add_option("--min-leaf", fit_args.min_leaf, "min rows per leaf");
  fit->add_option("--difficulty", fit_args.difficulty,
                  "difficulty estimator for normalized intervals")
      ->check(CLI::IsMember(
          {"none", "distance", "std", "abserror", "variance"}));
  fit->add_option("--difficulty-k", fit_args.difficulty_k,
                  "kNN neighbor count (0 = default)");
  fit->add_option("--difficulty-ref", fit_args.difficulty_ref,
                  "difficulty reference row cap");
  fit->add_option("--beta", fit_args.beta, "residual scale regularizer");
  fit->add_option("--seed", fit_args.seed, "RNG seed");
  fit->add_option("--predictions", fit_args.predictions,
                  "external model predictions CSV (skips forest training)");

  CLI::App* explain = app.add_subcommand(
      "explain", "generate explanation documents for test rows");
  explain->add_option("--run", explain_args.run, "run directory from fit")
      ->required();
  explain->add_option("--data", explain_args.data, "test CSV")->required();
  explain->add_option("--out", explain_args.out, "output directory")
      ->required();
  explain->add_option("--mode", explain_args.mode, "rule layout")
      ->check(CLI::IsMember({"factual", "counterfactual"}));
  explain->add_option("--percentiles", explain_args.percentiles,
                      "low,high; -inf/inf give one-sided intervals");
  CLI::Option* threshold_opt = explain->add_option(
      "--threshold", explain_args.threshold,
      "switch to probabilistic P(y <= t) explanations");
  explain->add_option("--conjunctions", explain_args.conjunctions,
                      "add conjunctive rules of this order (2 or 3)");
  explain->add_option("--plot", explain_args.plot, "also write an SVG")
      ->check(CLI::IsMember({"regular", "uncertainty", "counterfactual"}));
  explain->add_option("--top-k", explain_args.top_k, "rule rows per plot");
  explain->add_option("--rows", explain_args.rows,
                      "explain only these row indices")
      ->delimiter(',');
  CLI::Option* seed_opt =
      explain->add_option("--seed", explain_args.seed, "RNG seed");
  explain->add_option("--predictions", explain_args.predictions,
                      "predictions CSV for externally fitted runs");
  explain->add_option("--dump-queries", explain_args.dump_queries,
                      "write the rows a model must score, then exit");

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "run the stability/robustness/runtime protocol");
  evaluate->add_option("--data", eval_args.data, "dataset CSV")->required();
  evaluate->add_option("--schema", eval_args.schema, "schema JSON")
      ->required();
  evaluate->add_option("--target", eval_args.target,
                       "target column (defaults to the schema's)");
  evaluate->add_option("--metric", eval_args.metric,
                       "stability, robustness, or runtime");
  evaluate->add_option("--modes", eval_args.modes, "explanation modes")
      ->delimiter(',');
  evaluate->add_option("--normalizations", eval_args.normalizations,
                       "difficulty normalizations")
      ->delimiter(',');
  evaluate->add_option("--repetitions", eval_args.repetitions, "");
  evaluate->add_option("--n-test", eval_args.n_test, "test instances");
  evaluate->add_option("--cal", eval_args.cal, "calibration rows");
  evaluate->add_option("--train-frac", eval_args.train_frac, "");
  evaluate->add_option("--threshold", eval_args.threshold,
                       "probabilistic threshold");
  evaluate->add_option("--percentiles", eval_args.percentiles, "low,high");
  evaluate->add_option("--trees", eval_args.trees, "forest size");
  evaluate->add_option("--seed", eval_args.seed, "RNG seed");
  evaluate->add_option("--out", eval_args.out,
                       "output path prefix (.json/.csv appended)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  }
  explain_args.has_threshold = threshold_opt->count() > 0;
  explain_args.has_seed = seed_opt->count() > 0;

  try {
    if (fit->parsed()) return cmd_fit(fit_args);
    if (explain->parsed()) return cmd_explain(explain_args);
    return cmd_evaluate(eval_args);
  } catch (const Error& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  }
}
