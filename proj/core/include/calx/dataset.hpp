#ifndef CALX_DATASET_HPP
#define CALX_DATASET_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace calx {

enum class FeatureKind { Numerical, Categorical };

/// Column layout shared by every table in a run. Categorical features carry
/// the full code universe; cells store dense indices into that list.
struct FeatureSchema {
  std::vector<std::string> names;
  std::vector<FeatureKind> kinds;
  /// Per feature; empty for numerical features.
  std::vector<std::vector<std::string>> categorical_values;

  std::size_t n_features() const { return names.size(); }
  bool is_categorical(std::size_t f) const {
    return kinds[f] == FeatureKind::Categorical;
  }

  /// Index of `code` in feature f's value list, or -1 if unknown.
  int code_of(std::size_t f, const std::string& code) const;
  const std::string& code_name(std::size_t f, int code) const;

  /// Throws BadSchema on duplicate names, empty feature list, or a
  /// categorical feature with fewer than two codes.
  void validate() const;

  bool operator==(const FeatureSchema& other) const = default;
};

/// Row-major table of encoded feature values with optional targets.
class DataTable {
 public:
  DataTable() = default;
  DataTable(FeatureSchema schema, std::vector<double> values,
            std::vector<double> targets);

  const FeatureSchema& schema() const { return schema_; }
  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return schema_.n_features(); }
  bool has_targets() const { return !targets_.empty(); }

  double at(std::size_t row, std::size_t col) const {
    return values_[row * schema_.n_features() + col];
  }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * schema_.n_features(), schema_.n_features()};
  }
  double target(std::size_t r) const { return targets_[r]; }
  const std::vector<double>& targets() const { return targets_; }

  /// Copy of the rows at `indices`, preserving order.
  DataTable subset(const std::vector<std::size_t>& indices) const;

  /// All values of one feature column.
  std::vector<double> column(std::size_t f) const;

 private:
  FeatureSchema schema_;
  std::vector<double> values_;
  std::vector<double> targets_;
  std::size_t n_rows_ = 0;
};

struct SplitSpec {
  double proper_training_fraction = 0.5;
  std::size_t calibration_count = 500;
  std::uint64_t seed = 42;
};

struct Split {
  DataTable proper_training;
  DataTable calibration;
  DataTable test;
};

struct SchemaFile {
  FeatureSchema schema;
  std::string target;
};

/// Reads the JSON schema file ({"features": [{name, kind, values?}],
/// "target": name}).
SchemaFile load_schema(const std::string& path);
SchemaFile parse_schema(const std::string& json_text);
std::string schema_to_json(const FeatureSchema& schema,
                           const std::string& target);

/// Loads an RFC-4180-style CSV against a schema. Pass an empty target name
/// to load feature columns only. Extra columns are ignored.
DataTable load_csv(const std::string& path, const FeatureSchema& schema,
                   const std::string& target_column);

/// Writes feature columns plus (when present) the target column; numeric
/// cells round-trip exactly.
void save_csv(const DataTable& table, const std::string& path,
              const std::string& target_column = "target");

/// Seeded shuffle, then proper training / calibration / test partition.
/// The three parts are disjoint, exhaustive, and keep the shuffled order.
Split split(const DataTable& table, const SplitSpec& spec);

}  // namespace calx

#endif
