#ifndef CALX_REGRESSOR_HPP
#define CALX_REGRESSOR_HPP

#include <cstring>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "calx/dataset.hpp"
#include "calx/error.hpp"

namespace calx {

/// Point-prediction contract the explainer works against. Per-member
/// predictions are optional and only needed by variance-based difficulty
/// estimation.
class Regressor {
 public:
  virtual ~Regressor() = default;

  virtual std::vector<double> predict(const DataTable& table) const = 0;
  /// Unchecked hot path for synthesized rows already in training layout.
  virtual double predict_row(std::span<const double> row) const = 0;

  virtual bool has_member_predictions() const { return false; }
  virtual std::vector<double> member_predictions_row(
      std::span<const double> row) const {
    (void)row;
    throw Error(Errc::PayloadMismatch,
                "model does not expose per-member predictions");
  }
};

/// Adapts a plain function; useful for externally defined models and for
/// constructing models with known structure in tests.
class FunctionRegressor final : public Regressor {
 public:
  explicit FunctionRegressor(std::function<double(std::span<const double>)> fn)
      : fn_(std::move(fn)) {}

  std::vector<double> predict(const DataTable& table) const override {
    std::vector<double> out(table.n_rows());
    for (std::size_t r = 0; r < table.n_rows(); ++r) out[r] = fn_(table.row(r));
    return out;
  }
  double predict_row(std::span<const double> row) const override {
    return fn_(row);
  }

 private:
  std::function<double(std::span<const double>)> fn_;
};

/// Lookup table keyed on exact feature vectors, for models that only exist
/// as a predictions file. Rows without a stored prediction raise
/// PayloadMismatch.
class PrecomputedRegressor final : public Regressor {
 public:
  void add(std::span<const double> row, double prediction) {
    table_[key(row)] = prediction;
  }

  bool contains(std::span<const double> row) const {
    return table_.count(key(row)) != 0;
  }

  std::vector<double> predict(const DataTable& table) const override {
    std::vector<double> out(table.n_rows());
    for (std::size_t r = 0; r < table.n_rows(); ++r)
      out[r] = predict_row(table.row(r));
    return out;
  }

  double predict_row(std::span<const double> row) const override {
    auto it = table_.find(key(row));
    require(it != table_.end(), Errc::PayloadMismatch,
            "no stored prediction for a required row; regenerate the "
            "predictions file against the dumped query rows");
    return it->second;
  }

 private:
  static std::string key(std::span<const double> row) {
    std::string bytes(row.size() * sizeof(double), '\0');
    std::memcpy(bytes.data(), row.data(), bytes.size());
    return bytes;
  }

  std::unordered_map<std::string, double> table_;
};

}  // namespace calx

#endif
