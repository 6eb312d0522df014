#include "calx/difficulty.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "calx/error.hpp"

namespace calx {

DifficultyEstimator DifficultyEstimator::fit(DifficultyMode mode,
                                             const DataTable& reference,
                                             const DifficultyPayload& payload,
                                             const DifficultyOptions& options) {
  DifficultyEstimator est;
  est.mode_ = mode;
  est.beta_ = options.beta;
  est.scale_ = options.scale;
  require(options.beta >= 0.0, Errc::InvalidCalibration,
          "beta must be non-negative");

  if (mode == DifficultyMode::EnsembleVariance) {
    require(payload.model != nullptr, Errc::PayloadMismatch,
            "ensemble-variance difficulty needs a model");
    require(payload.model->has_member_predictions(), Errc::PayloadMismatch,
            "ensemble-variance difficulty needs per-member predictions");
    est.model_ = payload.model;
    return est;
  }

  require(reference.n_rows() > 0, Errc::EmptyInput,
          "difficulty reference set is empty");
  est.reference_ = reference;
  if (options.k.has_value()) {
    require(*options.k >= 1, Errc::KTooLarge, "k must be at least 1");
    require(*options.k <= reference.n_rows(), Errc::KTooLarge,
            "k = " + std::to_string(*options.k) + " exceeds reference size " +
                std::to_string(reference.n_rows()));
    est.k_ = *options.k;
  } else {
    est.k_ = std::min<std::size_t>(25, reference.n_rows());
  }

  switch (mode) {
    case DifficultyMode::KnnTargetStd:
      est.values_ = payload.targets.empty() && reference.has_targets()
                        ? reference.targets()
                        : payload.targets;
      require(est.values_.size() == reference.n_rows(), Errc::PayloadMismatch,
              "target count does not match reference rows");
      break;
    case DifficultyMode::KnnAbsError:
      est.values_ = payload.residuals;
      require(est.values_.size() == reference.n_rows(), Errc::PayloadMismatch,
              "residual count does not match reference rows");
      break;
    case DifficultyMode::KnnDistance:
      break;
    case DifficultyMode::EnsembleVariance:
      break;  // handled above
  }

  // min-max scaling parameters from the reference set; constant features
  // collapse to 0 instead of dividing by zero
  const std::size_t d = reference.n_cols();
  est.offset_.assign(d, 0.0);
  est.factor_.assign(d, 1.0);
  if (options.scale) {
    for (std::size_t f = 0; f < d; ++f) {
      if (reference.schema().is_categorical(f)) continue;
      double lo = reference.at(0, f), hi = reference.at(0, f);
      for (std::size_t r = 1; r < reference.n_rows(); ++r) {
        lo = std::min(lo, reference.at(r, f));
        hi = std::max(hi, reference.at(r, f));
      }
      est.offset_[f] = lo;
      est.factor_[f] = hi > lo ? 1.0 / (hi - lo) : 0.0;
    }
  }
  return est;
}

double DifficultyEstimator::scale_value(double v, std::size_t f) const {
  if (!scale_) return v;
  return (v - offset_[f]) * factor_[f];
}

double DifficultyEstimator::scaled_at(std::size_t ref_row,
                                      std::size_t f) const {
  return scale_value(reference_.at(ref_row, f), f);
}

std::vector<std::size_t> DifficultyEstimator::nearest(
    std::span<const double> row) const {
  const std::size_t n = reference_.n_rows();
  const std::size_t d = reference_.n_cols();
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t f = 0; f < d; ++f) {
      if (reference_.schema().is_categorical(f)) {
        acc += row[f] == reference_.at(r, f) ? 0.0 : 1.0;
      } else {
        const double delta = scale_value(row[f], f) - scaled_at(r, f);
        acc += delta * delta;
      }
    }
    dist[r] = {std::sqrt(acc), r};
  }
  // (distance, index) ordering makes distance ties deterministic: lowest
  // reference index wins
  std::nth_element(dist.begin(), dist.begin() + static_cast<long>(k_ - 1),
                   dist.end());
  dist.resize(k_);
  std::sort(dist.begin(), dist.end());
  std::vector<std::size_t> out(k_);
  for (std::size_t i = 0; i < k_; ++i) out[i] = dist[i].second;
  return out;
}

double DifficultyEstimator::estimate_row(std::span<const double> row) const {
  switch (mode_) {
    case DifficultyMode::KnnDistance: {
      const auto idx = nearest(row);
      double sum = 0.0;
      for (std::size_t r : idx) {
        double acc = 0.0;
        for (std::size_t f = 0; f < reference_.n_cols(); ++f) {
          if (reference_.schema().is_categorical(f)) {
            acc += row[f] == reference_.at(r, f) ? 0.0 : 1.0;
          } else {
            const double delta = scale_value(row[f], f) - scaled_at(r, f);
            acc += delta * delta;
          }
        }
        sum += std::sqrt(acc);
      }
      return sum / static_cast<double>(idx.size());
    }
    case DifficultyMode::KnnTargetStd: {
      const auto idx = nearest(row);
      double sum = 0.0;
      for (std::size_t r : idx) sum += values_[r];
      const double mean = sum / static_cast<double>(idx.size());
      double var = 0.0;
      for (std::size_t r : idx) {
        const double dev = values_[r] - mean;
        var += dev * dev;
      }
      return std::sqrt(var / static_cast<double>(idx.size()));
    }
    case DifficultyMode::KnnAbsError: {
      const auto idx = nearest(row);
      double sum = 0.0;
      for (std::size_t r : idx) sum += std::fabs(values_[r]);
      return sum / static_cast<double>(idx.size());
    }
    case DifficultyMode::EnsembleVariance: {
      const std::vector<double> member = model_->member_predictions_row(row);
      double sum = 0.0;
      for (double v : member) sum += v;
      const double mean = sum / static_cast<double>(member.size());
      double var = 0.0;
      for (double v : member) {
        const double dev = v - mean;
        var += dev * dev;
      }
      return var / static_cast<double>(member.size());
    }
  }
  return 0.0;
}

std::vector<double> DifficultyEstimator::estimate(
    const DataTable& rows) const {
  if (mode_ != DifficultyMode::EnsembleVariance)
    require(rows.schema() == reference_.schema(), Errc::SchemaMismatch,
            "difficulty query schema differs from the reference schema");
  std::vector<double> out(rows.n_rows());
  for (std::size_t r = 0; r < rows.n_rows(); ++r)
    out[r] = estimate_row(rows.row(r));
  return out;
}

}  // namespace calx
