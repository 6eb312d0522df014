#include "calx/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "calx/error.hpp"

namespace calx {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// floor/ceil with a small nudge so that index products like 0.05 * 20 do
/// not land on 0.9999... and shift a rank by one.
long floor_index(double v) { return static_cast<long>(std::floor(v + 1e-9)); }
long ceil_index(double v) { return static_cast<long>(std::ceil(v - 1e-9)); }

}  // namespace

Cps nonconformity_scores(const ResidualSet& set) {
  require(!set.residuals.empty(), Errc::EmptyCalibration,
          "no calibration residuals");
  Cps cps;
  cps.beta = set.beta;
  cps.normalized = !set.sigmas.empty();
  if (cps.normalized) {
    require(set.sigmas.size() == set.residuals.size(),
            Errc::InvalidCalibration,
            "sigma count " + std::to_string(set.sigmas.size()) +
                " does not match residual count " +
                std::to_string(set.residuals.size()));
    cps.alphas.resize(set.residuals.size());
    for (std::size_t i = 0; i < set.residuals.size(); ++i) {
      const double denom = set.sigmas[i] + set.beta;
      require(denom > 0.0, Errc::InvalidCalibration,
              "sigma + beta must be positive (row " + std::to_string(i) +
                  ")");
      cps.alphas[i] = set.residuals[i] / denom;
    }
  } else {
    cps.alphas = set.residuals;
  }
  std::sort(cps.alphas.begin(), cps.alphas.end());
  return cps;
}

Cpd build_cpd(const Cps& cps, double prediction, std::optional<double> sigma,
              double tau) {
  require(cps.q() > 0, Errc::EmptyCalibration, "cps holds no scores");
  require(tau >= 0.0 && tau <= 1.0, Errc::InvalidPercentiles,
          "tau must lie in [0, 1]");
  // calibration scores divide by sigma_i + beta; the query side scales by
  // sigma alone, so a zero-difficulty query degenerates to a point
  double scale = 1.0;
  if (cps.normalized) {
    require(sigma.has_value(), Errc::MissingSigma,
            "normalized cps needs a sigma for the query instance");
    require(*sigma >= 0.0, Errc::InvalidCalibration,
            "sigma must be nonnegative");
    scale = *sigma;
  }
  Cpd cpd;
  cpd.tau = tau;
  cpd.c_values.resize(cps.q());
  for (std::size_t i = 0; i < cps.q(); ++i)
    cpd.c_values[i] = prediction + scale * cps.alphas[i];
  return cpd;
}

double cdf_at(const Cpd& cpd, double y) {
  const auto& c = cpd.c_values;
  require(!c.empty(), Errc::EmptyCalibration, "cpd holds no values");
  const double q = static_cast<double>(c.size());
  auto lo = std::lower_bound(c.begin(), c.end(), y);
  auto hi = std::upper_bound(c.begin(), c.end(), y);
  if (lo != hi) {
    // exact hit: 1-based indices of the lowest and highest tied positions
    const double i_lo = static_cast<double>(lo - c.begin()) + 1.0;
    const double i_hi = static_cast<double>(hi - c.begin());
    return (i_lo - 1.0 + (i_hi - i_lo + 2.0) * cpd.tau) / (q + 1.0);
  }
  const double i = static_cast<double>(lo - c.begin());  // #values below y
  return (i + cpd.tau) / (q + 1.0);
}

PredictionSummary interval(const Cpd& cpd, double low_percentile,
                           double high_percentile) {
  const auto& c = cpd.c_values;
  require(!c.empty(), Errc::EmptyCalibration, "cpd holds no values");
  require(!std::isnan(low_percentile) && !std::isnan(high_percentile),
          Errc::InvalidPercentiles, "percentiles must not be NaN");
  const bool low_open = std::isinf(low_percentile) && low_percentile < 0.0;
  const bool high_open = std::isinf(high_percentile) && high_percentile > 0.0;
  if (!low_open)
    require(low_percentile > 0.0 && low_percentile < 100.0,
            Errc::InvalidPercentiles, "low percentile must lie in (0, 100)");
  if (!high_open)
    require(high_percentile > 0.0 && high_percentile < 100.0,
            Errc::InvalidPercentiles, "high percentile must lie in (0, 100)");
  if (!low_open && !high_open)
    require(low_percentile < high_percentile, Errc::InvalidPercentiles,
            "low percentile must be below high percentile");

  const long q = static_cast<long>(c.size());
  PredictionSummary out;
  out.low_percentile = low_percentile;
  out.high_percentile = high_percentile;

  if (low_open) {
    out.low = -kInf;
  } else {
    long idx = floor_index(low_percentile / 100.0 * (q + 1));
    if (idx < 1) {
      out.low = -kInf;
      out.low_degenerate = true;
    } else {
      out.low = c[static_cast<std::size_t>(idx - 1)];
    }
  }
  if (high_open) {
    out.high = kInf;
  } else {
    long idx = ceil_index(high_percentile / 100.0 * (q + 1));
    if (idx > q) {
      out.high = kInf;
      out.high_degenerate = true;
    } else {
      out.high = c[static_cast<std::size_t>(idx - 1)];
    }
  }

  const double mid = 0.5 * static_cast<double>(q + 1);
  long m_lo = floor_index(mid);
  long m_hi = ceil_index(mid);
  m_lo = std::clamp(m_lo, 1L, q);
  m_hi = std::clamp(m_hi, 1L, q);
  out.median = 0.5 * (c[static_cast<std::size_t>(m_lo - 1)] +
                      c[static_cast<std::size_t>(m_hi - 1)]);
  return out;
}

double threshold_probability(const Cpd& cpd, double threshold) {
  require(std::isfinite(threshold), Errc::NonFiniteThreshold,
          "threshold must be finite");
  return cdf_at(cpd, threshold);
}

}  // namespace calx
