#ifndef CALX_TEST_SUPPORT_HPP
#define CALX_TEST_SUPPORT_HPP

// Shared fixtures and brute-force reference implementations. The oracles
// here are deliberately written from the defining formulas (counting,
// enumeration) rather than mirroring the library's algorithms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "calx/dataset.hpp"

namespace calx::testing {

// ---------------------------------------------------------------------------
// CPD oracle: direct case analysis of the step function. i counts values
// strictly below y; ties use the lowest/highest 1-based tied positions.

inline double oracle_cdf(const std::vector<double>& c_values, double tau,
                         double y) {
  const double q = static_cast<double>(c_values.size());
  std::size_t below = 0;
  std::size_t tied = 0;
  for (double c : c_values) {
    if (c < y) ++below;
    if (c == y) ++tied;
  }
  if (tied == 0) {
    const double i = static_cast<double>(below);
    return (i + tau) / (q + 1.0);
  }
  const double i_lo = static_cast<double>(below + 1);
  const double i_hi = static_cast<double>(below + tied);
  return (i_lo - 1.0 + (i_hi - i_lo + 2.0) * tau) / (q + 1.0);
}

// ---------------------------------------------------------------------------
// Isotonic oracle: enumerate every partition of the pooled points into
// consecutive blocks; keep the block-mean-monotone ones; pick minimal
// weighted SSE. Exact for small n (2^(n-1) partitions).

struct PooledPoint {
  double score = 0.0;
  double label = 0.0;
  double weight = 1.0;
};

inline std::vector<PooledPoint> pool_ties(
    std::vector<std::pair<double, double>> points) {
  std::sort(points.begin(), points.end());
  std::vector<PooledPoint> pooled;
  for (const auto& [score, label] : points) {
    if (!pooled.empty() && pooled.back().score == score) {
      pooled.back().label += label;
      pooled.back().weight += 1.0;
    } else {
      pooled.push_back({score, label, 1.0});
    }
  }
  for (PooledPoint& p : pooled) p.label /= p.weight;
  return pooled;
}

inline std::vector<double> oracle_isotonic(
    const std::vector<std::pair<double, double>>& points) {
  const std::vector<PooledPoint> pooled = pool_ties(points);
  const std::size_t n = pooled.size();
  std::vector<double> best_fit;
  double best_sse = std::numeric_limits<double>::infinity();
  // bit b set => block boundary between position b and b+1
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::vector<double> fit(n);
    double prev_mean = -std::numeric_limits<double>::infinity();
    bool monotone = true;
    double sse = 0.0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool boundary = i + 1 == n || (mask & (1u << i));
      if (!boundary) continue;
      double sum = 0.0;
      double weight = 0.0;
      for (std::size_t j = start; j <= i; ++j) {
        sum += pooled[j].label * pooled[j].weight;
        weight += pooled[j].weight;
      }
      const double mean = sum / weight;
      if (mean < prev_mean) {
        monotone = false;
        break;
      }
      for (std::size_t j = start; j <= i; ++j) {
        fit[j] = mean;
        const double dev = pooled[j].label - mean;
        sse += pooled[j].weight * dev * dev;
      }
      prev_mean = mean;
      start = i + 1;
    }
    if (monotone && sse < best_sse) {
      best_sse = sse;
      best_fit = std::move(fit);
    }
  }
  return best_fit;
}

// ---------------------------------------------------------------------------
// Spearman rank correlation (average ranks for ties).

inline std::vector<double> average_ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) /
                            2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

inline double rank_correlation(const std::vector<double>& a,
                               const std::vector<double>& b) {
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const std::size_t n = a.size();
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_a += ra[i];
    mean_b += rb[i];
  }
  mean_a /= static_cast<double>(n);
  mean_b /= static_cast<double>(n);
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = ra[i] - mean_a;
    const double db = rb[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a == 0.0 || var_b == 0.0) return 0.0;
  return cov / std::sqrt(var_a * var_b);
}

// ---------------------------------------------------------------------------
// Schema and table builders.

inline FeatureSchema numeric_schema(std::size_t d) {
  FeatureSchema schema;
  for (std::size_t f = 0; f < d; ++f) {
    schema.names.push_back("x" + std::to_string(f));
    schema.kinds.push_back(FeatureKind::Numerical);
    schema.categorical_values.emplace_back();
  }
  return schema;
}

inline DataTable make_table(const FeatureSchema& schema,
                            std::vector<double> values,
                            std::vector<double> targets) {
  return DataTable(schema, std::move(values), std::move(targets));
}

/// y = 10 x0 + 5 x1 + e, e ~ N(0, (0.2 + 2 x2)^2): x2 controls the noise
/// level, x3 is pure noise the target ignores.
struct SyntheticData {
  DataTable table;
  std::vector<double> noise_level;  ///< per-row sigma of the noise term
};

inline SyntheticData heteroscedastic_data(std::size_t n, std::uint64_t seed,
                                          std::size_t d = 4) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SyntheticData out;
  std::vector<double> values;
  std::vector<double> targets;
  values.reserve(n * d);
  targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(d);
    for (std::size_t f = 0; f < d; ++f) row[f] = unif(rng);
    const double sigma = 0.2 + 2.0 * row[2 % d];
    const double y = 10.0 * row[0] + 5.0 * row[1 % d] + sigma * gauss(rng);
    values.insert(values.end(), row.begin(), row.end());
    targets.push_back(y);
    out.noise_level.push_back(sigma);
  }
  out.table = make_table(numeric_schema(d), std::move(values),
                         std::move(targets));
  return out;
}

}  // namespace calx::testing

#endif
