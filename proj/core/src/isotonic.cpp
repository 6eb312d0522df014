#include "calx/isotonic.hpp"

#include <algorithm>
#include <cmath>

#include "calx/error.hpp"

namespace calx {

namespace {

/// Weighted PAVA over groups already sorted by score. Returns one fitted
/// value per group. Amortized linear: every merge removes a block.
std::vector<double> pava_pooled(const std::vector<double>& label_sums,
                                const std::vector<double>& counts) {
  struct Block {
    double sum;
    double weight;
    std::size_t span;  // number of groups merged into this block
  };
  std::vector<Block> stack;
  stack.reserve(label_sums.size());
  for (std::size_t g = 0; g < label_sums.size(); ++g) {
    Block block{label_sums[g], counts[g], 1};
    while (!stack.empty() &&
           stack.back().sum * block.weight >= block.sum * stack.back().weight) {
      // previous mean >= current mean: pool (cross-multiplied to avoid
      // dividing in the loop)
      block.sum += stack.back().sum;
      block.weight += stack.back().weight;
      block.span += stack.back().span;
      stack.pop_back();
    }
    stack.push_back(block);
  }
  std::vector<double> fitted;
  fitted.reserve(label_sums.size());
  for (const Block& block : stack) {
    const double value = block.sum / block.weight;
    for (std::size_t i = 0; i < block.span; ++i) fitted.push_back(value);
  }
  return fitted;
}

}  // namespace

double IsotonicFit::value_at(double score) const {
  auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), score);
  if (it == breakpoints.begin()) return fitted.front();
  return fitted[static_cast<std::size_t>(it - breakpoints.begin()) - 1];
}

IsotonicFit pava(const std::vector<std::pair<double, double>>& points) {
  require(!points.empty(), Errc::EmptyInput, "no points to fit");
  std::vector<std::pair<double, double>> sorted = points;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  IsotonicFit fit;
  std::vector<double> sums;
  std::vector<double> counts;
  for (const auto& [score, label] : sorted) {
    if (!fit.breakpoints.empty() && fit.breakpoints.back() == score) {
      sums.back() += label;
      counts.back() += 1.0;
    } else {
      fit.breakpoints.push_back(score);
      sums.push_back(label);
      counts.push_back(1.0);
    }
  }
  fit.fitted = pava_pooled(sums, counts);
  return fit;
}

VennAbersCalibrator::VennAbersCalibrator(
    const std::vector<std::pair<double, double>>& calibration) {
  std::vector<std::pair<double, double>> sorted = calibration;
  for (const auto& [score, label] : sorted) {
    (void)score;
    require(label == 0.0 || label == 1.0, Errc::NonBinaryLabel,
            "calibration labels must be 0 or 1");
  }
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [score, label] : sorted) {
    if (!scores_.empty() && scores_.back() == score) {
      label_sums_.back() += label;
      counts_.back() += 1.0;
    } else {
      scores_.push_back(score);
      label_sums_.push_back(label);
      counts_.push_back(1.0);
    }
  }
}

ProbabilityTriple VennAbersCalibrator::evaluate(double test_score) const {
  // splice the test point into the pooled arrays, once per hypothetical label
  auto it = std::lower_bound(scores_.begin(), scores_.end(), test_score);
  const std::size_t pos = static_cast<std::size_t>(it - scores_.begin());
  const bool merged = it != scores_.end() && *it == test_score;

  std::vector<double> scores = scores_;
  std::vector<double> sums = label_sums_;
  std::vector<double> counts = counts_;
  std::size_t group = pos;
  if (merged) {
    counts[pos] += 1.0;
  } else {
    scores.insert(scores.begin() + pos, test_score);
    sums.insert(sums.begin() + pos, 0.0);
    counts.insert(counts.begin() + pos, 1.0);
  }

  // g0: test labeled 0 (sums already reflect that)
  const double p_low = pava_pooled(sums, counts)[group];
  // g1: test labeled 1
  sums[group] += 1.0;
  const double p_high = pava_pooled(sums, counts)[group];

  ProbabilityTriple out;
  out.p_low = p_low;
  out.p_high = p_high;
  out.p = p_high / (1.0 - p_low + p_high);
  return out;
}

ProbabilityTriple venn_abers(
    const std::vector<std::pair<double, double>>& calibration,
    double test_score) {
  return VennAbersCalibrator(calibration).evaluate(test_score);
}

}  // namespace calx
