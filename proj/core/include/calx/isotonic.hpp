#ifndef CALX_ISOTONIC_HPP
#define CALX_ISOTONIC_HPP

#include <cstddef>
#include <utility>
#include <vector>

namespace calx {

/// Non-decreasing least-squares fit over unique scores. Evaluation between
/// breakpoints is step-function (left-constant): the fitted value of the
/// largest breakpoint <= score; out-of-range queries clamp to the ends.
struct IsotonicFit {
  std::vector<double> breakpoints;  ///< ascending unique scores
  std::vector<double> fitted;       ///< non-decreasing, one per breakpoint

  double value_at(double score) const;
};

/// Pool-adjacent-violators over (score, label) points. Ties in score are
/// pooled (labels averaged) before fitting. Labels are expected in [0, 1].
IsotonicFit pava(const std::vector<std::pair<double, double>>& points);

struct ProbabilityTriple {
  double p = 0.0;
  double p_low = 0.0;
  double p_high = 0.0;
};

/// Venn-Abers point estimate for a test score against binary-labeled
/// calibration scores: p_low = g0(s) with (s, 0) appended, p_high = g1(s)
/// with (s, 1) appended, p = p_high / (1 - p_low + p_high).
ProbabilityTriple venn_abers(
    const std::vector<std::pair<double, double>>& calibration,
    double test_score);

/// Same computation with the calibration pre-sorted once, for repeated
/// queries. Each evaluate() runs two linear-time PAVA passes.
class VennAbersCalibrator {
 public:
  explicit VennAbersCalibrator(
      const std::vector<std::pair<double, double>>& calibration);

  ProbabilityTriple evaluate(double test_score) const;
  std::size_t n_points() const { return scores_.size(); }

 private:
  // tie-pooled calibration: unique ascending scores with label sums/counts
  std::vector<double> scores_;
  std::vector<double> label_sums_;
  std::vector<double> counts_;
};

}  // namespace calx

#endif
