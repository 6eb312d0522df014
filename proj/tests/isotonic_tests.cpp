#include <cmath>
#include <random>

#include "calx/error.hpp"
#include "calx/isotonic.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace calx;

TEST_CASE("pava is the identity on monotone labels") {
  const IsotonicFit fit = pava({{1.0, 0.0}, {2.0, 1.0}});
  CHECK(fit.breakpoints == std::vector<double>{1.0, 2.0});
  CHECK(fit.fitted == std::vector<double>{0.0, 1.0});
}

TEST_CASE("pava pools the alternating four-point case") {
  const IsotonicFit fit =
      pava({{1.0, 0.0}, {2.0, 1.0}, {3.0, 0.0}, {4.0, 1.0}});
  REQUIRE(fit.fitted.size() == 4);
  CHECK(fit.fitted[0] == 0.0);
  CHECK(fit.fitted[1] == 0.5);
  CHECK(fit.fitted[2] == 0.5);
  CHECK(fit.fitted[3] == 1.0);
}

TEST_CASE("pava on constant labels is constant") {
  const IsotonicFit fit = pava({{1.0, 1.0}, {5.0, 1.0}, {9.0, 1.0}});
  for (double v : fit.fitted) CHECK(v == 1.0);
}

TEST_CASE("pava pools score ties before fitting") {
  const IsotonicFit fit = pava({{1.0, 0.0}, {1.0, 1.0}, {2.0, 1.0}});
  CHECK(fit.breakpoints == std::vector<double>{1.0, 2.0});
  CHECK(fit.fitted == std::vector<double>{0.5, 1.0});
}

TEST_CASE("pava rejects empty input") {
  try {
    pava({});
    FAIL("expected EmptyInput");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyInput);
  }
}

TEST_CASE("pava matches the partition-enumeration oracle") {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> nd(1, 6);
  std::uniform_int_distribution<int> sd(0, 3);  // tie-rich scores
  std::uniform_int_distribution<int> ld(0, 4);  // labels on a 0..1 grid
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<std::pair<double, double>> points;
    const int n = nd(rng);
    for (int i = 0; i < n; ++i)
      points.push_back({static_cast<double>(sd(rng)),
                        static_cast<double>(ld(rng)) / 4.0});
    const IsotonicFit fit = pava(points);
    const std::vector<double> expected = testing::oracle_isotonic(points);
    REQUIRE(fit.fitted.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i)
      CHECK(fit.fitted[i] == doctest::Approx(expected[i]).epsilon(1e-9));
    for (std::size_t i = 1; i < fit.fitted.size(); ++i)
      CHECK(fit.fitted[i] >= fit.fitted[i - 1]);
  }
}

TEST_CASE("step evaluation is left-constant with clamped ends") {
  IsotonicFit fit;
  fit.breakpoints = {1.0, 2.0};
  fit.fitted = {0.0, 1.0};
  CHECK(fit.value_at(0.5) == 0.0);  // below range clamps to first
  CHECK(fit.value_at(1.0) == 0.0);
  CHECK(fit.value_at(1.5) == 0.0);  // largest breakpoint <= 1.5 is 1.0
  CHECK(fit.value_at(2.0) == 1.0);
  CHECK(fit.value_at(9.0) == 1.0);  // above range clamps to last
}

TEST_CASE("venn-abers two-point hand calculation") {
  const ProbabilityTriple t = venn_abers({{0.1, 0.0}, {0.9, 1.0}}, 0.9);
  CHECK(t.p_low == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t.p_high == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t.p == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("venn-abers regularization formula") {
  // p = p_high / (1 - p_low + p_high) for every random calibration
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> nd(1, 40);
  std::uniform_real_distribution<double> sd(0.0, 1.0);
  std::bernoulli_distribution bd(0.5);
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<std::pair<double, double>> cal;
    const int n = nd(rng);
    for (int i = 0; i < n; ++i)
      cal.push_back({sd(rng), bd(rng) ? 1.0 : 0.0});
    const double s = sd(rng);
    const ProbabilityTriple t = venn_abers(cal, s);
    CHECK(t.p ==
          doctest::Approx(t.p_high / (1.0 - t.p_low + t.p_high))
              .epsilon(1e-12));
    CHECK(t.p_low <= t.p_high + 1e-12);
    CHECK(t.p_low <= t.p + 1e-12);
    CHECK(t.p <= t.p_high + 1e-12);
    CHECK(t.p_low >= 0.0);
    CHECK(t.p_high <= 1.0);
  }
}

TEST_CASE("degenerate agreement fixes p at the shared estimate") {
  // all-ones calibration: g0 and g1 agree away from the appended point
  const ProbabilityTriple t =
      venn_abers({{0.2, 1.0}, {0.4, 1.0}, {0.6, 1.0}}, 0.5);
  CHECK(t.p == doctest::Approx(t.p_high / (1.0 - t.p_low + t.p_high))
                   .epsilon(1e-12));
}

TEST_CASE("venn-abers rejects non-binary labels") {
  try {
    venn_abers({{0.1, 0.5}}, 0.2);
    FAIL("expected NonBinaryLabel");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonBinaryLabel);
  }
}

TEST_CASE("calibrator reproduces the free function") {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> sd(0, 5);  // force score ties
  std::bernoulli_distribution bd(0.4);
  std::vector<std::pair<double, double>> cal;
  for (int i = 0; i < 25; ++i)
    cal.push_back({static_cast<double>(sd(rng)), bd(rng) ? 1.0 : 0.0});
  const VennAbersCalibrator calibrator(cal);
  std::uniform_real_distribution<double> qd(-0.5, 5.5);
  for (int rep = 0; rep < 100; ++rep) {
    const double s = qd(rng);
    const ProbabilityTriple a = calibrator.evaluate(s);
    const ProbabilityTriple b = venn_abers(cal, s);
    CHECK(a.p == doctest::Approx(b.p).epsilon(1e-12));
    CHECK(a.p_low == doctest::Approx(b.p_low).epsilon(1e-12));
    CHECK(a.p_high == doctest::Approx(b.p_high).epsilon(1e-12));
  }
}
