#include "hyprap/conformal.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>

using namespace hyprap;

namespace {

CalibrationPair pair_with_offsets(const std::vector<double> &offsets) {
  CalibrationPair p;
  for (double d : offsets) {
    p.predicted.push_back({0, 0});
    p.truth.push_back({d, 0});
  }
  return p;
}

// Exact P(all M1 covered and at least ceil(alpha M2) of M2 covered) by enumerating outcomes.
double enumerate_partial(int m1, int m2, double alpha, double db) {
  const int n = m1 + m2;
  const int need = static_cast<int>(std::ceil(alpha * m2));
  double total = 0.0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    double p = 1.0;
    int covered2 = 0;
    bool ok = true;
    for (int i = 0; i < n; ++i) {
      const bool covered = (mask >> i) & 1u;
      p *= covered ? 1.0 - db : db;
      if (i < m1) {
        ok = ok && covered;
      } else {
        covered2 += covered;
      }
    }
    if (ok && covered2 >= need) {
      total += p;
    }
  }
  return total;
}

} // namespace

TEST_SUITE("conformal") {

TEST_CASE("nonconformity score examples") {
  CHECK(nonconformity_score({1, 2}, {1, 2}) == 0.0);
  CHECK(nonconformity_score({0, 0}, {3, 4}) == doctest::Approx(5.0));
  CHECK(nonconformity_score({3, 4}, {0, 0}) == nonconformity_score({0, 0}, {3, 4}));
}

TEST_CASE("calibrate_radius examples") {
  std::vector<double> s;
  for (int i = 1; i <= 19; ++i) {
    s.push_back(0.01 * i);
  }
  CHECK(conformal_rank(19, 0.05) == 19);
  CHECK(calibrate_radius(s, 0.05) == doctest::Approx(0.19));

  const std::vector<double> same(500, 0.42);
  for (double db : {0.01, 0.05, 0.2}) {
    CHECK(calibrate_radius(same, db) == 0.42);
  }

  const std::vector<double> nine(9, 1.0);
  try {
    calibrate_radius(nine, 0.05);
    FAIL("expected CalibrationInfeasible");
  } catch (const CalibrationInfeasible &e) {
    CHECK(e.required_n() == 19);
  }
}

TEST_CASE("required calibration size for the table's smallest quantile") {
  const double smallest = 0.05 / (8 * 30);
  CHECK(0.05 / 30 == doctest::Approx(1.667e-3).epsilon(1e-3));
  CHECK(smallest == doctest::Approx(2.083e-4).epsilon(1e-3));
  CHECK(required_calibration_size(smallest) == 4799);
  CHECK(required_calibration_size(0.05 / (16 * 30)) == 9599);
}

TEST_CASE("property: adding a score at or above epsilon never lowers it") {
  Rng rng(8);
  std::exponential_distribution<double> e(3.0);
  std::vector<double> s;
  for (int i = 0; i < 400; ++i) {
    s.push_back(e(rng));
  }
  for (int i = 0; i < 300; ++i) {
    const double eps = calibrate_radius(s, 0.02);
    s.push_back(eps + e(rng));
    CHECK(calibrate_radius(s, 0.02) >= eps);
  }
}

TEST_CASE("epsilon table construction and lookup") {
  Rng rng(2);
  std::exponential_distribution<double> e(2.0);
  CalibrationSet cs;
  cs.horizon = 30;
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> a, b;
    for (int h = 1; h <= 30; ++h) {
      a.push_back(0.01 * h * e(rng));
      b.push_back(0.03 * h * e(rng));
    }
    cs.accurate.push_back(pair_with_offsets(a));
    cs.fast.push_back(pair_with_offsets(b));
  }
  const auto t = build_epsilon_table(cs, 0.05, 30, 16);
  for (PredictorLevel l : {PredictorLevel::accurate, PredictorLevel::fast}) {
    const auto scores = horizon_scores(cs.pairs(l), 30);
    for (int h = 1; h <= 30; ++h) {
      for (int m = 1; m <= 16; ++m) {
        const double cell = t.at(l, m, h);
        CHECK(cell >= 0.0);
        CHECK(cell == calibrate_radius(scores[static_cast<std::size_t>(h - 1)], 0.05 / (m * 30.0)));
        if (m > 1) {
          CHECK(cell >= t.at(l, m - 1, h));
        }
      }
    }
  }
  CHECK(t.mean_radius(PredictorLevel::accurate, 8) < t.mean_radius(PredictorLevel::fast, 8));

  CHECK(lookup_epsilon(t, PredictorLevel::fast, 3, 7).value == t.at(PredictorLevel::fast, 3, 7));
  CHECK_FALSE(lookup_epsilon(t, PredictorLevel::fast, 3, 7).clamped);
  const auto clamped = lookup_epsilon(t, PredictorLevel::accurate, 40, 2);
  CHECK(clamped.clamped);
  CHECK(clamped.value == t.at(PredictorLevel::accurate, 16, 2));
  CHECK_THROWS(lookup_epsilon(t, PredictorLevel::simple, 1, 1));
  CHECK_THROWS(lookup_epsilon(t, PredictorLevel::fast, 1, 0));
  CHECK_THROWS(lookup_epsilon(t, PredictorLevel::fast, 1, 31));

  const auto worst = build_epsilon_table(cs, 0.05, 30, 16, BudgetMode::worst_case);
  CHECK(worst.at(PredictorLevel::fast, 1, 10) == t.at(PredictorLevel::fast, 16, 10));
}

TEST_CASE("single-cell table equals calibrate_radius at delta") {
  CalibrationSet cs;
  cs.horizon = 1;
  for (int i = 0; i < 100; ++i) {
    cs.accurate.push_back(pair_with_offsets({0.01 * i}));
    cs.fast.push_back(pair_with_offsets({0.02 * i}));
  }
  const auto t = build_epsilon_table(cs, 0.05, 1, 1);
  const auto s = horizon_scores(cs.accurate, 1);
  CHECK(t.at(PredictorLevel::accurate, 1, 1) == calibrate_radius(s[0], 0.05));
}

TEST_CASE("bound calculator examples") {
  CHECK(bonferroni_bound(5, 0.01).value == doctest::Approx(0.95));
  CHECK(bonferroni_bound(1, 0.03).value == doctest::Approx(0.97));
  const auto trivial = bonferroni_bound(200, 0.01);
  CHECK(trivial.value == doctest::Approx(-1.0));
  CHECK(trivial.trivial);

  CHECK(independent_bound(5, 0.01).value == doctest::Approx(0.9509900499).epsilon(1e-12));
  CHECK(independent_bound(0, 0.2).value == 1.0);

  CHECK(partial_coverage_bound(2, 3, 2.0 / 3.0, 0.1).value == doctest::Approx(0.78732).epsilon(1e-12));
  CHECK(partial_coverage_bound(4, 3, 0.0, 0.1).value == doctest::Approx(std::pow(0.9, 4)).epsilon(1e-13));
}

TEST_CASE("property: bound ordering over a grid") {
  for (int m1 = 0; m1 <= 6; ++m1) {
    for (int m2 = 0; m2 <= 6; ++m2) {
      for (double db : {0.001, 0.01, 0.05, 0.1, 0.3}) {
        const int m = m1 + m2;
        CHECK(independent_bound(m, db).value >= bonferroni_bound(m, db).value - 1e-15);
        CHECK(partial_coverage_bound(m1, m2, 1.0, db).value ==
              doctest::Approx(independent_bound(m, db).value).epsilon(1e-13));
        double prev = 2.0;
        for (int k = 0; k <= 20; ++k) {
          const double v = partial_coverage_bound(m1, m2, k / 20.0, db).value;
          CHECK(v <= prev + 1e-15);
          prev = v;
        }
      }
    }
  }
}

TEST_CASE("partial coverage matches enumeration") {
  for (int m1 = 0; m1 <= 5; ++m1) {
    for (int m2 = 0; m1 + m2 <= 8; ++m2) {
      for (double alpha : {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0}) {
        const double exact = enumerate_partial(m1, m2, alpha, 0.05);
        CHECK(std::abs(partial_coverage_bound(m1, m2, alpha, 0.05).value - exact) <= 1e-12);
      }
    }
  }
}

TEST_CASE("empirical coverage on synthetic data") {
  EpsilonTable t(5, 3, 0.05, 1000, 1);
  for (PredictorLevel l : {PredictorLevel::accurate, PredictorLevel::fast}) {
    for (int m = 1; m <= 5; ++m) {
      for (int h = 1; h <= 3; ++h) {
        t.at(l, m, h) = 0.1;
      }
    }
  }
  std::vector<CalibrationPair> exact(50, pair_with_offsets({0, 0, 0}));
  const auto r = empirical_coverage(exact, t, PredictorLevel::fast, 1, false);
  CHECK(r.min_per_h == 1.0);
  CHECK(r.horizon_joint == 1.0);
  const auto joint = empirical_coverage(exact, t, PredictorLevel::fast, 5, true);
  CHECK(joint.samples == 10);
  CHECK(joint.horizon_joint == 1.0);
  CHECK_THROWS(empirical_coverage({}, t, PredictorLevel::fast, 1, false));

  std::vector<CalibrationPair> half;
  for (int i = 0; i < 100; ++i) {
    half.push_back(pair_with_offsets({i % 2 ? 0.05 : 0.2, 0.0, 0.0}));
  }
  const auto h = empirical_coverage(half, t, PredictorLevel::accurate, 1, false);
  CHECK(h.per_h[0] == doctest::Approx(0.5));
  CHECK(h.per_h[1] == 1.0);
}

TEST_CASE("failure budget") {
  FailureBudget b{0.05, 30, 4};
  CHECK(b.delta_bar() == doctest::Approx(0.05 / 120));
  b.obstacle_count = 0;
  CHECK_THROWS(b.validate());
}

} // TEST_SUITE
