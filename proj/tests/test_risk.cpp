#include "hyprap/risk.hpp"

#include "doctest.h"

#include <cmath>

using namespace hyprap;

TEST_SUITE("risk") {

TEST_CASE("PAD examples") {
  const std::vector<Vec2> a{{0, 0}, {1, 0}}, o{{3, 0}, {3, 0}};
  const auto pad = compute_pad(a, o);
  REQUIRE(pad.size() == 2);
  CHECK(pad[0] == doctest::Approx(3.0));
  CHECK(pad[1] == doctest::Approx(2.0));
  CHECK(compute_pad(o, a) == pad);
  for (double d : compute_pad(a, a)) {
    CHECK(d == 0.0);
  }
  CHECK_THROWS(compute_pad(a, std::vector<Vec2>{{0, 0}}));
}

TEST_CASE("PAT examples") {
  CHECK(approach_time({0, 0}, {1, 0}, {10, 0}, {0, 0}) == doctest::Approx(10.0));
  CHECK(approach_time({0, 0}, {1, 0}, {-5, 0}, {0, 0}) == doctest::Approx(-5.0));
  CHECK(approach_time({0, 0}, {1, 0}, {10, 0}, {1, 0}) == kNoApproach);

  // Agent moving +x at 1 m/s toward a parked obstacle 10 m ahead.
  std::vector<Vec2> agent, obstacle;
  for (int h = 0; h <= 3; ++h) {
    agent.push_back({0.1 * h, 0});
    obstacle.push_back({10, 0});
  }
  const auto pat = compute_pat(agent, obstacle, 0.1);
  REQUIRE(pat.size() == 4);
  CHECK(pat[0] == doctest::Approx(10.0));
  CHECK(pat[3] == doctest::Approx(9.7));
  CHECK_THROWS(compute_pat(agent, std::vector<Vec2>{{0, 0}}, 0.1));
}

TEST_CASE("P-CRI examples") {
  RouterConfig c;
  ApproachProfile peak{{5.0, 0.0}, {kNoApproach, 0.0}};
  CHECK(compute_pcri(peak, c) == doctest::Approx(1.0));

  ApproachProfile far{{1e9, 1e9}, {kNoApproach, -1e9}};
  CHECK(compute_pcri(far, c) == doctest::Approx(0.0));

  RouterConfig dist_only = c;
  dist_only.w_distance = 1.0;
  dist_only.w_time = 0.0;
  ApproachProfile at_d0{{5.0, dist_only.d0, 3.0}, {1.0, 1.0, 1.0}};
  CHECK(compute_pcri(at_d0, dist_only) == doctest::Approx(std::exp(-1.0)));
  CHECK(std::exp(-1.0) == doctest::Approx(0.3679).epsilon(1e-4));
}

TEST_CASE("property: psi in [0,1] and monotone in PAD and |PAT|") {
  RouterConfig c;
  Rng rng(21);
  std::uniform_real_distribution<double> d(0.0, 20.0), t(-15.0, 15.0), shrink(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    ApproachProfile p;
    for (int h = 0; h <= 30; ++h) {
      p.pad.push_back(d(rng));
      p.pat.push_back(h % 7 == 3 ? kNoApproach : t(rng));
    }
    const double psi = compute_pcri(p, c);
    CHECK(psi >= 0.0);
    CHECK(psi <= 1.0);

    ApproachProfile closer = p;
    const double f = shrink(rng);
    for (double &v : closer.pad) {
      v *= f;
    }
    CHECK(compute_pcri(closer, c) >= psi);

    ApproachProfile sooner = p;
    for (double &v : sooner.pat) {
      if (std::isfinite(v)) {
        v *= f;
      }
    }
    CHECK(compute_pcri(sooner, c) >= psi);
  }
}

TEST_CASE("property: g2 is a double-sided exponential") {
  const double tau0 = 3.0;
  double prev = time_urgency(-30.0, tau0);
  for (double x = -29.9; x < 0.0; x += 0.1) {
    const double v = time_urgency(x, tau0);
    CHECK(v >= prev);
    prev = v;
  }
  for (double x = 0.1; x < 30.0; x += 0.1) {
    const double v = time_urgency(x, tau0);
    CHECK(v <= prev);
    prev = v;
  }
  CHECK(time_urgency(1e-9, tau0) == doctest::Approx(time_urgency(0.0, tau0)));
  CHECK(time_urgency(-1e-9, tau0) == doctest::Approx(time_urgency(0.0, tau0)));
  CHECK(time_urgency(0.0, tau0) == 1.0);
  CHECK(time_urgency(kNoApproach, tau0) == 0.0);
}

TEST_CASE("routing bands") {
  RouterConfig c;
  CHECK(route(0.75, {}, c).level == PredictorLevel::accurate);
  CHECK(route(0.5, {}, c).level == PredictorLevel::fast);
  CHECK(route(0.1, {}, c).level == PredictorLevel::simple);
  CHECK(base_band(0.3, c) == PredictorLevel::fast);
  CHECK(base_band(0.7, c) == PredictorLevel::accurate);

  for (int i = 0; i <= 1000; ++i) {
    const double psi = i / 1000.0;
    const auto b = base_band(psi, c);
    const int matches = (psi < c.theta1) + (psi >= c.theta1 && psi < c.theta2) + (psi >= c.theta2);
    CHECK(matches == 1);
    CHECK(b == (psi < c.theta1 ? PredictorLevel::simple : psi < c.theta2 ? PredictorLevel::fast : PredictorLevel::accurate));
  }
}

TEST_CASE("hysteresis keeps level 1 while psi stays within the margin") {
  RouterConfig c;
  c.theta2 = 0.7;
  c.hysteresis_margin = 0.05;
  c.dwell_steps = 3;
  auto r = route(0.9, {}, c);
  REQUIRE(r.level == PredictorLevel::accurate);
  for (int i = 0; i < 3; ++i) {
    r = route(0.68, r.state, c);
    CHECK(r.level == PredictorLevel::accurate);
  }
  // Below theta2 - eta for D calls: downgrade on the D-th.
  r = route(0.6, r.state, c);
  r = route(0.6, r.state, c);
  CHECK(r.level == PredictorLevel::accurate);
  r = route(0.6, r.state, c);
  CHECK(r.level == PredictorLevel::fast);
  // Upgrades are immediate.
  CHECK(route(0.95, r.state, c).level == PredictorLevel::accurate);
}

TEST_CASE("property: hysteresis reduces chattering around theta2") {
  RouterConfig with;
  RouterConfig without = with;
  without.hysteresis_margin = 0.0;
  without.dwell_steps = 1;
  auto switches = [](const RouterConfig &c) {
    HysteresisState s;
    PredictorLevel last = PredictorLevel::simple;
    int n = 0;
    for (int i = 0; i < 200; ++i) {
      const double psi = c.theta2 + (i % 2 ? 0.02 : -0.02);
      const auto r = route(psi, s, c);
      n += i > 0 && r.level != last;
      last = r.level;
      s = r.state;
    }
    return n;
  };
  CHECK(switches(with) < switches(without));
}

TEST_CASE("proximity risk") {
  RouterConfig c;
  CHECK(proximity_risk(0.0, c) == 1.0);
  CHECK(proximity_risk(c.d0, c) == doctest::Approx(std::exp(-1.0)));
  CHECK(proximity_risk(kNoApproach, c) == 0.0);
}

TEST_CASE("property: proximity band invariant under consistent rescaling") {
  // exp(-d/d0) against theta = exp(-r/d0) selects by d < r, whatever the scale.
  for (double scale : {0.5, 1.0, 3.0}) {
    RouterConfig c;
    c.d0 = 2.0 * scale;
    c.theta1 = std::exp(-3.0 * scale / c.d0);
    c.theta2 = std::exp(-1.5 * scale / c.d0);
    for (double d = 0.05; d < 6.0; d += 0.1) {
      const auto expected = d > 3.0 ? PredictorLevel::simple : d > 1.5 ? PredictorLevel::fast : PredictorLevel::accurate;
      CHECK(base_band(proximity_risk(d * scale, c), c) == expected);
    }
  }
}

TEST_CASE("router config validation") {
  RouterConfig c;
  CHECK_NOTHROW(c.validate());
  c.theta1 = 0.8;
  CHECK_THROWS(c.validate());
  c = RouterConfig{};
  c.w_distance = 0.7;
  CHECK_THROWS(c.validate());
  c = RouterConfig{};
  c.hysteresis_margin = 0.4;
  CHECK_THROWS(c.validate());
}

} // TEST_SUITE
