#include "hyprap/sim_env.hpp"

#include "doctest.h"

#include <algorithm>
#include <numbers>

using namespace hyprap;

namespace {

constexpr double kPi = std::numbers::pi;

ObstacleTrack track_at(Vec2 p, MotionPattern pattern) {
  ObstacleTrack t;
  t.id = 1;
  t.pattern = pattern;
  t.history = {p};
  t.reflected = {0};
  return t;
}

WorldConfig quiet_world() {
  WorldConfig w;
  w.obstacles.accel_noise = 0.0;
  return w;
}

} // namespace

TEST_SUITE("sim_env") {

TEST_CASE("step_agent examples") {
  auto a = step_agent({0, 0, 0}, {1.0, 0.0}, 0.1);
  CHECK(a.x == doctest::Approx(0.1));
  CHECK(a.y == doctest::Approx(0.0));
  CHECK(a.heading == doctest::Approx(0.0));

  a = step_agent({0, 0, 0}, {0.0, 1.0}, 0.1);
  CHECK(a.x == 0.0);
  CHECK(a.y == 0.0);
  CHECK(a.heading == doctest::Approx(0.1));

  a = step_agent({1, 1, kPi / 2}, {2.0, 0.0}, 0.1, {2.0, 1.5});
  CHECK(a.x == doctest::Approx(1.0));
  CHECK(a.y == doctest::Approx(1.2));
  CHECK(a.heading == doctest::Approx(kPi / 2));
}

TEST_CASE("step_agent rejects controls outside the box") {
  CHECK_THROWS_AS(step_agent({}, {-0.1, 0.0}, 0.1), BoundViolation);
  CHECK_THROWS_AS(step_agent({}, {1.6, 0.0}, 0.1), BoundViolation);
  CHECK_THROWS_AS(step_agent({}, {0.5, 1.6}, 0.1), BoundViolation);
}

TEST_CASE("property: heading stays in (-pi, pi]") {
  Rng rng(3);
  std::uniform_real_distribution<double> h(-20.0, 20.0), w(-1.5, 1.5), v(0.0, 1.5);
  for (int i = 0; i < 5000; ++i) {
    const auto a = step_agent({0, 0, h(rng)}, {v(rng), w(rng)}, 0.1);
    CHECK(a.heading > -kPi);
    CHECK(a.heading <= kPi);
  }
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
}

TEST_CASE("property: straight motion moves exactly v dt") {
  Rng rng(4);
  std::uniform_real_distribution<double> h(-kPi, kPi), v(0.0, 1.5);
  for (int i = 0; i < 1000; ++i) {
    const AgentState s{3.0, -2.0, h(rng)};
    const double speed = v(rng);
    const auto a = step_agent(s, {speed, 0.0}, 0.1);
    CHECK(distance(a.position(), s.position()) == doctest::Approx(speed * 0.1).epsilon(1e-14));
  }
}

TEST_CASE("step_obstacles examples") {
  const WorldConfig w = quiet_world();
  Rng rng(1);

  auto cv = track_at({5, 5}, MotionPattern::constant_velocity);
  cv.motion.velocity = {1.0, 0.0};
  step_obstacles(std::span(&cv, 1), w, rng);
  CHECK(cv.current().x == doctest::Approx(5.1));
  CHECK(cv.current().y == doctest::Approx(5.0));

  auto stopped = track_at({5, 5}, MotionPattern::stop_and_go);
  stopped.motion.velocity = {1.0, 0.0};
  stopped.motion.moving = false;
  stopped.motion.interval_remaining = 2.0;
  step_obstacles(std::span(&stopped, 1), w, rng);
  CHECK(stopped.current() == Vec2{5, 5});

  auto weave = track_at({5, 5}, MotionPattern::weave);
  weave.motion.velocity = {0.3, 0.1};
  weave.motion.lateral = {-0.1, 0.3};
  weave.motion.amplitude = 0.0;
  weave.motion.period = 4.0;
  auto straight = track_at({5, 5}, MotionPattern::constant_velocity);
  straight.motion.velocity = {0.3, 0.1};
  for (int i = 0; i < 20; ++i) {
    step_obstacles(std::span(&weave, 1), w, rng);
    step_obstacles(std::span(&straight, 1), w, rng);
  }
  CHECK(weave.current().x == doctest::Approx(straight.current().x));
  CHECK(weave.current().y == doctest::Approx(straight.current().y));
}

TEST_CASE("sense examples") {
  const AgentState a{0, 0, 0};
  const std::vector<ObstacleSnapshot> in{{1, {5.9, 0}, 0.3}, {2, {0, 6.1}, 0.3}};
  const auto s = sense(a, in, 6.0);
  REQUIRE(s.size() == 1);
  CHECK(s[0].id == 1);
  CHECK(sense(a, {}, 6.0).empty());
}

TEST_CASE("property: sensing depends on positions only") {
  Rng rng(9);
  std::uniform_real_distribution<double> u(-8, 8);
  std::vector<ObstacleSnapshot> obs;
  for (int i = 0; i < 40; ++i) {
    obs.push_back({i + 1, {u(rng), u(rng)}, 0.3});
  }
  auto positions = [](std::vector<ObstacleSnapshot> v) {
    std::vector<std::pair<double, double>> p;
    for (const auto &o : v) {
      p.emplace_back(o.position.x, o.position.y);
    }
    std::sort(p.begin(), p.end());
    return p;
  };
  const auto base = positions(sense({}, obs, 6.0));
  auto shuffled = obs;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  for (std::size_t i = 0; i < shuffled.size(); ++i) {
    shuffled[i].id = static_cast<int>(100 - i);
  }
  CHECK(positions(sense({}, shuffled, 6.0)) == base);
}

TEST_CASE("check_collision boundary convention") {
  const AgentState a{0, 0, 0};
  CHECK(check_collision(a, 0.3, std::vector<ObstacleSnapshot>{{1, {0.59, 0}, 0.3}}));
  CHECK_FALSE(check_collision(a, 0.3, std::vector<ObstacleSnapshot>{{1, {0.61, 0}, 0.3}}));
  CHECK_FALSE(check_collision(a, 0.25, std::vector<ObstacleSnapshot>{{1, {0.5, 0}, 0.25}}));
}

TEST_CASE("at_goal examples") {
  WorldConfig w;
  CHECK(at_goal({w.goal.x, w.goal.y, 0}, w));
  CHECK(at_goal({w.goal.x - 0.5, w.goal.y, 0}, w));
  CHECK_FALSE(at_goal({w.goal.x - 1.0, w.goal.y, 0}, w));
}

TEST_CASE("world config validation") {
  WorldConfig w;
  CHECK_NOTHROW(w.validate());
  w.sensing_radius = 0.2;
  CHECK_THROWS(w.validate());
  w = WorldConfig{};
  w.dt = 0.0;
  CHECK_THROWS(w.validate());
  w = WorldConfig{};
  w.goal = {25, 5};
  CHECK_THROWS(w.validate());
}

TEST_CASE("property: seeded obstacle motion is reproducible and stays in the workspace") {
  const WorldConfig w;
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ObstacleTrack> tracks;
    std::uniform_real_distribution<double> u(0.5, 19.5);
    for (int i = 0; i < 30; ++i) {
      tracks.push_back(sample_obstacle(i + 1, {u(rng), u(rng)}, 0, w, rng));
    }
    for (int s = 0; s < 600; ++s) {
      step_obstacles(tracks, w, rng);
    }
    return tracks;
  };
  const auto a = run(77), b = run(77);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].history.size() == b[i].history.size());
    for (std::size_t j = 0; j < a[i].history.size(); ++j) {
      CHECK(a[i].history[j] == b[i].history[j]);
      CHECK(w.workspace.contains(a[i].history[j]));
    }
  }
}

TEST_CASE("every pattern family is sampled") {
  const WorldConfig w;
  Rng rng(5);
  std::array<int, 4> seen{};
  for (int i = 0; i < 400; ++i) {
    ++seen[static_cast<int>(sample_obstacle(i + 1, {10, 10}, 0, w, rng).pattern)];
  }
  for (int c : seen) {
    CHECK(c > 50);
  }
}

} // TEST_SUITE
