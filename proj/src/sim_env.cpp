#include "hyprap/sim_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace hyprap {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Vec2 unit(double heading) { return {std::cos(heading), std::sin(heading)}; }

double uniform(Rng &rng, double lo, double hi) {
  if (hi <= lo) {
    return lo;
  }
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec2 sample_accel(Rng &rng, double sigma) {
  if (sigma <= 0.0) {
    return {};
  }
  std::normal_distribution<double> n(0.0, sigma);
  const double ax = n(rng);
  const double ay = n(rng);
  return {ax, ay};
}

Vec2 sample_waypoint(const Bounds &b, Rng &rng) {
  const double inset = std::min(1.0, 0.25 * std::min(b.width(), b.height()));
  return {uniform(rng, b.x_min + inset, b.x_max - inset),
          uniform(rng, b.y_min + inset, b.y_max - inset)};
}

// Reflects position and all direction-carrying motion state at the workspace walls.
bool reflect(Vec2 &p, MotionState &m, const Bounds &b) {
  bool hit = false;
  auto flip_x = [&] {
    m.velocity.x = -m.velocity.x;
    m.lateral.x = -m.lateral.x;
    m.heading = wrap_angle(std::numbers::pi - m.heading);
    hit = true;
  };
  auto flip_y = [&] {
    m.velocity.y = -m.velocity.y;
    m.lateral.y = -m.lateral.y;
    m.heading = wrap_angle(-m.heading);
    hit = true;
  };
  if (p.x < b.x_min) {
    p.x = 2.0 * b.x_min - p.x;
    flip_x();
  } else if (p.x > b.x_max) {
    p.x = 2.0 * b.x_max - p.x;
    flip_x();
  }
  if (p.y < b.y_min) {
    p.y = 2.0 * b.y_min - p.y;
    flip_y();
  } else if (p.y > b.y_max) {
    p.y = 2.0 * b.y_max - p.y;
    flip_y();
  }
  // A step longer than the workspace would need repeated folding; clamp as a last resort.
  p.x = std::clamp(p.x, b.x_min, b.x_max);
  p.y = std::clamp(p.y, b.y_min, b.y_max);
  return hit;
}

} // namespace

const char *to_string(MotionPattern p) {
  switch (p) {
  case MotionPattern::constant_velocity:
    return "constant_velocity";
  case MotionPattern::weave:
    return "weave";
  case MotionPattern::waypoint:
    return "waypoint";
  case MotionPattern::stop_and_go:
    return "stop_and_go";
  }
  return "unknown";
}

ControlInput ControlLimits::project(ControlInput u) const {
  u.linear_velocity = std::clamp(u.linear_velocity, 0.0, v_max);
  u.angular_velocity = std::clamp(u.angular_velocity, -omega_max, omega_max);
  return u;
}

void WorldConfig::validate() const {
  auto fail = [](const std::string &what) { throw std::invalid_argument("world config: " + what); };
  if (!(dt > 0.0)) {
    fail("dt must be positive");
  }
  if (!(sensing_radius > agent_radius)) {
    fail("sensing_radius must exceed agent_radius");
  }
  if (!(workspace.x_max > workspace.x_min && workspace.y_max > workspace.y_min)) {
    fail("workspace must be a non-empty rectangle");
  }
  if (!workspace.contains(goal)) {
    fail("goal must lie inside the workspace");
  }
  if (!(goal_radius > 0.0) || !(agent_radius > 0.0) || !(obstacles.radius > 0.0)) {
    fail("radii must be positive");
  }
  if (max_steps <= 0) {
    fail("max_steps must be positive");
  }
  if (!(limits.v_max > 0.0) || !(limits.omega_max > 0.0)) {
    fail("control limits must be positive");
  }
  if (obstacles.speed_min < 0.0 || obstacles.speed_max < obstacles.speed_min) {
    fail("obstacle speed range is invalid");
  }
  double total = 0.0;
  for (double w : obstacles.pattern_weights) {
    if (w < 0.0) {
      fail("pattern weights must be non-negative");
    }
    total += w;
  }
  if (!(total > 0.0)) {
    fail("at least one pattern weight must be positive");
  }
}

AgentState integrate_unicycle(const AgentState &s, const ControlInput &u, double dt) {
  return {s.x + u.linear_velocity * std::cos(s.heading) * dt,
          s.y + u.linear_velocity * std::sin(s.heading) * dt,
          s.heading + u.angular_velocity * dt};
}

AgentState step_agent(const AgentState &state, const ControlInput &u, double dt,
                      const ControlLimits &limits) {
  if (!limits.admits(u)) {
    std::ostringstream msg;
    msg << "control (" << u.linear_velocity << ", " << u.angular_velocity
        << ") outside bounds v in [0, " << limits.v_max << "], |omega| <= " << limits.omega_max;
    throw BoundViolation(msg.str());
  }
  AgentState next = integrate_unicycle(state, u, dt);
  next.heading = wrap_angle(next.heading);
  return next;
}

ObstacleTrack sample_obstacle(int id, Vec2 position, int start_step, const WorldConfig &world,
                              Rng &rng) {
  const ObstacleModel &om = world.obstacles;
  ObstacleTrack track;
  track.id = id;
  track.start_step = start_step;
  track.radius = om.radius;
  track.history.push_back(position);
  track.reflected.push_back(0);

  std::discrete_distribution<int> pick(om.pattern_weights.begin(), om.pattern_weights.end());
  track.pattern = static_cast<MotionPattern>(pick(rng));

  MotionState &m = track.motion;
  m.speed = uniform(rng, om.speed_min, om.speed_max);
  m.heading = uniform(rng, -std::numbers::pi, std::numbers::pi);
  m.velocity = unit(m.heading) * m.speed;
  switch (track.pattern) {
  case MotionPattern::constant_velocity:
    break;
  case MotionPattern::weave: {
    m.lateral = {-std::sin(m.heading), std::cos(m.heading)};
    m.period = uniform(rng, om.weave_period_min, om.weave_period_max);
    const double cap =
        std::min(om.weave_amplitude_max, om.weave_lateral_speed_max * m.period / kTwoPi);
    m.amplitude = uniform(rng, 0.2 * cap, cap);
    m.phase = uniform(rng, 0.0, kTwoPi);
    break;
  }
  case MotionPattern::waypoint:
    m.waypoint = sample_waypoint(world.workspace, rng);
    break;
  case MotionPattern::stop_and_go:
    m.moving = std::bernoulli_distribution(0.5)(rng);
    m.interval_remaining = uniform(rng, om.stop_go_interval_min, om.stop_go_interval_max);
    break;
  }
  return track;
}

void step_obstacles(std::span<ObstacleTrack> tracks, const WorldConfig &world, Rng &rng) {
  const ObstacleModel &om = world.obstacles;
  const double dt = world.dt;
  for (ObstacleTrack &track : tracks) {
    MotionState &m = track.motion;
    Vec2 p = track.current();
    const Vec2 accel = sample_accel(rng, om.accel_noise);
    switch (track.pattern) {
    case MotionPattern::constant_velocity:
      m.velocity += accel * dt;
      p += m.velocity * dt;
      break;
    case MotionPattern::weave: {
      const double w = kTwoPi / m.period;
      const double lateral_step =
          m.amplitude * (std::sin(w * (m.elapsed + dt) + m.phase) - std::sin(w * m.elapsed + m.phase));
      p += m.velocity * dt + m.lateral * lateral_step;
      m.elapsed += dt;
      break;
    }
    case MotionPattern::waypoint: {
      const Vec2 to_wp = m.waypoint - p;
      const double desired = std::atan2(to_wp.y, to_wp.x);
      const double max_turn = om.waypoint_turn_rate * dt;
      m.heading = wrap_angle(m.heading + std::clamp(wrap_angle(desired - m.heading), -max_turn, max_turn));
      m.velocity = unit(m.heading) * m.speed;
      p += m.velocity * dt;
      if (distance(p, m.waypoint) < om.waypoint_arrival_radius) {
        m.waypoint = sample_waypoint(world.workspace, rng);
      }
      break;
    }
    case MotionPattern::stop_and_go:
      if (m.moving) {
        p += m.velocity * dt;
      }
      m.interval_remaining -= dt;
      if (m.interval_remaining <= 1e-9) {
        m.moving = !m.moving;
        m.interval_remaining = uniform(rng, om.stop_go_interval_min, om.stop_go_interval_max);
      }
      break;
    }
    const bool hit = reflect(p, m, world.workspace);
    track.history.push_back(p);
    track.reflected.push_back(hit ? 1 : 0);
  }
}

std::vector<ObstacleSnapshot> snapshot(std::span<const ObstacleTrack> tracks, int step) {
  std::vector<ObstacleSnapshot> out;
  out.reserve(tracks.size());
  for (const ObstacleTrack &t : tracks) {
    if (step >= t.start_step && step <= t.last_step()) {
      out.push_back({t.id, t.at(step), t.radius});
    }
  }
  return out;
}

std::vector<ObstacleSnapshot> sense(const AgentState &agent,
                                    std::span<const ObstacleSnapshot> obstacles,
                                    double sensing_radius) {
  std::vector<ObstacleSnapshot> out;
  const Vec2 pa = agent.position();
  for (const ObstacleSnapshot &o : obstacles) {
    if (distance(o.position, pa) <= sensing_radius) {
      out.push_back(o);
    }
  }
  return out;
}

bool check_collision(const AgentState &agent, double agent_radius,
                     std::span<const ObstacleSnapshot> obstacles) {
  const Vec2 pa = agent.position();
  return std::any_of(obstacles.begin(), obstacles.end(), [&](const ObstacleSnapshot &o) {
    return distance(o.position, pa) < agent_radius + o.radius;
  });
}

bool at_goal(const AgentState &agent, const WorldConfig &world) {
  return distance(agent.position(), world.goal) <= world.goal_radius;
}

} // namespace hyprap
