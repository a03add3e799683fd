#pragma once

#include "hyprap/geometry.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hyprap {

using Rng = std::mt19937_64;

/// Pose of the differential-drive agent. Heading lives in (-pi, pi].
struct AgentState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const AgentState &, const AgentState &) = default;
};

struct ControlInput {
  double linear_velocity = 0.0;
  double angular_velocity = 0.0;
  friend bool operator==(const ControlInput &, const ControlInput &) = default;
};

/// The admissible control box: v in [0, v_max], omega in [-omega_max, omega_max].
struct ControlLimits {
  double v_max = 1.5;
  double omega_max = 1.5;

  bool admits(const ControlInput &u) const {
    return u.linear_velocity >= 0.0 && u.linear_velocity <= v_max &&
           std::abs(u.angular_velocity) <= omega_max;
  }
  ControlInput project(ControlInput u) const;
};

class BoundViolation : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

enum class MotionPattern : std::uint8_t {
  constant_velocity = 0,
  weave = 1,
  waypoint = 2,
  stop_and_go = 3,
};

const char *to_string(MotionPattern p);

/// Ground-truth obstacle dynamics parameters. Hidden from the planner.
struct ObstacleModel {
  double radius = 0.3;
  double speed_min = 0.1;
  double speed_max = 0.4;
  double accel_noise = 0.05;              // sigma_a, m/s^2
  double weave_amplitude_max = 1.0;       // m
  double weave_period_min = 2.0;          // s
  double weave_period_max = 8.0;          // s
  double weave_lateral_speed_max = 10.0;  // m/s, cap on the peak lateral speed 2 pi A / P
  double waypoint_turn_rate = 0.5;        // rad/s
  double waypoint_arrival_radius = 0.3;   // m
  double stop_go_interval_min = 1.0;      // s
  double stop_go_interval_max = 3.0;      // s
  std::array<double, 4> pattern_weights{1.0, 1.0, 1.0, 1.0};
};

/// Internal state of one obstacle's motion pattern.
struct MotionState {
  Vec2 velocity;      // constant_velocity, stop_and_go, weave base velocity
  Vec2 lateral;       // weave: unit lateral direction
  double amplitude = 0.0;
  double period = 1.0;
  double phase = 0.0;
  double elapsed = 0.0;
  Vec2 waypoint;
  double speed = 0.0;
  double heading = 0.0;
  bool moving = true;
  double interval_remaining = 0.0;
};

/// One obstacle: id plus its contiguous position history starting at `start_step`.
struct ObstacleTrack {
  int id = 0;
  int start_step = 0;
  double radius = 0.3;
  MotionPattern pattern = MotionPattern::constant_velocity;
  MotionState motion;
  std::vector<Vec2> history;
  // reflected[i] is set when the step that produced history[i] bounced off a wall.
  std::vector<std::uint8_t> reflected;

  const Vec2 &current() const { return history.back(); }
  int last_step() const { return start_step + static_cast<int>(history.size()) - 1; }
  const Vec2 &at(int step) const { return history.at(static_cast<std::size_t>(step - start_step)); }
};

struct WorldConfig {
  Bounds workspace{};
  Vec2 goal{19.0, 10.0};
  double goal_radius = 0.5;
  double sensing_radius = 6.0;
  double dt = 0.1;
  double agent_radius = 0.3;
  int max_steps = 400;
  std::uint64_t rng_seed = 0;
  ControlLimits limits{};
  ObstacleModel obstacles{};

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

/// Kinematic differential drive; throws BoundViolation when u is outside the control box.
AgentState step_agent(const AgentState &state, const ControlInput &u, double dt,
                      const ControlLimits &limits = {});

/// Same kinematics without the bound check or heading wrap; used inside the optimizer.
AgentState integrate_unicycle(const AgentState &state, const ControlInput &u, double dt);

/// Samples a fresh obstacle (pattern + parameters) at `position`.
ObstacleTrack sample_obstacle(int id, Vec2 position, int start_step, const WorldConfig &world,
                              Rng &rng);

/// Advances every obstacle by one dt, appending to its history.
void step_obstacles(std::span<ObstacleTrack> tracks, const WorldConfig &world, Rng &rng);

struct ObstacleSnapshot {
  int id = 0;
  Vec2 position;
  double radius = 0.3;
};

std::vector<ObstacleSnapshot> snapshot(std::span<const ObstacleTrack> tracks, int step);

/// Obstacles with ||p_k - p_A|| <= sensing_radius, in input order.
std::vector<ObstacleSnapshot> sense(const AgentState &agent,
                                    std::span<const ObstacleSnapshot> obstacles,
                                    double sensing_radius);

/// Strict: touching at exactly r_A + r_k is not a collision.
bool check_collision(const AgentState &agent, double agent_radius,
                     std::span<const ObstacleSnapshot> obstacles);

bool at_goal(const AgentState &agent, const WorldConfig &world);

} // namespace hyprap
