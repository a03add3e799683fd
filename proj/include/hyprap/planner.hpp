#pragma once

#include "hyprap/geometry.hpp"
#include "hyprap/sim_env.hpp"

#include <optional>
#include <span>
#include <vector>

namespace hyprap {

struct PlanConfig {
  int planning_horizon = 30;   // T
  int prediction_horizon = 30; // H, must not exceed T
  double q_position = 1.0;
  double r_control = 0.1;
  double q_terminal = 10.0;
  double lipschitz = 1.0; // L of c(x, y) = ||p_A - y|| - (r_A + r_k)
  std::vector<double> penalty_schedule{10.0, 100.0, 1e3, 1e4, 1e5};
  int max_inner_iterations = 40;
  double armijo_c = 1e-4;
  int max_backtracks = 40;
  int memory = 8; // curvature pairs kept for the quasi-Newton direction; 0 gives plain gradient steps
  int recovery_stages = 2; // stiffest penalties rerun from standstill after a failed solve; 0 disables
  double time_cap_ms = 50.0; // per solve, thread CPU time; <= 0 disables
  double tolerance = 1e-3;   // m, accepted constraint violation
  // The penalty acts on c - buffer so that the residual violation of a finite quadratic penalty
  // lands inside the true constraint.
  double penalty_buffer = 0.01;
  double gradient_tolerance = 1e-3; // infinity norm of the projected gradient step
  double brake_decel = 3.0;         // m/s^2 used by the braking fallback
  double dt = 0.1;
  ControlLimits limits{};

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

/// Predicted points and margins of one obstacle for h = 1..H.
struct ObstacleConstraint {
  int obstacle_id = 0;
  std::vector<Vec2> points;
  std::vector<double> margins; // r_A + r_k + L * eps[h]
};

using ConstraintSet = std::vector<ObstacleConstraint>;

/// Builds the margin sequence r_A + r_k + L * eps[h].
std::vector<double> conformal_margins(double agent_radius, double obstacle_radius, double lipschitz,
                                      std::span<const double> radii);

enum class PlanStatus { optimal, feasible, infeasible_fallback };
const char *to_string(PlanStatus s);

struct SolveDiagnostics {
  int outer_iterations = 0;
  int inner_iterations = 0;
  int merit_evaluations = 0;
  double final_penalty = 0.0;
  bool converged = false;
  bool hit_time_cap = false;
  // merit_history[outer][i]: merit after each accepted inner step (first entry is the start).
  std::vector<std::vector<double>> merit_history;
};

struct PlanResult {
  std::vector<ControlInput> controls; // T
  std::vector<AgentState> states;     // T + 1
  PlanStatus status = PlanStatus::optimal;
  double max_violation = 0.0; // m
  double cost = 0.0;          // J at the returned controls
  double solve_time = 0.0;    // s
  SolveDiagnostics diagnostics;
};

/// Forward simulation under step_agent.
std::vector<AgentState> rollout_dynamics(const AgentState &x0, std::span<const ControlInput> controls,
                                         double dt, const ControlLimits &limits = {});

/// Signed slack ||p_A - y|| - margin; the constraint holds iff it is >= 0.
double collision_margin(const AgentState &state, const Vec2 &obstacle_point, double margin);

/// Largest max(0, -slack) over every obstacle and h = 1..min(H, T).
double max_constraint_violation(std::span<const AgentState> states, const ConstraintSet &constraints,
                                int prediction_horizon);

/// The single-shooting objective: J(u) + rho * sum max(0, buffer - slack)^2.
class ShootingProblem {
public:
  ShootingProblem(const AgentState &x0, const Vec2 &goal, const ConstraintSet &constraints,
                  const PlanConfig &config);

  int dimension() const { return 2 * config_.planning_horizon; }

  double cost(std::span<const double> u) const;
  double merit(std::span<const double> u, double rho) const;
  /// Merit plus its gradient by the adjoint (costate) recursion.
  double merit_and_gradient(std::span<const double> u, double rho, std::vector<double> &grad) const;

  void project(std::span<double> u) const;

private:
  void rollout(std::span<const double> u, std::vector<AgentState> &states) const;
  double evaluate(std::span<const double> u, double rho, bool penalty, std::vector<double> *grad) const;

  AgentState x0_;
  Vec2 goal_;
  const ConstraintSet &constraints_;
  PlanConfig config_;
  int constrained_steps_;
};

std::vector<double> flatten(std::span<const ControlInput> controls);
std::vector<ControlInput> unflatten(std::span<const double> u);

/// Previous solution advanced one step with its last input repeated.
std::vector<ControlInput> shift_warm_start(std::span<const ControlInput> previous, int horizon);

PlanResult solve_mpc(const AgentState &x0, const Vec2 &goal, const ConstraintSet &constraints,
                     const PlanResult *warm_start, const PlanConfig &config,
                     bool record_merit_history = false);

/// Linear velocity ramps to zero at brake_decel with no rotation.
PlanResult fallback_brake(const AgentState &x0, double current_velocity, const PlanConfig &config,
                          const ConstraintSet *constraints = nullptr);

/// One feasible-status planning step: the plan and where the constrained obstacles really went.
struct SafetySample {
  std::vector<Vec2> planned;                 // agent positions for tau = 1..T
  std::vector<std::vector<Vec2>> realized;   // per obstacle, positions for tau = 1..T
  std::vector<double> clearance;             // per obstacle, r_A + r_k
};

struct SafetyReport {
  std::size_t steps = 0;
  std::size_t safe_steps = 0;
  double frequency = 1.0;
  double target = 0.0; // 1 - delta
  bool satisfied = true;
};

/// Fraction of steps whose plan stays collision-free against the realized motion over the whole
/// horizon. Throws std::invalid_argument for an empty trace.
SafetyReport check_empirical_safety(std::span<const SafetySample> trace, double delta);

} // namespace hyprap
