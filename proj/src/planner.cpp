#include "hyprap/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <stdexcept>

namespace hyprap {

namespace {

double thread_cpu_ms() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) * 1e3 + static_cast<double>(ts.tv_nsec) * 1e-6;
}

struct CurvaturePair {
  std::vector<double> s;
  std::vector<double> y;
  double rho = 0.0;
};

// Two-loop recursion: direction = -H g, with H the limited-memory inverse Hessian estimate.
void lbfgs_direction(const std::vector<CurvaturePair> &history, const std::vector<double> &g,
                     std::vector<double> &d) {
  d = g;
  if (history.empty()) {
    for (double &x : d) {
      x = -x;
    }
    return;
  }
  std::vector<double> a(history.size());
  for (std::size_t k = history.size(); k-- > 0;) {
    const CurvaturePair &p = history[k];
    double dot = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      dot += p.s[i] * d[i];
    }
    a[k] = p.rho * dot;
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] -= a[k] * p.y[i];
    }
  }
  const CurvaturePair &last = history.back();
  double yy = 0.0;
  for (double y : last.y) {
    yy += y * y;
  }
  const double gamma = yy > 0.0 ? 1.0 / (last.rho * yy) : 1.0;
  for (double &x : d) {
    x *= gamma;
  }
  for (std::size_t k = 0; k < history.size(); ++k) {
    const CurvaturePair &p = history[k];
    double dot = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      dot += p.y[i] * d[i];
    }
    const double b = p.rho * dot;
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] += (a[k] - b) * p.s[i];
    }
  }
  for (double &x : d) {
    x = -x;
  }
}

} // namespace

void PlanConfig::validate() const {
  if (planning_horizon < 1 || prediction_horizon < 1) {
    throw std::invalid_argument("plan config: horizons must be >= 1");
  }
  if (prediction_horizon > planning_horizon) {
    throw std::invalid_argument("plan config: prediction horizon H must not exceed planning horizon T");
  }
  if (q_position < 0.0 || r_control < 0.0 || q_terminal < 0.0) {
    throw std::invalid_argument("plan config: cost weights must be non-negative");
  }
  if (!(tolerance > 0.0)) {
    throw std::invalid_argument("plan config: violation tolerance must be positive");
  }
  if (penalty_schedule.empty() || max_inner_iterations < 1 || memory < 0 || recovery_stages < 0) {
    throw std::invalid_argument("plan config: solver budget must be non-empty");
  }
  if (!(dt > 0.0) || !(lipschitz >= 0.0) || penalty_buffer < 0.0 || !(brake_decel > 0.0)) {
    throw std::invalid_argument("plan config: dt, L, buffer or braking deceleration invalid");
  }
}

std::vector<double> conformal_margins(double agent_radius, double obstacle_radius, double lipschitz,
                                      std::span<const double> radii) {
  std::vector<double> m(radii.size());
  for (std::size_t h = 0; h < radii.size(); ++h) {
    m[h] = agent_radius + obstacle_radius + lipschitz * std::max(radii[h], 0.0);
  }
  return m;
}

const char *to_string(PlanStatus s) {
  switch (s) {
  case PlanStatus::optimal:
    return "optimal";
  case PlanStatus::feasible:
    return "feasible";
  case PlanStatus::infeasible_fallback:
    return "infeasible_fallback";
  }
  return "unknown";
}

std::vector<AgentState> rollout_dynamics(const AgentState &x0, std::span<const ControlInput> controls,
                                         double dt, const ControlLimits &limits) {
  std::vector<AgentState> states;
  states.reserve(controls.size() + 1);
  states.push_back(x0);
  for (const ControlInput &u : controls) {
    states.push_back(step_agent(states.back(), u, dt, limits));
  }
  return states;
}

double collision_margin(const AgentState &state, const Vec2 &obstacle_point, double margin) {
  return distance(state.position(), obstacle_point) - margin;
}

double max_constraint_violation(std::span<const AgentState> states, const ConstraintSet &constraints,
                                int prediction_horizon) {
  double worst = 0.0;
  for (const ObstacleConstraint &c : constraints) {
    const std::size_t steps = std::min({c.points.size(), c.margins.size(),
                                        static_cast<std::size_t>(prediction_horizon),
                                        states.empty() ? std::size_t{0} : states.size() - 1});
    for (std::size_t h = 1; h <= steps; ++h) {
      const double slack = collision_margin(states[h], c.points[h - 1], c.margins[h - 1]);
      worst = std::max(worst, -slack);
    }
  }
  return worst;
}

std::vector<double> flatten(std::span<const ControlInput> controls) {
  std::vector<double> u;
  u.reserve(2 * controls.size());
  for (const ControlInput &c : controls) {
    u.push_back(c.linear_velocity);
    u.push_back(c.angular_velocity);
  }
  return u;
}

std::vector<ControlInput> unflatten(std::span<const double> u) {
  std::vector<ControlInput> out(u.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {u[2 * i], u[2 * i + 1]};
  }
  return out;
}

std::vector<ControlInput> shift_warm_start(std::span<const ControlInput> previous, int horizon) {
  std::vector<ControlInput> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (int i = 1; i <= horizon; ++i) {
    if (previous.empty()) {
      out.push_back({});
    } else {
      out.push_back(previous[std::min(static_cast<std::size_t>(i), previous.size() - 1)]);
    }
  }
  return out;
}

ShootingProblem::ShootingProblem(const AgentState &x0, const Vec2 &goal, const ConstraintSet &constraints,
                                 const PlanConfig &config)
    : x0_(x0), goal_(goal), constraints_(constraints), config_(config),
      constrained_steps_(std::min(config.prediction_horizon, config.planning_horizon)) {}

void ShootingProblem::project(std::span<double> u) const {
  for (std::size_t i = 0; i + 1 < u.size(); i += 2) {
    u[i] = std::clamp(u[i], 0.0, config_.limits.v_max);
    u[i + 1] = std::clamp(u[i + 1], -config_.limits.omega_max, config_.limits.omega_max);
  }
}

void ShootingProblem::rollout(std::span<const double> u, std::vector<AgentState> &states) const {
  const int T = config_.planning_horizon;
  states.resize(static_cast<std::size_t>(T) + 1);
  states[0] = x0_;
  for (int t = 0; t < T; ++t) {
    AgentState next = integrate_unicycle(states[static_cast<std::size_t>(t)],
                                         {u[2 * t], u[2 * t + 1]}, config_.dt);
    next.heading = wrap_angle(next.heading);
    states[static_cast<std::size_t>(t) + 1] = next;
  }
}

double ShootingProblem::evaluate(std::span<const double> u, double rho, bool penalty,
                                 std::vector<double> *grad) const {
  const int T = config_.planning_horizon;
  const double dt = config_.dt;
  std::vector<AgentState> s;
  rollout(u, s);

  // Position gradient of the penalty at each step.
  std::vector<Vec2> pen_grad(grad != nullptr ? static_cast<std::size_t>(T) + 1 : 0);
  double value = 0.0;
  for (int t = 0; t < T; ++t) {
    const Vec2 e = s[static_cast<std::size_t>(t)].position() - goal_;
    value += config_.q_position * squared_norm(e) +
             config_.r_control * (u[2 * t] * u[2 * t] + u[2 * t + 1] * u[2 * t + 1]);
  }
  value += config_.q_terminal * squared_norm(s[static_cast<std::size_t>(T)].position() - goal_);

  if (penalty && rho > 0.0) {
    for (const ObstacleConstraint &c : constraints_) {
      const int steps = std::min({constrained_steps_, static_cast<int>(c.points.size()),
                                  static_cast<int>(c.margins.size())});
      for (int h = 1; h <= steps; ++h) {
        const Vec2 diff = s[static_cast<std::size_t>(h)].position() - c.points[static_cast<std::size_t>(h - 1)];
        const double d = norm(diff);
        const double phi = config_.penalty_buffer - (d - c.margins[static_cast<std::size_t>(h - 1)]);
        if (phi > 0.0) {
          value += rho * phi * phi;
          if (grad != nullptr && d > 0.0) {
            pen_grad[static_cast<std::size_t>(h)] += diff * (-2.0 * rho * phi / d);
          }
        }
      }
    }
  }

  if (grad != nullptr) {
    grad->assign(static_cast<std::size_t>(2 * T), 0.0);
    const Vec2 eT = s[static_cast<std::size_t>(T)].position() - goal_;
    Vec2 lam = eT * (2.0 * config_.q_terminal) + pen_grad[static_cast<std::size_t>(T)];
    double lam_heading = 0.0;
    for (int t = T - 1; t >= 0; --t) {
      const AgentState &st = s[static_cast<std::size_t>(t)];
      const double c = std::cos(st.heading);
      const double sn = std::sin(st.heading);
      const double v = u[2 * t];
      const double w = u[2 * t + 1];
      (*grad)[static_cast<std::size_t>(2 * t)] = 2.0 * config_.r_control * v + dt * (c * lam.x + sn * lam.y);
      (*grad)[static_cast<std::size_t>(2 * t + 1)] = 2.0 * config_.r_control * w + dt * lam_heading;
      // Costate of x_t: running cost gradient plus the transposed dynamics Jacobian.
      lam_heading += dt * v * (-sn * lam.x + c * lam.y);
      const Vec2 e = st.position() - goal_;
      lam += e * (2.0 * config_.q_position) + pen_grad[static_cast<std::size_t>(t)];
    }
  }
  return value;
}

double ShootingProblem::cost(std::span<const double> u) const { return evaluate(u, 0.0, false, nullptr); }

double ShootingProblem::merit(std::span<const double> u, double rho) const {
  return evaluate(u, rho, true, nullptr);
}

double ShootingProblem::merit_and_gradient(std::span<const double> u, double rho,
                                           std::vector<double> &grad) const {
  return evaluate(u, rho, true, &grad);
}

PlanResult solve_mpc(const AgentState &x0, const Vec2 &goal, const ConstraintSet &constraints,
                     const PlanResult *warm_start, const PlanConfig &config, bool record_merit_history) {
  config.validate();
  const auto wall_start = std::chrono::steady_clock::now();
  const double cpu_start = thread_cpu_ms();
  const int T = config.planning_horizon;

  std::vector<ControlInput> initial;
  if (warm_start != nullptr && !warm_start->controls.empty()) {
    initial = shift_warm_start(warm_start->controls, T);
  } else {
    initial.assign(static_cast<std::size_t>(T), {0.5 * config.limits.v_max, 0.0});
  }

  ShootingProblem problem(x0, goal, constraints, config);
  std::vector<double> u = flatten(initial);
  problem.project(u);

  PlanResult result;
  SolveDiagnostics &diag = result.diagnostics;
  std::vector<double> grad, grad_new, trial(u.size());
  std::vector<double> free_grad(u.size()), direction(u.size()), lower(u.size()), upper(u.size());
  for (std::size_t i = 0; i + 1 < u.size(); i += 2) {
    lower[i] = 0.0;
    upper[i] = config.limits.v_max;
    lower[i + 1] = -config.limits.omega_max;
    upper[i + 1] = config.limits.omega_max;
  }
  std::vector<CurvaturePair> history;
  double step = 1.0;
  bool stop = false;
  double violation = 0.0;

  const auto descend = [&](std::size_t first_stage) {
  for (std::size_t stage = first_stage; stage < config.penalty_schedule.size(); ++stage) {
    const double rho = config.penalty_schedule[stage];
    ++diag.outer_iterations;
    diag.final_penalty = rho;
    double f = problem.merit_and_gradient(u, rho, grad);
    ++diag.merit_evaluations;
    if (record_merit_history) {
      diag.merit_history.push_back({f});
    }
    diag.converged = false;
    history.clear();

    for (int it = 0; it < config.max_inner_iterations; ++it) {
      if (config.time_cap_ms > 0.0 && thread_cpu_ms() - cpu_start > config.time_cap_ms) {
        diag.hit_time_cap = true;
        stop = true;
        break;
      }
      double pg = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        trial[i] = u[i] - grad[i];
      }
      problem.project(trial);
      for (std::size_t i = 0; i < u.size(); ++i) {
        pg = std::max(pg, std::abs(trial[i] - u[i]));
      }
      if (pg <= config.gradient_tolerance) {
        diag.converged = true;
        break;
      }

      // Search direction on the free variables; bound-blocked components are frozen.
      for (std::size_t i = 0; i < u.size(); ++i) {
        const bool blocked = (u[i] <= lower[i] && grad[i] > 0.0) || (u[i] >= upper[i] && grad[i] < 0.0);
        free_grad[i] = blocked ? 0.0 : grad[i];
      }
      lbfgs_direction(history, free_grad, direction);
      double slope = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        if (free_grad[i] == 0.0) {
          direction[i] = 0.0;
        }
        slope += grad[i] * direction[i];
      }
      if (!(slope < 0.0)) {
        history.clear();
        for (std::size_t i = 0; i < u.size(); ++i) {
          direction[i] = -step * free_grad[i];
        }
      }

      bool accepted = false;
      double f_trial = f;
      double alpha = 1.0;
      for (int bt = 0; bt < config.max_backtracks; ++bt) {
        for (std::size_t i = 0; i < u.size(); ++i) {
          trial[i] = u[i] + alpha * direction[i];
        }
        problem.project(trial);
        double decrease = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
          decrease += grad[i] * (trial[i] - u[i]);
        }
        f_trial = problem.merit(trial, rho);
        ++diag.merit_evaluations;
        if (decrease < 0.0 && f_trial <= f + config.armijo_c * decrease) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        break;
      }

      f_trial = problem.merit_and_gradient(trial, rho, grad_new);
      ++diag.merit_evaluations;
      double ss = 0.0, sy = 0.0;
      CurvaturePair pair;
      pair.s.resize(u.size());
      pair.y.resize(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) {
        pair.s[i] = trial[i] - u[i];
        pair.y[i] = grad_new[i] - grad[i];
        ss += pair.s[i] * pair.s[i];
        sy += pair.s[i] * pair.y[i];
      }
      // Barzilai-Borwein scale for gradient steps.
      step = sy > 1e-16 ? std::clamp(ss / sy, 1e-10, 1e3) : std::min(step * 2.0, 1e3);
      if (config.memory > 0 && sy > 1e-12 * ss) {
        pair.rho = 1.0 / sy;
        history.push_back(std::move(pair));
        if (static_cast<int>(history.size()) > config.memory) {
          history.erase(history.begin());
        }
      }
      u.swap(trial);
      grad.swap(grad_new);
      f = f_trial;
      ++diag.inner_iterations;
      if (record_merit_history) {
        diag.merit_history.back().push_back(f);
      }
    }

    result.controls = unflatten(u);
    result.states = rollout_dynamics(x0, result.controls, config.dt, config.limits);
    violation = max_constraint_violation(result.states, constraints, config.prediction_horizon);
    if (stop || (diag.converged && violation <= config.tolerance)) {
      break;
    }
  }
  };

  descend(0);
  if (violation > config.tolerance && !stop && config.recovery_stages > 0) {
    // Second attempt from a standstill with only the stiffest penalties, so the iterates stay
    // near the feasible start instead of being pulled through obstacles by the goal term.
    PlanResult first = result;
    std::vector<double> first_u = u;
    const double first_violation = violation;
    const int stages = std::min<int>(config.recovery_stages, static_cast<int>(config.penalty_schedule.size()));
    std::fill(u.begin(), u.end(), 0.0);
    step = 1.0;
    descend(config.penalty_schedule.size() - static_cast<std::size_t>(stages));
    if (violation >= first_violation) {
      const SolveDiagnostics counts = diag;
      result = std::move(first);
      result.diagnostics.outer_iterations = counts.outer_iterations;
      result.diagnostics.inner_iterations = counts.inner_iterations;
      result.diagnostics.merit_evaluations = counts.merit_evaluations;
      result.diagnostics.hit_time_cap = counts.hit_time_cap;
      result.diagnostics.merit_history = counts.merit_history;
      u = std::move(first_u);
      violation = first_violation;
    }
  }

  if (result.controls.empty()) {
    result.controls = unflatten(u);
    result.states = rollout_dynamics(x0, result.controls, config.dt, config.limits);
    violation = max_constraint_violation(result.states, constraints, config.prediction_horizon);
  }
  result.max_violation = violation;
  result.cost = problem.cost(u);
  if (violation <= config.tolerance) {
    result.status = diag.converged ? PlanStatus::optimal : PlanStatus::feasible;
  } else {
    result.status = PlanStatus::infeasible_fallback;
  }
  result.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return result;
}

PlanResult fallback_brake(const AgentState &x0, double current_velocity, const PlanConfig &config,
                          const ConstraintSet *constraints) {
  PlanResult r;
  const int T = config.planning_horizon;
  double v = std::clamp(current_velocity, 0.0, config.limits.v_max);
  r.controls.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    v = std::max(0.0, v - config.brake_decel * config.dt);
    r.controls.push_back({v, 0.0});
  }
  r.states = rollout_dynamics(x0, r.controls, config.dt, config.limits);
  r.status = PlanStatus::infeasible_fallback;
  if (constraints != nullptr) {
    r.max_violation = max_constraint_violation(r.states, *constraints, config.prediction_horizon);
  }
  return r;
}

SafetyReport check_empirical_safety(std::span<const SafetySample> trace, double delta) {
  if (trace.empty()) {
    throw std::invalid_argument("check_empirical_safety: empty trace");
  }
  SafetyReport rep;
  rep.steps = trace.size();
  for (const SafetySample &s : trace) {
    bool safe = true;
    for (std::size_t k = 0; k < s.realized.size() && safe; ++k) {
      const std::size_t n = std::min(s.planned.size(), s.realized[k].size());
      for (std::size_t t = 0; t < n; ++t) {
        if (distance(s.planned[t], s.realized[k][t]) < s.clearance[k]) {
          safe = false;
          break;
        }
      }
    }
    rep.safe_steps += safe ? 1 : 0;
  }
  rep.frequency = static_cast<double>(rep.safe_steps) / static_cast<double>(rep.steps);
  rep.target = 1.0 - delta;
  rep.satisfied = rep.frequency >= rep.target;
  return rep;
}

} // namespace hyprap
