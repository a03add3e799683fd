#include "hyprap/harness.hpp"

#include "hyprap/seeding.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <ctime>
#include <cmath>
#include <map>
#include <ostream>
#include <set>

namespace hyprap {

namespace {

// Per-step timings are thread CPU time, so they do not depend on how many threads share a core.
double cpu_now() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + static_cast<double>(ts.tv_nsec) * 1e-9;
}

double seconds_since(double start) { return cpu_now() - start; }

double uniform(Rng &rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Agent positions for t..t+H: the previous plan advanced one step, or a straight run at the goal.
std::vector<Vec2> nominal_agent_path(const AgentState &x, const PlanResult *previous, const Vec2 &goal,
                                     int horizon, double v_max, double dt) {
  std::vector<Vec2> path;
  path.reserve(static_cast<std::size_t>(horizon) + 1);
  path.push_back(x.position());
  if (previous != nullptr && previous->states.size() >= 3) {
    const auto &s = previous->states;
    for (int j = 1; j <= horizon; ++j) {
      const auto idx = static_cast<std::size_t>(j + 1);
      if (idx < s.size()) {
        path.push_back(s[idx].position());
      } else {
        const Vec2 last = path.back();
        path.push_back(last + (last - path[path.size() - 2]));
      }
    }
    return path;
  }
  const Vec2 to_goal = goal - x.position();
  const double d = norm(to_goal);
  const Vec2 dir = d > 1e-12 ? to_goal * (1.0 / d) : Vec2{};
  for (int j = 1; j <= horizon; ++j) {
    path.push_back(x.position() + dir * std::min(v_max * dt * j, d));
  }
  return path;
}

// Obstacle positions for t..t+H: the previous step's prediction when there is one.
std::vector<Vec2> obstacle_path(const Vec2 &now, const std::vector<Vec2> *previous,
                                const std::vector<Vec2> &fresh, int horizon) {
  std::vector<Vec2> path;
  path.reserve(static_cast<std::size_t>(horizon) + 1);
  path.push_back(now);
  if (previous != nullptr && previous->size() >= static_cast<std::size_t>(horizon) && horizon >= 2) {
    for (int j = 1; j < horizon; ++j) {
      path.push_back((*previous)[static_cast<std::size_t>(j)]);
    }
    const Vec2 last = path.back();
    path.push_back(last + (last - path[path.size() - 2]));
    return path;
  }
  path.insert(path.end(), fresh.begin(), fresh.begin() + horizon);
  return path;
}

bool plan_clears(std::span<const AgentState> states, int steps, const ObstacleTrack &track, int t,
                 double clearance) {
  for (int tau = 1; tau <= steps; ++tau) {
    const int step = t + tau;
    if (step > track.last_step()) {
      break;
    }
    if (distance(states[static_cast<std::size_t>(tau)].position(), track.at(step)) < clearance) {
      return false;
    }
  }
  return true;
}

} // namespace

const char *to_string(Architecture a) {
  switch (a) {
  case Architecture::sp1:
    return "SP1";
  case Architecture::hyprap:
    return "HYPRAP";
  case Architecture::sp2:
    return "SP2";
  case Architecture::prox_a:
    return "PROX_A";
  case Architecture::prox_b:
    return "PROX_B";
  }
  return "UNKNOWN";
}

Architecture parse_architecture(const std::string &name) {
  std::string up;
  for (char c : name) {
    up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  for (Architecture a : {Architecture::sp1, Architecture::hyprap, Architecture::sp2, Architecture::prox_a,
                         Architecture::prox_b}) {
    if (up == to_string(a)) {
      return a;
    }
  }
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

RouterConfig ProximityRule::as_router(const RouterConfig &base) const {
  if (!(outer_radius > 0.0) || !(inner_ratio > 0.0 && inner_ratio < 1.0)) {
    throw std::invalid_argument("proximity rule: need outer_radius > 0 and inner_ratio in (0, 1)");
  }
  RouterConfig r = base;
  r.theta1 = std::exp(-outer_radius / base.d0);
  r.theta2 = std::exp(-inner_ratio * outer_radius / base.d0);
  r.hysteresis_margin = std::min(base.hysteresis_margin, 0.5 * r.theta1);
  return r;
}

Scenario generate_scenario(const ScenarioSpec &spec, int horizon) {
  spec.world.validate();
  if (spec.warmup_steps < 0) {
    throw std::invalid_argument("scenario spec: warmup_steps must be >= 0");
  }
  Rng rng(mix_seed(spec.seed, 0x5CE7A210ULL));
  Scenario sc;
  sc.world = spec.world;
  sc.world.rng_seed = spec.seed;
  sc.warmup_steps = spec.warmup_steps;
  const Bounds &b = sc.world.workspace;
  const int count = spec.obstacle_count >= 0
                        ? spec.obstacle_count
                        : std::uniform_int_distribution<int>(spec.count_min, spec.count_max)(rng);

  const double margin_y = std::min(3.0, 0.25 * b.height());
  const Vec2 start{b.x_min + 1.0, uniform(rng, b.y_min + margin_y, b.y_max - margin_y)};
  const Vec2 goal{b.x_max - 1.0, uniform(rng, b.y_min + margin_y, b.y_max - margin_y)};
  sc.world.goal = goal;
  sc.start = {start.x, start.y, std::atan2(goal.y - start.y, goal.x - start.x)};

  const double r = sc.world.obstacles.radius;
  std::vector<Vec2> placed;
  for (int i = 0; i < count; ++i) {
    bool ok = false;
    Vec2 p;
    for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
      p = {uniform(rng, b.x_min + r, b.x_max - r), uniform(rng, b.y_min + r, b.y_max - r)};
      ok = distance(p, start) >= spec.start_clearance && distance(p, goal) >= spec.start_clearance;
      for (const Vec2 &q : placed) {
        ok = ok && distance(p, q) >= 2.0 * r;
      }
    }
    if (!ok) {
      throw ScenarioInfeasible("scenario " + std::to_string(spec.seed) + ": could not place obstacle " +
                               std::to_string(i + 1) + " of " + std::to_string(count) +
                               " after 10000 attempts");
    }
    placed.push_back(p);
    sc.tracks.push_back(sample_obstacle(i + 1, p, -spec.warmup_steps, sc.world, rng));
  }

  Rng motion(mix_seed(spec.seed, 0x40710AULL));
  const int steps = spec.warmup_steps + sc.world.max_steps + horizon + 1;
  for (ObstacleTrack &t : sc.tracks) {
    t.history.reserve(static_cast<std::size_t>(steps) + 1);
    t.reflected.reserve(static_cast<std::size_t>(steps) + 1);
  }
  for (int s = 0; s < steps; ++s) {
    step_obstacles(sc.tracks, sc.world, motion);
  }
  return sc;
}

double compute_E(int m1, int m2, double eps_tilde_1, double eps_tilde_2) {
  if (m1 < 0 || m2 < 0 || m1 + m2 == 0) {
    throw std::invalid_argument("compute_E: need M1 + M2 >= 1");
  }
  return (m1 * std::exp(-eps_tilde_1) + m2 * std::exp(-eps_tilde_2)) / static_cast<double>(m1 + m2);
}

TrialMetrics run_scenario(const Scenario &scenario, std::uint64_t seed, const TrialOptions &options) {
  if (options.table == nullptr || options.table->empty()) {
    throw std::invalid_argument("run_scenario: an epsilon table is required");
  }
  const EpsilonTable &table = *options.table;
  const PlanConfig &pc = options.planner;
  pc.validate();
  const WorldConfig &world = scenario.world;
  const int H = pc.prediction_horizon;
  const int T = pc.planning_horizon;
  if (H > table.horizon()) {
    throw std::invalid_argument("run_scenario: prediction horizon exceeds the calibrated horizon");
  }
  const bool proximity =
      options.architecture == Architecture::prox_a || options.architecture == Architecture::prox_b;
  const RouterConfig router = proximity ? options.proximity.as_router(options.router) : options.router;
  const std::size_t keep =
      static_cast<std::size_t>(options.predictors.library != nullptr ? options.predictors.library->window : 10) + 1;

  TrialMetrics m;
  m.seed = seed;
  m.architecture = options.architecture;
  m.obstacle_count = static_cast<int>(scenario.tracks.size());

  std::map<int, std::vector<Vec2>> history;
  std::map<int, HysteresisState> hysteresis;
  std::map<int, std::vector<Vec2>> previous_prediction;
  std::optional<PlanResult> warm;
  AgentState x = scenario.start;
  double v_now = 0.0;
  int consecutive_fallback = 0;
  long constrained_sum = 0;
  double accuracy_sum = 0.0;
  int accuracy_steps = 0;
  bool finished = false;

  PredictorSettings level0 = options.predictors;
  level0.library = nullptr;

  // Sensing and history upkeep; obstacles that leave the sensing range are forgotten.
  auto observe = [&](int t) {
    const auto snaps = snapshot(scenario.tracks, t);
    auto sensed = sense(x, snaps, world.sensing_radius);
    std::set<int> present;
    for (const ObstacleSnapshot &s : sensed) {
      present.insert(s.id);
    }
    std::erase_if(history, [&](const auto &kv) { return !present.contains(kv.first); });
    std::erase_if(hysteresis, [&](const auto &kv) { return !present.contains(kv.first); });
    std::erase_if(previous_prediction, [&](const auto &kv) { return !present.contains(kv.first); });
    for (const ObstacleSnapshot &s : sensed) {
      auto &h = history[s.id];
      h.push_back(s.position);
      if (h.size() > keep) {
        h.erase(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(h.size() - keep));
      }
    }
    return sensed;
  };
  for (int t = -scenario.warmup_steps; t < 0; ++t) {
    observe(t);
  }

  for (int t = 0; t < world.max_steps && !finished; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.agent = x;
    const auto sensed = observe(t);
    rec.sensed = static_cast<int>(sensed.size());

    // Risk assessment and routing.
    const double pred_start = cpu_now();
    const auto agent_path =
        nominal_agent_path(x, warm ? &*warm : nullptr, world.goal, H, world.limits.v_max, world.dt);
    std::vector<double> psi(sensed.size());
    std::vector<PredictorLevel> level(sensed.size(), PredictorLevel::simple);
    for (std::size_t i = 0; i < sensed.size(); ++i) {
      const ObstacleSnapshot &s = sensed[i];
      if (proximity) {
        psi[i] = proximity_risk(distance(x.position(), s.position), router);
      } else {
        const auto prev = previous_prediction.find(s.id);
        std::vector<Vec2> fresh;
        if (prev == previous_prediction.end()) {
          fresh = predict(PredictorLevel::simple, history[s.id], H, level0).points;
          ++m.calls_l0;
        }
        const auto path =
            obstacle_path(s.position, prev == previous_prediction.end() ? nullptr : &prev->second, fresh, H);
        psi[i] = compute_pcri(approach_profile(agent_path, path, world.dt), router);
      }
      const RouteResult rr = route(psi[i], hysteresis[s.id], router);
      hysteresis[s.id] = rr.state;
      level[i] = rr.level;
      if (level[i] != PredictorLevel::simple) {
        if (options.architecture == Architecture::sp1) {
          level[i] = PredictorLevel::accurate;
        } else if (options.architecture == Architecture::sp2) {
          level[i] = PredictorLevel::fast;
        }
      }
    }
    if (options.forced) {
      std::vector<std::size_t> order(sensed.size());
      for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
      }
      // Obstacles seen only once cannot be modelled, so they rank last.
      auto modelled = [&](std::size_t i) { return history[sensed[i].id].size() >= 2; };
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (modelled(a) != modelled(b)) {
          return modelled(a);
        }
        return psi[a] > psi[b];
      });
      const int eligible = static_cast<int>(std::count_if(order.begin(), order.end(), modelled));
      const int total = std::min<int>(options.forced->total, eligible);
      for (std::size_t r = 0; r < order.size(); ++r) {
        const int rank = static_cast<int>(r);
        level[order[r]] = rank >= total                          ? PredictorLevel::simple
                          : rank < options.forced->accurate ? PredictorLevel::accurate
                                                            : PredictorLevel::fast;
      }
      rec.full_allocation = total == options.forced->total;
    }

    // A single observed position has no velocity; such obstacles stay at level 0 for this step.
    for (std::size_t i = 0; i < sensed.size(); ++i) {
      if (level[i] != PredictorLevel::simple && history[sensed[i].id].size() < 2) {
        level[i] = PredictorLevel::simple;
        ++m.fallback_calls;
      }
    }

    // Predictions and conformal margins for M_t.
    int mt = 0;
    for (PredictorLevel l : level) {
      mt += l != PredictorLevel::simple ? 1 : 0;
    }
    rec.constrained = mt;
    ConstraintSet constraints;
    constraints.reserve(static_cast<std::size_t>(mt));
    std::vector<double> radii(static_cast<std::size_t>(H));
    for (std::size_t i = 0; i < sensed.size(); ++i) {
      const ObstacleSnapshot &s = sensed[i];
      ObstacleRecord orec{s.id, psi[i], level_index(level[i]), 0, false};
      if (level[i] == PredictorLevel::simple) {
        previous_prediction.erase(s.id);
        if (options.record_obstacles) {
          rec.obstacles.push_back(orec);
        }
        continue;
      }
      Prediction p = predict(level[i], history[s.id], H, options.predictors);
      PredictorLevel used = p.used;
      if (used == PredictorLevel::accurate) {
        ++m.calls_l1;
        ++rec.m1;
      } else {
        ++m.calls_l2;
        ++rec.m2;
      }
      if (p.fallback) {
        ++m.fallback_calls;
      }
      for (int h = 1; h <= H; ++h) {
        const EpsilonLookup e = lookup_epsilon(table, used, mt, h);
        radii[static_cast<std::size_t>(h - 1)] = e.value;
        m.clamped_lookups += (e.clamped && h == 1) ? 1 : 0;
      }
      constraints.push_back(
          {s.id, p.points, conformal_margins(world.agent_radius, s.radius, pc.lipschitz, radii)});
      previous_prediction[s.id] = std::move(p.points);
      orec.used = level_index(p.used);
      orec.fallback = p.fallback;
      if (options.record_obstacles) {
        rec.obstacles.push_back(orec);
      }
    }
    rec.prediction_time = seconds_since(pred_start);
    if (mt > 0) {
      const int row = std::min(mt, table.m_max());
      rec.accuracy = compute_E(rec.m1, rec.m2, table.mean_radius(PredictorLevel::accurate, row),
                               table.mean_radius(PredictorLevel::fast, row));
      accuracy_sum += rec.accuracy;
      ++accuracy_steps;
    }
    constrained_sum += mt;
    m.max_constrained = std::max(m.max_constrained, mt);

    // MPC (line 16) and the braking fallback.
    const double mpc_start = cpu_now();
    PlanResult plan = solve_mpc(x, world.goal, constraints, warm ? &*warm : nullptr, pc);
    ControlInput u;
    rec.status = plan.status;
    rec.violation = plan.max_violation;
    rec.cost = plan.cost;
    rec.outer_iterations = plan.diagnostics.outer_iterations;
    rec.inner_iterations = plan.diagnostics.inner_iterations;
    rec.final_penalty = plan.diagnostics.final_penalty;
    if (plan.status == PlanStatus::infeasible_fallback) {
      u = fallback_brake(x, v_now, pc, &constraints).controls.front();
      rec.braking = true;
      ++consecutive_fallback;
      ++m.fallback_steps;
    } else {
      u = plan.controls.front();
      consecutive_fallback = 0;
      ++m.feasible_steps;
      if (options.collect_safety) {
        bool safe = true;
        for (const ObstacleConstraint &c : constraints) {
          const ObstacleTrack &track = scenario.tracks[static_cast<std::size_t>(c.obstacle_id - 1)];
          safe = safe && plan_clears(plan.states, T, track, t, world.agent_radius + track.radius);
        }
        bool safe_all = safe;
        for (const ObstacleTrack &track : scenario.tracks) {
          safe_all = safe_all && plan_clears(plan.states, T, track, t, world.agent_radius + track.radius);
        }
        m.safe_steps += safe ? 1 : 0;
        m.safe_steps_all += safe_all ? 1 : 0;
      }
    }
    warm = std::move(plan);
    rec.mpc_time = seconds_since(mpc_start);
    m.prediction_time += rec.prediction_time;
    m.mpc_time += rec.mpc_time;

    // Apply u_t (line 17) and evaluate the outcome at t + 1.
    x = step_agent(x, u, world.dt, world.limits);
    v_now = u.linear_velocity;
    m.steps.push_back(std::move(rec));
    m.travel_steps = t + 1;
    if (check_collision(x, world.agent_radius, snapshot(scenario.tracks, t + 1))) {
      m.collision = true;
      finished = true;
    } else if (consecutive_fallback > options.deadlock_steps) {
      m.deadlock = true;
      finished = true;
    } else if (at_goal(x, world)) {
      m.success = true;
      finished = true;
    }
  }
  m.timeout = !finished;
  m.mean_constrained = m.steps.empty() ? 0.0 : static_cast<double>(constrained_sum) / m.steps.size();
  m.mean_accuracy = accuracy_steps > 0 ? accuracy_sum / accuracy_steps : 1.0;
  return m;
}

void write_trace(std::ostream &out, const TrialMetrics &metrics) {
  for (const StepRecord &r : metrics.steps) {
    nlohmann::json j;
    j["t"] = r.t;
    j["seed"] = metrics.seed;
    j["arch"] = to_string(metrics.architecture);
    j["agent"] = {r.agent.x, r.agent.y, r.agent.heading};
    j["N_t"] = r.sensed;
    j["M_t"] = r.constrained;
    j["M1"] = r.m1;
    j["M2"] = r.m2;
    nlohmann::json obs = nlohmann::json::array();
    for (const ObstacleRecord &o : r.obstacles) {
      obs.push_back({{"id", o.id}, {"psi", o.psi}, {"phi", o.level}, {"used", o.used}, {"fallback", o.fallback}});
    }
    j["obstacles"] = std::move(obs);
    j["status"] = to_string(r.status);
    j["braking"] = r.braking;
    j["violation"] = r.violation;
    j["cost"] = r.cost;
    j["outer_iterations"] = r.outer_iterations;
    j["inner_iterations"] = r.inner_iterations;
    j["rho"] = r.final_penalty;
    j["E"] = r.accuracy;
    j["prediction_time"] = r.prediction_time;
    j["mpc_time"] = r.mpc_time;
    out << j.dump() << '\n';
  }
}

} // namespace hyprap
