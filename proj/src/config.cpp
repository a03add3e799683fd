#include "hyprap/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <type_traits>
#include <vector>

namespace hyprap {

namespace {

struct Field {
  const char *section;
  const char *key;
  std::function<std::string(const StudyConfig &)> get;
  std::function<void(StudyConfig &, const std::string &)> set;
};

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

double parse_double(const std::string &s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) {
    throw std::invalid_argument("trailing characters");
  }
  return v;
}

long long parse_int(const std::string &s) {
  std::size_t used = 0;
  const long long v = std::stoll(s, &used);
  if (used != s.size()) {
    throw std::invalid_argument("trailing characters");
  }
  return v;
}

bool parse_bool(const std::string &s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") {
    return true;
  }
  if (s == "false" || s == "0" || s == "no" || s == "off") {
    return false;
  }
  throw std::invalid_argument("expected a boolean");
}

std::vector<double> parse_list(const std::string &s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) {
      throw std::invalid_argument("empty list item");
    }
    out.push_back(parse_double(item.substr(b, e - b + 1)));
  }
  return out;
}

std::string fmt_list(const double *v, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    out += (i ? ", " : "") + fmt_double(v[i]);
  }
  return out;
}

template <class T> Field real(const char *sec, const char *key, T StudyConfig::*outer, double T::*member) {
  return {sec, key, [=](const StudyConfig &c) { return fmt_double(c.*outer.*member); },
          [=](StudyConfig &c, const std::string &s) { c.*outer.*member = parse_double(s); }};
}

template <class T, class I> Field integer(const char *sec, const char *key, T StudyConfig::*outer, I T::*member) {
  return {sec, key, [=](const StudyConfig &c) { return std::to_string(c.*outer.*member); },
          [=](StudyConfig &c, const std::string &s) {
            if constexpr (std::is_unsigned_v<I>) {
              std::size_t used = 0;
              if (s.empty() || s[0] == '-') {
                throw std::invalid_argument("expected a non-negative integer");
              }
              c.*outer.*member = static_cast<I>(std::stoull(s, &used));
              if (used != s.size()) {
                throw std::invalid_argument("trailing characters");
              }
            } else {
              c.*outer.*member = static_cast<I>(parse_int(s));
            }
          }};
}

const std::vector<Field> &fields() {
  using C = StudyConfig;
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    auto world_real = [&](const char *key, double WorldConfig::*m) { f.push_back(real("world", key, &C::world, m)); };
    f.push_back({"world", "x_min", [](const C &c) { return fmt_double(c.world.workspace.x_min); },
                 [](C &c, const std::string &s) { c.world.workspace.x_min = parse_double(s); }});
    f.push_back({"world", "y_min", [](const C &c) { return fmt_double(c.world.workspace.y_min); },
                 [](C &c, const std::string &s) { c.world.workspace.y_min = parse_double(s); }});
    f.push_back({"world", "x_max", [](const C &c) { return fmt_double(c.world.workspace.x_max); },
                 [](C &c, const std::string &s) { c.world.workspace.x_max = parse_double(s); }});
    f.push_back({"world", "y_max", [](const C &c) { return fmt_double(c.world.workspace.y_max); },
                 [](C &c, const std::string &s) { c.world.workspace.y_max = parse_double(s); }});
    world_real("goal_radius", &WorldConfig::goal_radius);
    world_real("sensing_radius", &WorldConfig::sensing_radius);
    world_real("dt", &WorldConfig::dt);
    world_real("agent_radius", &WorldConfig::agent_radius);
    f.push_back(integer("world", "max_steps", &C::world, &WorldConfig::max_steps));
    f.push_back({"world", "v_max", [](const C &c) { return fmt_double(c.world.limits.v_max); },
                 [](C &c, const std::string &s) { c.world.limits.v_max = parse_double(s); }});
    f.push_back({"world", "omega_max", [](const C &c) { return fmt_double(c.world.limits.omega_max); },
                 [](C &c, const std::string &s) { c.world.limits.omega_max = parse_double(s); }});

    auto obstacle_real = [&](const char *key, double ObstacleModel::*m) {
      f.push_back({"obstacles", key, [=](const C &c) { return fmt_double(c.world.obstacles.*m); },
                   [=](C &c, const std::string &s) { c.world.obstacles.*m = parse_double(s); }});
    };
    obstacle_real("radius", &ObstacleModel::radius);
    obstacle_real("speed_min", &ObstacleModel::speed_min);
    obstacle_real("speed_max", &ObstacleModel::speed_max);
    obstacle_real("accel_noise", &ObstacleModel::accel_noise);
    obstacle_real("weave_amplitude_max", &ObstacleModel::weave_amplitude_max);
    obstacle_real("weave_period_min", &ObstacleModel::weave_period_min);
    obstacle_real("weave_period_max", &ObstacleModel::weave_period_max);
    obstacle_real("weave_lateral_speed_max", &ObstacleModel::weave_lateral_speed_max);
    obstacle_real("waypoint_turn_rate", &ObstacleModel::waypoint_turn_rate);
    obstacle_real("waypoint_arrival_radius", &ObstacleModel::waypoint_arrival_radius);
    obstacle_real("stop_go_interval_min", &ObstacleModel::stop_go_interval_min);
    obstacle_real("stop_go_interval_max", &ObstacleModel::stop_go_interval_max);
    f.push_back({"obstacles", "pattern_weights",
                 [](const C &c) { return fmt_list(c.world.obstacles.pattern_weights.data(), 4); },
                 [](C &c, const std::string &s) {
                   const auto v = parse_list(s);
                   if (v.size() != 4) {
                     throw std::invalid_argument("expected 4 weights");
                   }
                   std::copy(v.begin(), v.end(), c.world.obstacles.pattern_weights.begin());
                 }});

    f.push_back(integer("scenario", "count_min", &C::scenario, &ScenarioSpec::count_min));
    f.push_back(integer("scenario", "count_max", &C::scenario, &ScenarioSpec::count_max));
    f.push_back(real("scenario", "start_clearance", &C::scenario, &ScenarioSpec::start_clearance));
    f.push_back(integer("scenario", "warmup_steps", &C::scenario, &ScenarioSpec::warmup_steps));

    f.push_back(integer("library", "seed", &C::library, &LibraryConfig::seed));
    f.push_back(integer("library", "rollouts", &C::library, &LibraryConfig::rollouts));
    f.push_back(integer("library", "steps", &C::library, &LibraryConfig::steps));
    f.push_back(integer("library", "window", &C::library, &LibraryConfig::window));
    f.push_back(integer("library", "stride", &C::library, &LibraryConfig::stride));

    f.push_back(integer("calibration", "seed", &C::calibration, &CalibrationOptions::seed));
    f.push_back(integer("calibration", "rollouts", &C::calibration, &CalibrationOptions::n_rollouts));
    f.push_back(integer("calibration", "samples_per_rollout", &C::calibration,
                        &CalibrationOptions::samples_per_rollout));
    f.push_back(integer("calibration", "rollout_steps", &C::calibration, &CalibrationOptions::rollout_steps));

    f.push_back({"predictors", "k", [](const C &c) { return std::to_string(c.k); },
                 [](C &c, const std::string &s) { c.k = static_cast<int>(parse_int(s)); }});
    f.push_back({"predictors", "work_multiplier", [](const C &c) { return std::to_string(c.work_multiplier); },
                 [](C &c, const std::string &s) { c.work_multiplier = static_cast<int>(parse_int(s)); }});

    f.push_back(real("conformal", "delta", &C::conformal, &ConformalConfig::delta));
    f.push_back(integer("conformal", "m_max", &C::conformal, &ConformalConfig::m_max));
    f.push_back({"conformal", "budget",
                 [](const C &c) { return std::string(c.conformal.mode == BudgetMode::per_count ? "per_count" : "worst_case"); },
                 [](C &c, const std::string &s) {
                   if (s == "per_count") {
                     c.conformal.mode = BudgetMode::per_count;
                   } else if (s == "worst_case") {
                     c.conformal.mode = BudgetMode::worst_case;
                   } else {
                     throw std::invalid_argument("expected per_count or worst_case");
                   }
                 }});
    f.push_back({"conformal", "artifact_dir", [](const C &c) { return c.conformal.artifact_dir; },
                 [](C &c, const std::string &s) { c.conformal.artifact_dir = s; }});

    f.push_back(real("router", "theta1", &C::router, &RouterConfig::theta1));
    f.push_back(real("router", "theta2", &C::router, &RouterConfig::theta2));
    f.push_back(real("router", "w_distance", &C::router, &RouterConfig::w_distance));
    f.push_back(real("router", "w_time", &C::router, &RouterConfig::w_time));
    f.push_back(real("router", "d0", &C::router, &RouterConfig::d0));
    f.push_back(real("router", "tau0", &C::router, &RouterConfig::tau0));
    f.push_back(real("router", "hysteresis_margin", &C::router, &RouterConfig::hysteresis_margin));
    f.push_back(integer("router", "dwell_steps", &C::router, &RouterConfig::dwell_steps));

    f.push_back(real("proximity", "outer_radius", &C::proximity, &ProximityRule::outer_radius));
    f.push_back(real("proximity", "inner_ratio", &C::proximity, &ProximityRule::inner_ratio));

    f.push_back(integer("planner", "planning_horizon", &C::planner, &PlanConfig::planning_horizon));
    f.push_back(integer("planner", "prediction_horizon", &C::planner, &PlanConfig::prediction_horizon));
    f.push_back(real("planner", "q_position", &C::planner, &PlanConfig::q_position));
    f.push_back(real("planner", "r_control", &C::planner, &PlanConfig::r_control));
    f.push_back(real("planner", "q_terminal", &C::planner, &PlanConfig::q_terminal));
    f.push_back(real("planner", "lipschitz", &C::planner, &PlanConfig::lipschitz));
    f.push_back({"planner", "penalty_schedule",
                 [](const C &c) { return fmt_list(c.planner.penalty_schedule.data(), c.planner.penalty_schedule.size()); },
                 [](C &c, const std::string &s) { c.planner.penalty_schedule = parse_list(s); }});
    f.push_back(integer("planner", "max_inner_iterations", &C::planner, &PlanConfig::max_inner_iterations));
    f.push_back(real("planner", "armijo_c", &C::planner, &PlanConfig::armijo_c));
    f.push_back(integer("planner", "max_backtracks", &C::planner, &PlanConfig::max_backtracks));
    f.push_back(integer("planner", "memory", &C::planner, &PlanConfig::memory));
    f.push_back(integer("planner", "recovery_stages", &C::planner, &PlanConfig::recovery_stages));
    f.push_back(real("planner", "time_cap_ms", &C::planner, &PlanConfig::time_cap_ms));
    f.push_back(real("planner", "tolerance", &C::planner, &PlanConfig::tolerance));
    f.push_back(real("planner", "penalty_buffer", &C::planner, &PlanConfig::penalty_buffer));
    f.push_back(real("planner", "gradient_tolerance", &C::planner, &PlanConfig::gradient_tolerance));
    f.push_back(real("planner", "brake_decel", &C::planner, &PlanConfig::brake_decel));
    f.push_back({"planner", "deadlock_steps", [](const C &c) { return std::to_string(c.deadlock_steps); },
                 [](C &c, const std::string &s) { c.deadlock_steps = static_cast<int>(parse_int(s)); }});

    f.push_back(integer("batch", "base_seed", &C::batch, &BatchConfig::base_seed));
    f.push_back(integer("batch", "scenarios", &C::batch, &BatchConfig::scenarios));
    f.push_back(integer("batch", "parallel", &C::batch, &BatchConfig::parallel));
    f.push_back({"batch", "timing_isolated", [](const C &c) { return std::string(c.batch.timing_isolated ? "true" : "false"); },
                 [](C &c, const std::string &s) { c.batch.timing_isolated = parse_bool(s); }});
    return f;
  }();
  return all;
}

// Planner dt and control limits follow the world.
void sync(StudyConfig &c) {
  c.planner.dt = c.world.dt;
  c.planner.limits = c.world.limits;
  c.calibration.window = c.library.window;
  c.calibration.horizon = c.planner.prediction_horizon;
}

} // namespace

void StudyConfig::validate() const {
  try {
    world.validate();
    router.validate();
    planner.validate();
    (void)proximity.as_router(router);
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
  if (scenario.count_min < 0 || scenario.count_max < scenario.count_min || scenario.warmup_steps < 0) {
    throw ConfigError("config: scenario counts or warm-up invalid");
  }
  if (library.rollouts < 1 || library.window < 1 || library.stride < 1 ||
      library.steps < library.window + planner.prediction_horizon) {
    throw ConfigError("config: library too small for W + H");
  }
  if (calibration.n_rollouts < 1 || calibration.samples_per_rollout < 1 ||
      calibration.rollout_steps < library.window + planner.prediction_horizon) {
    throw ConfigError("config: calibration rollouts too short or empty");
  }
  if (library.seed == calibration.seed) {
    throw ConfigError("config: library and calibration seeds must differ");
  }
  if (k < 1 || work_multiplier < 1) {
    throw ConfigError("config: k and work_multiplier must be >= 1");
  }
  if (!(conformal.delta > 0.0 && conformal.delta < 1.0) || conformal.m_max < 1) {
    throw ConfigError("config: delta must lie in (0, 1) and m_max >= 1");
  }
  if (deadlock_steps < 1 || batch.scenarios < 0 || batch.parallel < 1) {
    throw ConfigError("config: deadlock_steps, scenarios or parallel invalid");
  }
}

StudyConfig default_config() {
  StudyConfig c;
  c.calibration.seed = 22;
  c.calibration.n_rollouts = 2000;
  // Desk-scale study: slow obstacles with a bounded weave, so that dense scenes stay navigable.
  c.world.obstacles.speed_min = 0.05;
  c.world.obstacles.speed_max = 0.2;
  c.world.obstacles.weave_lateral_speed_max = 0.5;
  // With PAT near zero for most obstacles ahead, psi sits at 0.5 or above; these bands
  // keep level 0 meaningful.
  c.router.theta1 = 0.65;
  c.router.theta2 = 0.75;
  // Iteration budgets bound the solver; a CPU-time cap would make trials timing dependent.
  c.planner.time_cap_ms = 0.0;
  if (const char *p = std::getenv("HYPRAP_PARALLEL")) {
    try {
      c.batch.parallel = static_cast<int>(parse_int(p));
    } catch (const std::exception &) {
      throw ConfigError(std::string("HYPRAP_PARALLEL: not an integer: ") + p);
    }
  }
  sync(c);
  return c;
}

StudyConfig parse_config(std::istream &in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  StudyConfig c = default_config();
  for (const auto &[section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config: key '" + section + "' outside any section");
    }
    for (const auto &[key, value] : body) {
      const Field *match = nullptr;
      for (const Field &f : fields()) {
        if (section == f.section && key == f.key) {
          match = &f;
        }
      }
      if (match == nullptr) {
        throw ConfigError("config: unknown key [" + section + "] " + key);
      }
      try {
        match->set(c, value.data());
      } catch (const std::exception &e) {
        throw ConfigError("config: bad value for [" + section + "] " + key + " = '" + value.data() + "': " + e.what());
      }
    }
  }
  sync(c);
  c.validate();
  return c;
}

StudyConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("config: cannot open " + path);
  }
  return parse_config(in);
}

void write_config(std::ostream &out, const StudyConfig &config) {
  std::string current;
  for (const Field &f : fields()) {
    if (current != f.section) {
      out << (current.empty() ? "" : "\n") << '[' << f.section << "]\n";
      current = f.section;
    }
    out << f.key << " = " << f.get(config) << '\n';
  }
}

TrialOptions trial_options(const StudyConfig &config, Architecture architecture) {
  TrialOptions o;
  o.architecture = architecture;
  o.router = config.router;
  o.proximity = config.proximity;
  o.planner = config.planner;
  o.predictors.k = config.k;
  o.predictors.work_multiplier = config.work_multiplier;
  o.predictors.workspace = config.world.workspace;
  o.deadlock_steps = config.deadlock_steps;
  return o;
}

} // namespace hyprap
