#pragma once

#include "hyprap/conformal.hpp"
#include "hyprap/planner.hpp"
#include "hyprap/predictors.hpp"
#include "hyprap/risk.hpp"
#include "hyprap/sim_env.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hyprap {

enum class Architecture : std::uint8_t { sp1, hyprap, sp2, prox_a, prox_b };

const char *to_string(Architecture a);
/// Accepts SP1, HYPRAP, SP2, PROX_A, PROX_B (case-insensitive).
Architecture parse_architecture(const std::string &name);

/// Distance-only routing: level 2 inside outer_radius, level 1 inside inner_ratio * outer_radius.
struct ProximityRule {
  double outer_radius = 3.0; // m
  double inner_ratio = 0.5;

  /// The same bands expressed as thresholds on exp(-d / d0).
  RouterConfig as_router(const RouterConfig &base) const;
};

struct ScenarioSpec {
  std::uint64_t seed = 0;
  int obstacle_count = -1; // < 0: drawn from [count_min, count_max] by the seed
  int count_min = 20;
  int count_max = 50;
  double start_clearance = 2.0; // m, from every obstacle to start and goal
  int warmup_steps = 10;        // observation before departure; tracks begin at -warmup_steps
  WorldConfig world{};
};

struct Scenario {
  WorldConfig world;
  AgentState start;
  int warmup_steps = 0;
  // Obstacle motion does not react to the agent, so the full ground truth is simulated up front.
  std::vector<ObstacleTrack> tracks;
};

class ScenarioInfeasible : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Start at x = 1, goal at x = 19, both at random heights; obstacles placed by rejection
/// sampling (10^4 attempts each) at step -warmup_steps and simulated through max_steps + horizon + 1.
Scenario generate_scenario(const ScenarioSpec &spec, int horizon);

/// Forced allocation for the tradeoff study: the `total` highest-psi sensed obstacles are constrained, the
/// `accurate` riskiest of them at level 1 and the rest at level 2.
struct ForcedAllocation {
  int total = 8;
  int accurate = 0;
};

struct TrialOptions {
  Architecture architecture = Architecture::hyprap;
  RouterConfig router{};
  ProximityRule proximity{};
  PlanConfig planner{};
  PredictorSettings predictors{};
  const EpsilonTable *table = nullptr;
  int deadlock_steps = 20;
  std::optional<ForcedAllocation> forced;
  bool record_obstacles = false;  // per-obstacle entries in StepRecord
  bool collect_safety = true;
};

struct ObstacleRecord {
  int id = 0;
  double psi = 0.0;
  int level = 0; // routed level
  int used = 0;  // predictor actually run for constrained obstacles
  bool fallback = false;
};

struct StepRecord {
  int t = 0;
  int sensed = 0;  // N_t
  int constrained = 0; // M_t
  int m1 = 0;
  int m2 = 0;
  PlanStatus status = PlanStatus::optimal;
  bool braking = false;
  double violation = 0.0;
  double cost = 0.0;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double final_penalty = 0.0;
  double accuracy = 1.0; // E at this step; 1 when nothing is constrained
  bool full_allocation = false;
  double prediction_time = 0.0; // s
  double mpc_time = 0.0;        // s
  AgentState agent;
  std::vector<ObstacleRecord> obstacles;
};

struct TrialMetrics {
  std::uint64_t seed = 0;
  Architecture architecture = Architecture::hyprap;
  int obstacle_count = 0;
  bool success = false;
  bool collision = false;
  bool deadlock = false;
  bool timeout = false;
  int travel_steps = 0;
  long calls_l0 = 0;
  long calls_l1 = 0;
  long calls_l2 = 0;
  long fallback_calls = 0;
  double mean_constrained = 0.0;
  int max_constrained = 0;
  double mean_accuracy = 1.0; // E averaged over steps with M_t >= 1
  int feasible_steps = 0;
  int safe_steps = 0;      // feasible steps whose plan clears the realized constrained obstacles
  int safe_steps_all = 0;  // same check against every obstacle
  int fallback_steps = 0;
  int clamped_lookups = 0;
  double prediction_time = 0.0; // s, summed over steps
  double mpc_time = 0.0;
  std::vector<StepRecord> steps;
};

/// E = (M1 exp(-eps1) + M2 exp(-eps2)) / (M1 + M2). Throws std::invalid_argument when M1 + M2 = 0.
double compute_E(int m1, int m2, double eps_tilde_1, double eps_tilde_2);

/// Algorithm 1 on one scenario.
TrialMetrics run_scenario(const Scenario &scenario, std::uint64_t seed, const TrialOptions &options);

/// One JSON object per step.
void write_trace(std::ostream &out, const TrialMetrics &metrics);

} // namespace hyprap
