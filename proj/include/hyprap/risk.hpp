#pragma once

#include "hyprap/geometry.hpp"
#include "hyprap/predictors.hpp"

#include <limits>
#include <span>
#include <vector>

namespace hyprap {

/// Sentinel for an undefined approach time (relative velocity ~ 0).
inline constexpr double kNoApproach = std::numeric_limits<double>::infinity();

struct RouterConfig {
  double theta1 = 0.3;  // below: level 0
  double theta2 = 0.7;  // at or above: level 1
  double w_distance = 0.5;
  double w_time = 0.5;
  double d0 = 2.0;   // m
  double tau0 = 3.0; // s
  double hysteresis_margin = 0.05;
  int dwell_steps = 3;

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

/// Approach distances and times over h = 0..H.
struct ApproachProfile {
  std::vector<double> pad;
  std::vector<double> pat;
};

/// Band rank: 0 = level 0, 1 = level 2, 2 = level 1.
struct HysteresisState {
  bool initialized = false;
  PredictorLevel level = PredictorLevel::simple;
  int below_count = 0;
};

struct RiskAssessment {
  double psi = 0.0;
  PredictorLevel route = PredictorLevel::simple;
  std::vector<double> per_h_scores;
  HysteresisState hysteresis;
};

std::vector<double> compute_pad(std::span<const Vec2> agent_plan, std::span<const Vec2> obstacle_pred);

/// Approach time for one pair of positions and velocities (kNoApproach when degenerate).
double approach_time(const Vec2 &p_agent, const Vec2 &v_agent, const Vec2 &p_obstacle,
                     const Vec2 &v_obstacle);

/// Velocities by backward difference; the h = 0 entry reuses the first difference.
std::vector<double> compute_pat(std::span<const Vec2> agent_plan, std::span<const Vec2> obstacle_pred,
                                double dt);

ApproachProfile approach_profile(std::span<const Vec2> agent_plan, std::span<const Vec2> obstacle_pred,
                                 double dt);

/// Temporal-urgency transform g2: double-sided exponential, 0 at the sentinel.
double time_urgency(double pat, double tau0);

/// Per-h weighted sum of exp(-PAD/d0) and exp(-|PAT|/tau0).
std::vector<double> pcri_per_h(const ApproachProfile &profile, const RouterConfig &config);

/// psi = max over h of the per-h scores, in [0, 1].
double compute_pcri(const ApproachProfile &profile, const RouterConfig &config);

/// Band of psi with no hysteresis.
PredictorLevel base_band(double psi, const RouterConfig &config);

struct RouteResult {
  PredictorLevel level = PredictorLevel::simple;
  HysteresisState state;
};

/// Upgrades toward level 1 apply at once; downgrades need psi below the current band's lower
/// threshold minus the margin for `dwell_steps` consecutive calls.
RouteResult route(double psi, const HysteresisState &previous, const RouterConfig &config);

/// Distance-only risk exp(-distance / d0).
double proximity_risk(double distance, const RouterConfig &config);

} // namespace hyprap
