#include "hyprap/risk.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hyprap {

namespace {

constexpr double kMinRelativeSpeedSq = 1e-6; // (m/s)^2

int band_rank(PredictorLevel l) {
  switch (l) {
  case PredictorLevel::simple:
    return 0;
  case PredictorLevel::fast:
    return 1;
  case PredictorLevel::accurate:
    return 2;
  }
  return 0;
}

void check_lengths(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("approach profile: agent and obstacle sequences must have equal, "
                                "non-zero length");
  }
}

std::vector<Vec2> backward_velocities(std::span<const Vec2> p, double dt) {
  std::vector<Vec2> v(p.size());
  for (std::size_t h = 1; h < p.size(); ++h) {
    v[h] = (p[h] - p[h - 1]) * (1.0 / dt);
  }
  if (p.size() > 1) {
    v[0] = v[1];
  }
  return v;
}

} // namespace

void RouterConfig::validate() const {
  if (!(theta1 > 0.0 && theta1 < theta2 && theta2 < 1.0)) {
    throw std::invalid_argument("router config: need 0 < theta1 < theta2 < 1");
  }
  if (w_distance < 0.0 || w_time < 0.0 || std::abs(w_distance + w_time - 1.0) > 1e-9) {
    throw std::invalid_argument("router config: weights must be non-negative and sum to 1");
  }
  if (!(d0 > 0.0) || !(tau0 > 0.0)) {
    throw std::invalid_argument("router config: d0 and tau0 must be positive");
  }
  if (!(hysteresis_margin >= 0.0 && hysteresis_margin < theta1)) {
    throw std::invalid_argument("router config: hysteresis margin must lie in [0, theta1)");
  }
  if (dwell_steps < 1) {
    throw std::invalid_argument("router config: dwell steps must be >= 1");
  }
}

std::vector<double> compute_pad(std::span<const Vec2> agent_plan, std::span<const Vec2> obstacle_pred) {
  check_lengths(agent_plan, obstacle_pred);
  std::vector<double> pad(agent_plan.size());
  for (std::size_t h = 0; h < pad.size(); ++h) {
    pad[h] = distance(agent_plan[h], obstacle_pred[h]);
  }
  return pad;
}

double approach_time(const Vec2 &p_agent, const Vec2 &v_agent, const Vec2 &p_obstacle,
                     const Vec2 &v_obstacle) {
  const Vec2 dv = v_agent - v_obstacle;
  const double denom = squared_norm(dv);
  if (denom < kMinRelativeSpeedSq) {
    return kNoApproach;
  }
  return dot(p_obstacle - p_agent, dv) / denom;
}

std::vector<double> compute_pat(std::span<const Vec2> agent_plan, std::span<const Vec2> obstacle_pred,
                                double dt) {
  check_lengths(agent_plan, obstacle_pred);
  const auto va = backward_velocities(agent_plan, dt);
  const auto vk = backward_velocities(obstacle_pred, dt);
  std::vector<double> pat(agent_plan.size());
  for (std::size_t h = 0; h < pat.size(); ++h) {
    pat[h] = approach_time(agent_plan[h], va[h], obstacle_pred[h], vk[h]);
  }
  return pat;
}

ApproachProfile approach_profile(std::span<const Vec2> agent_plan, std::span<const Vec2> obstacle_pred,
                                 double dt) {
  return {compute_pad(agent_plan, obstacle_pred), compute_pat(agent_plan, obstacle_pred, dt)};
}

double time_urgency(double pat, double tau0) {
  if (!std::isfinite(pat)) {
    return 0.0;
  }
  return std::exp(-std::abs(pat) / tau0);
}

std::vector<double> pcri_per_h(const ApproachProfile &profile, const RouterConfig &config) {
  if (profile.pad.size() != profile.pat.size()) {
    throw std::invalid_argument("pcri: PAD and PAT lengths differ");
  }
  std::vector<double> out(profile.pad.size());
  for (std::size_t h = 0; h < out.size(); ++h) {
    const double g1 = std::isfinite(profile.pad[h]) ? std::exp(-profile.pad[h] / config.d0) : 0.0;
    const double g2 = time_urgency(profile.pat[h], config.tau0);
    out[h] = std::clamp(config.w_distance * g1 + config.w_time * g2, 0.0, 1.0);
  }
  return out;
}

double compute_pcri(const ApproachProfile &profile, const RouterConfig &config) {
  const auto per_h = pcri_per_h(profile, config);
  return per_h.empty() ? 0.0 : *std::max_element(per_h.begin(), per_h.end());
}

PredictorLevel base_band(double psi, const RouterConfig &config) {
  if (psi >= config.theta2) {
    return PredictorLevel::accurate;
  }
  if (psi >= config.theta1) {
    return PredictorLevel::fast;
  }
  return PredictorLevel::simple;
}

RouteResult route(double psi, const HysteresisState &previous, const RouterConfig &config) {
  const PredictorLevel base = base_band(psi, config);
  if (!previous.initialized || band_rank(base) >= band_rank(previous.level)) {
    return {base, {true, base, 0}};
  }
  const double lower = previous.level == PredictorLevel::accurate ? config.theta2 : config.theta1;
  if (psi < lower - config.hysteresis_margin) {
    const int count = previous.below_count + 1;
    if (count >= config.dwell_steps) {
      return {base, {true, base, 0}};
    }
    return {previous.level, {true, previous.level, count}};
  }
  return {previous.level, {true, previous.level, 0}};
}

double proximity_risk(double d, const RouterConfig &config) {
  if (!std::isfinite(d)) {
    return 0.0;
  }
  return std::exp(-std::max(d, 0.0) / config.d0);
}

} // namespace hyprap
