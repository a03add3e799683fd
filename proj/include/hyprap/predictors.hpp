#pragma once

#include "hyprap/geometry.hpp"
#include "hyprap/sim_env.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace hyprap {

/// Predictor levels. 1 is the accurate/slow predictor, 2 the fast/coarse one,
/// 0 the simple model used only to keep risk assessment defined.
enum class PredictorLevel : int { simple = 0, accurate = 1, fast = 2 };

inline int level_index(PredictorLevel l) { return static_cast<int>(l); }
const char *to_string(PredictorLevel l);

struct PredictedTrajectory {
  int obstacle_id = 0;
  PredictorLevel level = PredictorLevel::simple;
  int base_time = 0;
  std::vector<Vec2> points; // h = 1..H
  std::vector<double> radii; // conformal radii per h, empty for level 0
  bool fallback = false;     // requested level could not run; a simpler model was used
};

/// Translation-invariant motion segments: W history increments and H future increments.
struct TrajectoryLibrary {
  int window = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
  std::vector<double> history; // size() * 2W, interleaved x,y
  std::vector<double> future;  // size() * 2H

  std::size_t size() const {
    return window > 0 ? history.size() / (2 * static_cast<std::size_t>(window)) : 0;
  }
  bool empty() const { return size() == 0; }
};

struct LibraryBuildStats {
  std::size_t segments = 0;
  std::size_t short_rollouts = 0;      // shorter than W+H steps
  std::size_t reflected_windows = 0;   // windows dropped because they contain a wall bounce
};

/// Slices every W+H step window (stride `stride`) out of each rollout. Windows that contain a
/// wall reflection are dropped so that the library holds free-space motion only.
TrajectoryLibrary build_library(std::span<const ObstacleTrack> rollouts, int window, int horizon,
                                int stride, LibraryBuildStats *stats = nullptr);

/// Extrapolates the mean of the last min(3, available) increments. One point yields a
/// stationary prediction.
std::vector<Vec2> predict_const_velocity(std::span<const Vec2> history, int horizon);

/// k-nearest-neighbour retrieval over history increments; averages the neighbours' future
/// increments and integrates them from the current position. Only the last W+1 points of
/// `history` are used. `repeat` re-runs the neighbour scan to scale the cost deterministically.
std::vector<Vec2> predict_knn(const TrajectoryLibrary &library, std::span<const Vec2> history,
                              int k, int horizon, int repeat = 1);

struct PredictorSettings {
  const TrajectoryLibrary *library = nullptr;
  int k = 5;
  int work_multiplier = 1;
  std::optional<Bounds> workspace; // fold predictions back inside known walls
};

struct Prediction {
  std::vector<Vec2> points;
  PredictorLevel used = PredictorLevel::simple;
  bool fallback = false;
};

/// Dispatches to the level's predictor. Level 1 with too little history (or no library)
/// falls back to the constant-velocity model and reports `used = fast`.
Prediction predict(PredictorLevel level, std::span<const Vec2> history, int horizon,
                   const PredictorSettings &settings);

/// One calibration example: prediction and ground truth over h = 1..H.
struct CalibrationPair {
  std::vector<Vec2> predicted;
  std::vector<Vec2> truth;
};

struct CalibrationSet {
  int horizon = 0;
  std::uint64_t seed = 0;
  std::vector<CalibrationPair> accurate; // level 1
  std::vector<CalibrationPair> fast;     // level 2

  const std::vector<CalibrationPair> &pairs(PredictorLevel l) const;
  std::vector<CalibrationPair> &pairs(PredictorLevel l);
};

struct CalibrationOptions {
  std::uint64_t seed = 1;
  int n_rollouts = 0;
  int samples_per_rollout = 5;
  int rollout_steps = 440;
  int window = 10;
  int horizon = 30;
};

/// Simulates independent obstacle-only rollouts drawn from the scenario pattern distribution.
std::vector<ObstacleTrack> simulate_rollouts(const WorldConfig &world, std::uint64_t seed,
                                             int n_rollouts, int steps);

/// Runs the requested levels at sampled times of fresh rollouts and records (prediction, truth).
CalibrationSet generate_calibration_set(const WorldConfig &world, const CalibrationOptions &opts,
                                        const PredictorSettings &settings,
                                        std::span<const PredictorLevel> levels);

/// Mean thread CPU time per call in seconds over `calls` invocations on sampled histories.
double prediction_cost(PredictorLevel level, const PredictorSettings &settings,
                       std::span<const ObstacleTrack> rollouts, int horizon, int calls = 1000);

struct PredictionCosts {
  double accurate = 0.0; // Delta T^1, seconds per call
  double fast = 0.0;     // Delta T^2
};

/// Measures both levels; throws std::runtime_error unless accurate > fast.
PredictionCosts measure_prediction_costs(const PredictorSettings &settings,
                                         std::span<const ObstacleTrack> rollouts, int horizon,
                                         int calls = 1000);

} // namespace hyprap
