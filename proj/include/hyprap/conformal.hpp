#pragma once

#include "hyprap/geometry.hpp"
#include "hyprap/predictors.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hyprap {

class CalibrationInfeasible : public std::runtime_error {
public:
  CalibrationInfeasible(const std::string &what, std::size_t required_n)
      : std::runtime_error(what), required_n_(required_n) {}
  std::size_t required_n() const { return required_n_; }

private:
  std::size_t required_n_;
};

/// How the total failure budget delta is split per (obstacle, step).
enum class BudgetMode : std::uint8_t {
  per_count = 0,   // delta / (M * H) for the table row M
  worst_case = 1,  // delta / (M_max * H) for every row
};

struct FailureBudget {
  double delta = 0.05;
  int horizon = 30;
  int obstacle_count = 1;

  double delta_bar() const {
    return delta / (static_cast<double>(obstacle_count) * static_cast<double>(horizon));
  }
  void validate() const;
};

inline double nonconformity_score(const Vec2 &truth, const Vec2 &predicted) {
  return distance(truth, predicted);
}

/// Split-conformal rank r = ceil((n + 1)(1 - delta_bar)).
std::size_t conformal_rank(std::size_t n, double delta_bar);

/// Smallest n for which the rank is achievable at delta_bar.
std::size_t required_calibration_size(double delta_bar);

/// r-th smallest score; throws CalibrationInfeasible when r > n.
double calibrate_radius(std::span<const double> scores, double delta_bar);

/// epsilon[level][M][h] for level in {1, 2}, M in 1..M_max, h in 1..H.
class EpsilonTable {
public:
  EpsilonTable() = default;
  EpsilonTable(int m_max, int horizon, double delta, std::size_t n_calibration, std::uint64_t seed,
               BudgetMode mode = BudgetMode::per_count);

  int m_max() const { return m_max_; }
  int horizon() const { return horizon_; }
  double delta() const { return delta_; }
  std::size_t calibration_size() const { return n_; }
  std::uint64_t seed() const { return seed_; }
  BudgetMode mode() const { return mode_; }
  bool empty() const { return values_.empty(); }

  double &at(PredictorLevel level, int m, int h);
  double at(PredictorLevel level, int m, int h) const;

  /// Average over h of one row: the mean conformal radius of a predictor at count M.
  double mean_radius(PredictorLevel level, int m) const;

  const std::vector<double> &raw() const { return values_; }
  std::vector<double> &raw() { return values_; }

private:
  std::size_t index(PredictorLevel level, int m, int h) const;

  int m_max_ = 0;
  int horizon_ = 0;
  double delta_ = 0.0;
  std::size_t n_ = 0;
  std::uint64_t seed_ = 0;
  BudgetMode mode_ = BudgetMode::per_count;
  std::vector<double> values_;
};

/// Per-step nonconformity scores of one level: scores[h-1][i].
std::vector<std::vector<double>> horizon_scores(std::span<const CalibrationPair> pairs, int horizon);

EpsilonTable build_epsilon_table(const CalibrationSet &calibration, double delta, int horizon,
                                 int m_max, BudgetMode mode = BudgetMode::per_count);

struct EpsilonLookup {
  double value = 0.0;
  bool clamped = false; // M_t exceeded the table width
};

/// Throws std::invalid_argument for level 0 or h outside 1..H.
EpsilonLookup lookup_epsilon(const EpsilonTable &table, PredictorLevel level, int m_t, int h);

struct BoundValue {
  double value = 0.0;
  bool trivial = false; // value <= 0: the bound says nothing
};

/// Union bound over M_t per-obstacle events.
BoundValue bonferroni_bound(int m_t, double delta_bar);
/// Product bound for independent (non-interacting) obstacles.
BoundValue independent_bound(int m_t, double delta_bar);
/// Level-1 obstacles all covered and at least ceil(alpha * M2) level-2 obstacles covered.
BoundValue partial_coverage_bound(int m1, int m2, double alpha, double delta_bar);

struct CoverageReport {
  std::vector<double> per_h;       // marginal coverage per h (or joint-over-group per h)
  double min_per_h = 1.0;
  double horizon_joint = 1.0;      // all h simultaneously (and all group members when joint)
  std::size_t samples = 0;         // examples, or groups when joint
  double target_marginal = 0.0;    // 1 - delta_bar
  double target_bonferroni = 0.0;  // union bound for the group
  double target_independent = 0.0;
  double delta_bar = 0.0;
};

/// Checks holdout pairs against the table row for M. With `joint`, consecutive groups of M
/// examples are treated as M simultaneously predicted obstacles.
CoverageReport empirical_coverage(std::span<const CalibrationPair> holdout, const EpsilonTable &table,
                                  PredictorLevel level, int m, bool joint);

} // namespace hyprap
