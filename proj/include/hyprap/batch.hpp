#pragma once

#include "hyprap/artifacts.hpp"
#include "hyprap/config.hpp"
#include "hyprap/harness.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hyprap {

inline constexpr int kTrialsCsvVersion = 1;
inline constexpr int kStepsCsvVersion = 1;

/// One configured architecture in a batch. Labels must be unique within a batch.
struct Arm {
  std::string label;
  TrialOptions options;
};

struct TrialResult {
  std::string label;
  TrialMetrics metrics;
  std::string error; // non-empty when the trial threw; metrics then hold only seed and architecture
};

struct BatchOptions {
  int parallelism = 1;
  bool timing_isolated = false; // forces sequential execution
  bool keep_steps = true;       // retain per-step records (needed for the steps CSV and M_t curves)
};

/// base_seed, base_seed + 1, ...
std::vector<std::uint64_t> default_seeds(const StudyConfig &config);

/// One line per seed; blank lines and '#' comments skipped. Throws ConfigError.
std::vector<std::uint64_t> read_seeds(std::istream &in);

std::vector<ScenarioSpec> make_specs(const StudyConfig &config, const std::vector<std::uint64_t> &seeds);

/// Options for `architecture` wired to the loaded artifacts. The artifacts must outlive the arm.
Arm make_arm(const StudyConfig &config, const Artifacts &artifacts, Architecture architecture,
             std::string label = {});

/// Every spec against every arm. Results are ordered spec-major, arm-minor, independent of
/// parallelism. A throwing trial is recorded and the batch continues.
std::vector<TrialResult> run_batch(const std::vector<ScenarioSpec> &specs, const std::vector<Arm> &arms,
                                   int horizon, const BatchOptions &options);

// Trials CSV: a "# hyprap-trials v1" line, a header, then one row per trial. The two timing
// columns (prediction_time, mpc_time) come last; every other column is deterministic.
void write_trials_csv(std::ostream &out, const std::vector<TrialResult> &results);
std::vector<TrialResult> read_trials_csv(std::istream &in);

// Steps CSV: "# hyprap-steps v1", header, one row per executed step. Timing columns last.
void write_steps_csv(std::ostream &out, const std::vector<TrialResult> &results);
/// Attaches step rows to the matching (label, seed) trials.
void read_steps_csv(std::istream &in, std::vector<TrialResult> &results);

/// Drops the timing columns, for determinism comparisons.
std::string strip_timing_columns(const std::string &csv);

struct ArmSummary {
  std::string label;
  Architecture architecture = Architecture::hyprap;
  int trials = 0;
  int errors = 0;
  double success_rate = 0.0; // percent of trials
  double collision_rate = 0.0;
  double deadlock_rate = 0.0;
  double timeout_rate = 0.0;
  double travel_mean = 0.0; // over successful trials only
  double travel_std = 0.0;
  long steps = 0;
  double prediction_time_per_step = 0.0; // s
  double mpc_time_per_step = 0.0;
  long calls_l0 = 0;
  long calls_l1 = 0;
  long calls_l2 = 0;
  double mean_constrained = 0.0;
  long feasible_steps = 0;
  long safe_steps = 0;
  double safety = 1.0; // safe_steps / feasible_steps

  long model_calls() const { return calls_l1 + calls_l2; }
};

struct TimingPoint {
  std::string label;
  int constrained = 0; // M_t
  long steps = 0;
  double prediction_time = 0.0; // mean per step, s
  double mpc_time = 0.0;
};

struct BatchReport {
  std::vector<ArmSummary> arms;   // in first-appearance order
  std::vector<TimingPoint> timing; // per label, ascending M_t

  const ArmSummary &arm(const std::string &label) const;
};

class ReportError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Throws ReportError on empty input.
BatchReport aggregate_report(const std::vector<TrialResult> &results);

/// summary.csv, proximity.csv (success and calls per level), timing_by_mt.csv, report.json and two SVG charts.
void write_report(const std::filesystem::path &dir, const BatchReport &report);

/// trials.csv and steps.csv under `dir`.
void write_batch(const std::filesystem::path &dir, const std::vector<TrialResult> &results);
/// Reads trials.csv and, when present, steps.csv.
std::vector<TrialResult> read_batch(const std::filesystem::path &dir);

struct TradeoffPoint {
  int m1 = 0;
  int m2 = 0;
  long steps = 0;                // steps with the full allocation available
  double prediction_time = 0.0;  // mean per step, s
  double total_time = 0.0;       // prediction + MPC
  double accuracy = 0.0;         // E
  double theory = 0.0;           // M1 dT1 + M2 dT2
};

struct TradeoffResult {
  std::vector<TradeoffPoint> points;
  double dt1 = 0.0; // s per call, measured in isolation
  double dt2 = 0.0;
  double slope = 0.0; // least-squares fit of prediction_time on M1
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Tradeoff study: HyPRAP with the router bypassed and the `total` riskiest obstacles forced into the
/// given (M1, M2) split; sequential, timed on `seeds`.
TradeoffResult tradeoff_study(const StudyConfig &config, const Artifacts &artifacts, int total,
                              const std::vector<std::pair<int, int>> &allocations,
                              const std::vector<std::uint64_t> &seeds);

void write_tradeoff_csv(std::ostream &out, const TradeoffResult &result);

/// Mean seconds per predict() call at `level` over calibration histories.
double measure_call_time(const StudyConfig &config, const Artifacts &artifacts, PredictorLevel level,
                         int calls);

enum class SweepTarget { calls, success };

SweepTarget parse_sweep_target(const std::string &name);

struct SweepPoint {
  double outer_radius = 0.0;
  double inner_ratio = 0.0;
  ArmSummary summary;
};

struct SweepResult {
  SweepTarget target = SweepTarget::calls;
  ArmSummary reference;              // HyPRAP on the same seeds
  std::vector<SweepPoint> evaluated; // in evaluation order
  std::size_t chosen = 0;            // best matched point, else the closest miss
  bool matched = false;              // chosen lies within tolerance
  std::vector<TrialResult> chosen_trials;
};

struct SweepOptions {
  double radius_min = 0.5; // m
  double radius_max = 10.0;
  int max_evaluations = 10;
  double calls_tolerance = 0.05; // relative
  double success_tolerance = 1.0; // points
  std::vector<double> inner_ratios; // one bisection per ratio; empty: the config's ratio
};

/// Bisection on the proximity outer radius, once per inner ratio, until the target lands within
/// tolerance of the reference: total model calls (Prox.A) or success rate (Prox.B). Among matched
/// points the baseline's best is kept: highest success for Prox.A, fewest calls for Prox.B.
SweepResult proximity_sweep(const StudyConfig &config, const Artifacts &artifacts,
                            const std::vector<ScenarioSpec> &specs, SweepTarget target,
                            const ArmSummary &reference, const SweepOptions &options = {});

void write_sweep_csv(std::ostream &out, const SweepResult &result);

} // namespace hyprap
