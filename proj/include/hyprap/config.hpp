#pragma once

#include "hyprap/conformal.hpp"
#include "hyprap/harness.hpp"
#include "hyprap/planner.hpp"
#include "hyprap/risk.hpp"
#include "hyprap/sim_env.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace hyprap {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct LibraryConfig {
  std::uint64_t seed = 11;
  int rollouts = 1000;
  int steps = 440;
  int window = 10;
  int stride = 10;
};

struct ConformalConfig {
  double delta = 0.05;
  int m_max = 16;
  BudgetMode mode = BudgetMode::per_count;
  std::string artifact_dir = "artifacts";
};

struct BatchConfig {
  std::uint64_t base_seed = 1000;
  int scenarios = 200;
  int parallel = 1;
  bool timing_isolated = false;
};

/// Everything a study needs; loaded from an INI file with sections
/// [world] [obstacles] [scenario] [library] [calibration] [predictors] [conformal] [router]
/// [proximity] [planner] [batch].
struct StudyConfig {
  WorldConfig world{};
  ScenarioSpec scenario{};
  LibraryConfig library{};
  CalibrationOptions calibration{};
  int k = 5;
  int work_multiplier = 1;
  ConformalConfig conformal{};
  RouterConfig router{};
  ProximityRule proximity{};
  PlanConfig planner{};
  int deadlock_steps = 20;
  BatchConfig batch{};

  /// Cross-field checks (H <= T, calibration horizon covers H, ...). Throws ConfigError.
  void validate() const;
};

/// Built-in defaults; HYPRAP_PARALLEL overrides batch.parallel when set.
StudyConfig default_config();

/// Defaults overlaid with the file. Unknown sections or keys are rejected. Throws ConfigError.
StudyConfig load_config(const std::string &path);
StudyConfig parse_config(std::istream &in);

/// Writes every field, so the output reloads to an identical config.
void write_config(std::ostream &out, const StudyConfig &config);

/// Study defaults wired into run_scenario options.
TrialOptions trial_options(const StudyConfig &config, Architecture architecture);

} // namespace hyprap
