#include "hyprap/artifacts.hpp"
#include "hyprap/batch.hpp"
#include "hyprap/config.hpp"
#include "hyprap/harness.hpp"

#include "doctest.h"
#include "json.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace hyprap;

namespace {

// Small but feasible: delta 0.3 over H = 30 and M_max = 4 needs 399 calibration pairs.
StudyConfig small_config() {
  StudyConfig c = default_config();
  c.library.rollouts = 120;
  c.calibration.n_rollouts = 100;
  c.conformal.delta = 0.3;
  c.conformal.m_max = 4;
  c.batch.scenarios = 4;
  return c;
}

const Artifacts &small_artifacts() {
  static const Artifacts a = build_artifacts(small_config());
  return a;
}

std::filesystem::path scratch(const std::string &name) {
  auto p = std::filesystem::temp_directory_path() / ("hyprap_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string trials_text(const std::vector<TrialResult> &r) {
  std::ostringstream os;
  write_trials_csv(os, r);
  return os.str();
}

} // namespace

TEST_SUITE("harness") {

TEST_CASE("accuracy metric E") {
  CHECK(compute_E(4, 4, 0.01, 0.16) == doctest::Approx(0.92110).epsilon(1e-5));
  CHECK(compute_E(3, 0, 0.2, 0.9) == doctest::Approx(std::exp(-0.2)));
  CHECK(compute_E(2, 5, 0.0, 0.0) == 1.0);
  CHECK_THROWS_AS(compute_E(0, 0, 0.1, 0.2), std::invalid_argument);
  double prev = 2.0;
  for (int m1 = 8; m1 >= 0; --m1) {
    const double e = compute_E(m1, 8 - m1, 0.3, 0.7);
    CHECK(e < prev);
    CHECK(e > 0.0);
    CHECK(e <= 1.0);
    prev = e;
  }
}

TEST_CASE("scenario generation") {
  ScenarioSpec spec;
  spec.seed = 17;
  const auto a = generate_scenario(spec, 30);
  const auto b = generate_scenario(spec, 30);
  REQUIRE(a.tracks.size() == b.tracks.size());
  CHECK(a.tracks.size() >= 20);
  CHECK(a.tracks.size() <= 50);
  CHECK(a.start == b.start);
  for (std::size_t i = 0; i < a.tracks.size(); ++i) {
    CHECK(a.tracks[i].history == b.tracks[i].history);
    const Vec2 p0 = a.tracks[i].at(-spec.warmup_steps);
    CHECK(distance(p0, a.start.position()) >= spec.start_clearance);
    CHECK(distance(p0, a.world.goal) >= spec.start_clearance);
  }
  CHECK(a.start.x == doctest::Approx(1.0));
  CHECK(a.world.goal.x == doctest::Approx(19.0));

  spec.obstacle_count = 0;
  CHECK(generate_scenario(spec, 30).tracks.empty());
  spec.obstacle_count = 50;
  CHECK(generate_scenario(spec, 30).tracks.size() == 50);
  spec.obstacle_count = 3000;
  CHECK_THROWS_AS(generate_scenario(spec, 30), ScenarioInfeasible);
}

TEST_CASE("empty world succeeds without model calls") {
  const auto &art = small_artifacts();
  const StudyConfig c = small_config();
  ScenarioSpec spec = make_specs(c, {3}).front();
  spec.obstacle_count = 0;
  const auto sc = generate_scenario(spec, 30);
  for (Architecture a : {Architecture::sp1, Architecture::hyprap, Architecture::sp2, Architecture::prox_a}) {
    const auto m = run_scenario(sc, 3, make_arm(c, art, a).options);
    CHECK(m.success);
    CHECK(m.calls_l1 == 0);
    CHECK(m.calls_l2 == 0);
    CHECK(m.travel_steps <= c.world.max_steps);
  }
}

TEST_CASE("architectures route as declared and trials obey the metric invariants") {
  const auto &art = small_artifacts();
  const StudyConfig c = small_config();
  long hy1 = 0, hy2 = 0;
  for (std::uint64_t seed : {1000, 1001, 1002, 1003}) {
    const auto sc = generate_scenario(make_specs(c, {seed}).front(), 30);
    for (Architecture a : {Architecture::sp1, Architecture::hyprap, Architecture::sp2}) {
      Arm arm = make_arm(c, art, a);
      arm.options.record_obstacles = true;
      const auto m = run_scenario(sc, seed, arm.options);
      // SP1 asks only for level 1; short histories fall back to level 2 and are counted.
      if (a == Architecture::sp1) {
        CHECK(m.calls_l2 <= m.fallback_calls);
        for (const StepRecord &s : m.steps) {
          for (const ObstacleRecord &o : s.obstacles) {
            CHECK(o.level != 2);
          }
        }
      }
      if (a == Architecture::sp2) {
        CHECK(m.calls_l1 == 0);
      }
      if (a == Architecture::hyprap) {
        hy1 += m.calls_l1;
        hy2 += m.calls_l2;
      }
      if (m.success) {
        CHECK_FALSE(m.collision);
        CHECK_FALSE(m.deadlock);
        CHECK(m.travel_steps <= c.world.max_steps);
      }
      CHECK(m.success + m.collision + m.deadlock + m.timeout == 1);
      for (const StepRecord &s : m.steps) {
        CHECK(s.constrained == s.m1 + s.m2);
        CHECK(s.constrained <= s.sensed);
        int with_model = 0;
        for (const ObstacleRecord &o : s.obstacles) {
          with_model += o.level != 0;
          if (o.level == 0) {
            CHECK(o.used == 0);
          }
        }
        CHECK(with_model == s.constrained);
        CHECK(static_cast<int>(s.obstacles.size()) == s.sensed);
      }
    }
  }
  CHECK(hy1 > 0);
  CHECK(hy2 > 0);
}

TEST_CASE("forced allocation splits the riskiest obstacles") {
  const auto &art = small_artifacts();
  const StudyConfig c = small_config();
  Arm arm = make_arm(c, art, Architecture::hyprap);
  arm.options.forced = ForcedAllocation{8, 3};
  const auto m = run_scenario(generate_scenario(make_specs(c, {1004}).front(), 30), 1004, arm.options);
  int full = 0;
  for (const StepRecord &s : m.steps) {
    if (s.full_allocation) {
      ++full;
      CHECK(s.m1 + s.m2 == 8);
      CHECK(s.m1 <= 3);
    }
  }
  CHECK(full > 0);
}

TEST_CASE("trace is one JSON object per step") {
  const auto &art = small_artifacts();
  const StudyConfig c = small_config();
  Arm arm = make_arm(c, art, Architecture::hyprap);
  arm.options.record_obstacles = true;
  const auto m = run_scenario(generate_scenario(make_specs(c, {1001}).front(), 30), 1001, arm.options);
  std::ostringstream os;
  write_trace(os, m);
  std::istringstream is(os.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("t"));
    CHECK(j.contains("status"));
    CHECK(j.contains("obstacles"));
    ++n;
  }
  CHECK(n == m.steps.size());
}

TEST_CASE("batch shape, CSV round trip and determinism across parallelism") {
  const auto &art = small_artifacts();
  const StudyConfig c = small_config();
  const auto specs = make_specs(c, default_seeds(c));
  std::vector<Arm> arms;
  for (Architecture a : {Architecture::sp1, Architecture::hyprap, Architecture::sp2}) {
    arms.push_back(make_arm(c, art, a));
  }
  const auto one = run_batch({specs.front()}, arms, 30, {});
  CHECK(one.size() == 3);
  const std::string text = trials_text(one);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);

  BatchOptions serial, wide;
  wide.parallelism = 4;
  const auto a = run_batch(specs, arms, 30, serial);
  const auto b = run_batch(specs, arms, 30, wide);
  const auto again = run_batch(specs, arms, 30, serial);
  CHECK(strip_timing_columns(trials_text(a)) == strip_timing_columns(trials_text(b)));
  CHECK(strip_timing_columns(trials_text(a)) == strip_timing_columns(trials_text(again)));
  std::ostringstream sa, sb;
  write_steps_csv(sa, a);
  write_steps_csv(sb, b);
  CHECK(strip_timing_columns(sa.str()) == strip_timing_columns(sb.str()));

  std::istringstream in(trials_text(a));
  auto back = read_trials_csv(in);
  CHECK(trials_text(back) == trials_text(a));
  std::istringstream steps_in(sa.str());
  read_steps_csv(steps_in, back);
  std::ostringstream sc;
  write_steps_csv(sc, back);
  CHECK(sc.str() == sa.str());

  std::istringstream bad("# hyprap-trials v99\n");
  CHECK_THROWS_AS(read_trials_csv(bad), ReportError);
}

TEST_CASE("a failing trial is recorded and the batch continues") {
  const auto &art = small_artifacts();
  const StudyConfig c = small_config();
  auto specs = make_specs(c, {1000, 1001});
  specs[0].obstacle_count = 5000;
  const auto r = run_batch(specs, {make_arm(c, art, Architecture::hyprap)}, 30, {});
  REQUIRE(r.size() == 2);
  CHECK_FALSE(r[0].error.empty());
  CHECK(r[1].error.empty());
  const auto rep = aggregate_report(r);
  CHECK(rep.arms.front().errors == 1);
  CHECK(rep.arms.front().trials == 2);
}

TEST_CASE("aggregate report conventions") {
  TrialResult ok;
  ok.label = "HYPRAP";
  ok.metrics.success = true;
  ok.metrics.travel_steps = 150;
  ok.metrics.calls_l1 = 10;
  ok.metrics.calls_l2 = 5;
  auto rep = aggregate_report({ok});
  CHECK(rep.arms.front().success_rate == 100.0);
  CHECK(rep.arms.front().travel_mean == 150.0);
  CHECK(rep.arms.front().travel_std == 0.0);
  CHECK(rep.arms.front().model_calls() == 15);

  TrialResult failed = ok;
  failed.metrics.success = false;
  failed.metrics.deadlock = true;
  failed.metrics.travel_steps = 400;
  rep = aggregate_report({ok, failed});
  CHECK(rep.arms.front().success_rate == 50.0);
  CHECK(rep.arms.front().travel_mean == 150.0);

  TrialResult other = ok;
  other.label = "SP1";
  rep = aggregate_report({ok, other});
  REQUIRE(rep.arms.size() == 2);
  CHECK(rep.arms[0].success_rate == rep.arms[1].success_rate);
  CHECK(rep.arms[0].travel_mean == rep.arms[1].travel_mean);
  CHECK(rep.arms[0].model_calls() == rep.arms[1].model_calls());
  CHECK(&rep.arm("SP1") == &rep.arms[1]);
  CHECK_THROWS_AS(rep.arm("nope"), ReportError);

  CHECK_THROWS_AS(aggregate_report({}), ReportError);
}

TEST_CASE("report files") {
  const auto &art = small_artifacts();
  const StudyConfig c = small_config();
  const auto r = run_batch(make_specs(c, {1000, 1001}), {make_arm(c, art, Architecture::hyprap)}, 30, {});
  const auto dir = scratch("report");
  write_batch(dir, r);
  const auto rep = aggregate_report(read_batch(dir));
  write_report(dir / "out", rep);
  for (const char *f : {"summary.csv", "proximity.csv", "timing_by_mt.csv", "report.json", "success.svg", "timing.svg"}) {
    CHECK(std::filesystem::exists(dir / "out" / f));
  }
  CHECK_FALSE(rep.timing.empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("seeds file parsing") {
  std::istringstream in("# seeds\n1000\n\n  1001 \n7\n");
  CHECK(read_seeds(in) == std::vector<std::uint64_t>{1000, 1001, 7});
  std::istringstream bad("12\nabc\n");
  CHECK_THROWS_AS(read_seeds(bad), ConfigError);
  std::istringstream none("# nothing\n");
  CHECK_THROWS_AS(read_seeds(none), ConfigError);
}

TEST_CASE("config round trip and rejection") {
  StudyConfig c = default_config();
  c.router.theta1 = 0.61;
  c.planner.penalty_schedule = {5, 50, 500};
  c.conformal.mode = BudgetMode::worst_case;
  c.world.obstacles.pattern_weights = {1, 2, 3, 4};
  std::ostringstream os;
  write_config(os, c);
  std::istringstream is(os.str());
  const StudyConfig back = parse_config(is);
  std::ostringstream os2;
  write_config(os2, back);
  CHECK(os.str() == os2.str());
  CHECK(back.router.theta1 == 0.61);
  CHECK(back.conformal.mode == BudgetMode::worst_case);

  std::istringstream unknown("[router]\nthetaX = 0.4\n");
  CHECK_THROWS_AS(parse_config(unknown), ConfigError);
  std::istringstream section("[nope]\na = 1\n");
  CHECK_THROWS_AS(parse_config(section), ConfigError);
  std::istringstream bad_value("[router]\ntheta1 = abc\n");
  CHECK_THROWS_AS(parse_config(bad_value), ConfigError);
  std::istringstream same_seed("[library]\nseed = 5\n[calibration]\nseed = 5\n");
  CHECK_THROWS_AS(parse_config(same_seed).validate(), ConfigError);
  std::istringstream dt("[world]\ndt = 0.05\n");
  CHECK(parse_config(dt).planner.dt == 0.05);
  CHECK_THROWS_AS(load_config("/nonexistent/hyprap.ini"), ConfigError);
}

TEST_CASE("parallelism from the environment") {
  ::setenv("HYPRAP_PARALLEL", "3", 1);
  CHECK(default_config().batch.parallel == 3);
  std::istringstream is("[batch]\nparallel = 2\n");
  CHECK(parse_config(is).batch.parallel == 2);
  ::setenv("HYPRAP_PARALLEL", "x", 1);
  CHECK_THROWS_AS(default_config(), ConfigError);
  ::unsetenv("HYPRAP_PARALLEL");
}

TEST_CASE("artifact files round trip and refuse mismatches") {
  const StudyConfig c = small_config();
  const auto &art = small_artifacts();
  CHECK(art.calibration.accurate.size() == 500);
  CHECK(art.table.calibration_size() == 500);
  const auto dir = scratch("artifacts");
  save_artifacts(dir, art, c);
  for (const char *f : {"library.bin", "calibration.bin", "epsilon.bin", "epsilon.csv", "config.ini"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  const Artifacts back = load_artifacts(dir, c);
  CHECK(back.library.history == art.library.history);
  CHECK(back.library.future == art.library.future);
  CHECK(back.table.raw() == art.table.raw());
  CHECK(back.calibration.fast.size() == art.calibration.fast.size());
  CHECK(back.calibration.fast.back().truth == art.calibration.fast.back().truth);

  StudyConfig other = c;
  other.world.obstacles.speed_max = 0.3;
  CHECK_THROWS_AS(load_artifacts(dir, other), ArtifactError);
  StudyConfig unrelated = c;
  unrelated.router.theta1 = 0.6;
  CHECK_NOTHROW(load_artifacts(dir, unrelated));

  {
    std::fstream f(dir / "epsilon.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t v = 99;
    f.write(reinterpret_cast<const char *>(&v), sizeof v);
  }
  CHECK_THROWS_AS(load_artifacts(dir, c), ArtifactError);
  std::filesystem::resize_file(dir / "library.bin", 40);
  CHECK_THROWS_AS(load_artifacts(dir, c), ArtifactError);
  CHECK_THROWS_AS(load_artifacts(scratch("missing"), c), ArtifactError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("proximity sweep keeps the best matched point") {
  const StudyConfig c = small_config();
  const auto &art = small_artifacts();
  const auto specs = make_specs(c, {1000, 1001});
  ArmSummary ref;
  ref.success_rate = 50.0;
  SweepOptions so;
  so.max_evaluations = 2;
  so.success_tolerance = 100.0;
  so.inner_ratios = {0.5, 0.9};
  const auto r = proximity_sweep(c, art, specs, SweepTarget::success, ref, so);
  REQUIRE(r.evaluated.size() == 2);
  CHECK(r.matched);
  CHECK(r.evaluated[0].inner_ratio == 0.5);
  CHECK(r.evaluated[1].inner_ratio == 0.9);
  const auto fewest = std::min(r.evaluated[0].summary.model_calls(), r.evaluated[1].summary.model_calls());
  CHECK(r.evaluated[r.chosen].summary.model_calls() == fewest);
  CHECK(r.chosen_trials.size() == 2);
  CHECK_THROWS(proximity_sweep(c, art, specs, SweepTarget::calls, ref, SweepOptions{2.0, 1.0}));
}

TEST_CASE("tradeoff study arithmetic") {
  StudyConfig c = small_config();
  const auto &art = small_artifacts();
  const auto r = tradeoff_study(c, art, 4, {{4, 0}, {2, 2}, {0, 4}}, {1000});
  REQUIRE(r.points.size() == 3);
  CHECK(r.points[2].theory == doctest::Approx(4 * r.dt2));
  CHECK(r.points[0].theory == doctest::Approx(4 * r.dt1));
  CHECK(r.points[0].accuracy > r.points[1].accuracy);
  CHECK(r.points[1].accuracy > r.points[2].accuracy);
  CHECK(r.dt1 > r.dt2);
  CHECK_THROWS(tradeoff_study(c, art, 4, {{3, 0}}, {1000}));
}

} // TEST_SUITE
