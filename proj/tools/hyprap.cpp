// hyprap command line: calibrate, run, batch, sweep, tradeoff, report.
#include "hyprap/artifacts.hpp"
#include "hyprap/batch.hpp"
#include "hyprap/config.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace hyprap;

namespace {

enum Exit { ok = 0, config_error = 2, artifact_error = 3, failure = 4 };

StudyConfig load(const std::string &path) {
  return path.empty() ? default_config() : load_config(path);
}

std::vector<std::uint64_t> seeds_for(const StudyConfig &config, const std::string &file) {
  if (file.empty()) {
    return default_seeds(config);
  }
  std::ifstream in(file);
  if (!in) {
    throw ConfigError("cannot read seeds file " + file);
  }
  return read_seeds(in);
}

std::vector<Architecture> parse_archs(const std::string &list) {
  std::vector<Architecture> out;
  std::stringstream ss(list);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(parse_architecture(tok));
    } catch (const std::exception &e) {
      throw ConfigError(e.what());
    }
  }
  if (out.empty()) {
    throw ConfigError("--archs: empty list");
  }
  return out;
}

void snapshot(const std::filesystem::path &dir, const StudyConfig &config) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.ini");
  write_config(out, config);
}

void print_summary(const BatchReport &r) {
  std::printf("%-16s %7s %9s %9s %10s %10s %9s\n", "arm", "succ%", "travel", "calls", "pred_ms", "mpc_ms",
              "safety");
  for (const ArmSummary &a : r.arms) {
    std::printf("%-16s %7.1f %9.1f %9ld %10.3f %10.3f %9.4f\n", a.label.c_str(), a.success_rate, a.travel_mean,
                a.model_calls(), a.prediction_time_per_step * 1e3, a.mpc_time_per_step * 1e3, a.safety);
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"HyPRAP planning laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir, in_dir, seeds_file, archs = "SP1,HYPRAP,SP2", arch = "HYPRAP", trace_path,
                                                         artifacts_dir, target;
  std::uint64_t seed = 1000;
  int parallel = 0;
  bool isolated = false;

  auto *calibrate = app.add_subcommand("calibrate", "build library, calibration set and epsilon table");
  calibrate->add_option("--config", config_path, "study config (INI)");
  calibrate->add_option("--out", out_dir, "artifact directory")->required();

  auto *run = app.add_subcommand("run", "one scenario with a per-step trace");
  run->add_option("--config", config_path, "study config (INI)");
  run->add_option("--seed", seed, "scenario seed");
  run->add_option("--arch", arch, "SP1, HYPRAP, SP2, PROX_A or PROX_B");
  run->add_option("--trace", trace_path, "line-delimited JSON trace");
  run->add_option("--artifacts", artifacts_dir, "overrides conformal.artifact_dir");

  auto *batch = app.add_subcommand("batch", "seeded Monte Carlo batch");
  batch->add_option("--config", config_path, "study config (INI)");
  batch->add_option("--seeds", seeds_file, "one seed per line; default batch.base_seed onward");
  batch->add_option("--archs", archs, "comma-separated architectures");
  batch->add_option("--out", out_dir, "output directory")->required();
  batch->add_flag("--timing-isolated", isolated, "run trials sequentially");
  batch->add_option("--parallel", parallel, "worker threads (overrides config)")->check(CLI::PositiveNumber);
  batch->add_option("--artifacts", artifacts_dir, "overrides conformal.artifact_dir");

  auto *sweep = app.add_subcommand("sweep", "proximity threshold sweep against HyPRAP");
  sweep->add_option("--config", config_path, "study config (INI)");
  sweep->add_option("--target", target, "calls (Prox.A) or success (Prox.B)")->required();
  sweep->add_option("--seeds", seeds_file, "one seed per line");
  sweep->add_option("--out", out_dir, "output directory")->required();
  sweep->add_option("--parallel", parallel, "worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--artifacts", artifacts_dir, "overrides conformal.artifact_dir");
  std::vector<double> inner_ratios;
  sweep->add_option("--inner-ratios", inner_ratios, "comma-separated inner/outer band ratios to search")
      ->delimiter(',')
      ->check(CLI::Range(0.01, 0.99));

  auto *tradeoff = app.add_subcommand("tradeoff", "forced-allocation timing study, M1 + M2 = 8");
  tradeoff->add_option("--config", config_path, "study config (INI)");
  tradeoff->add_option("--seeds", seeds_file, "one seed per line");
  tradeoff->add_option("--out", out_dir, "output directory")->required();
  tradeoff->add_option("--artifacts", artifacts_dir, "overrides conformal.artifact_dir");

  auto *report = app.add_subcommand("report", "aggregate a batch directory");
  report->add_option("--in", in_dir, "batch directory")->required();
  report->add_option("--out", out_dir, "report directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*report) {
      const BatchReport r = aggregate_report(read_batch(in_dir));
      write_report(out_dir, r);
      print_summary(r);
      return ok;
    }

    StudyConfig config = load(config_path);
    if (parallel > 0) {
      config.batch.parallel = parallel;
    }
    if (!artifacts_dir.empty()) {
      config.conformal.artifact_dir = artifacts_dir;
    }
    config.validate();

    if (*calibrate) {
      config.conformal.artifact_dir = out_dir;
      const Artifacts a = build_artifacts(config);
      save_artifacts(out_dir, a, config);
      std::printf("library %zu windows, calibration %zu pairs per level\n", a.library.size(),
                  a.calibration.accurate.size());
      for (int m : {1, 8, config.conformal.m_max}) {
        std::printf("M=%-3d mean radius  level1 %.4f  level2 %.4f\n", m,
                    a.table.mean_radius(PredictorLevel::accurate, m), a.table.mean_radius(PredictorLevel::fast, m));
      }
      return ok;
    }

    const Artifacts artifacts = load_artifacts(config.conformal.artifact_dir, config);
    const int H = config.planner.prediction_horizon;

    if (*run) {
      Architecture a;
      try {
        a = parse_architecture(arch);
      } catch (const std::exception &e) {
        throw ConfigError(e.what());
      }
      auto specs = make_specs(config, {seed});
      Arm armed = make_arm(config, artifacts, a);
      armed.options.record_obstacles = !trace_path.empty();
      const TrialMetrics m = run_scenario(generate_scenario(specs.front(), H), seed, armed.options);
      if (!trace_path.empty()) {
        std::ofstream out(trace_path);
        if (!out) {
          throw ConfigError("cannot write trace " + trace_path);
        }
        write_trace(out, m);
      }
      std::printf("seed %llu %s: %s after %d steps, calls l1 %ld l2 %ld\n", static_cast<unsigned long long>(seed),
                  to_string(a),
                  m.success     ? "success"
                  : m.collision ? "collision"
                  : m.deadlock  ? "deadlock"
                                : "timeout",
                  m.travel_steps, m.calls_l1, m.calls_l2);
      return ok;
    }

    const auto seeds = seeds_for(config, seeds_file);
    const auto specs = make_specs(config, seeds);

    if (*batch) {
      std::vector<Arm> arms;
      for (Architecture a : parse_archs(archs)) {
        arms.push_back(make_arm(config, artifacts, a));
      }
      BatchOptions bo;
      bo.parallelism = config.batch.parallel;
      bo.timing_isolated = isolated || config.batch.timing_isolated;
      const auto results = run_batch(specs, arms, H, bo);
      write_batch(out_dir, results);
      snapshot(out_dir, config);
      const BatchReport r = aggregate_report(results);
      write_report(std::filesystem::path(out_dir) / "report", r);
      print_summary(r);
      return ok;
    }

    if (*sweep) {
      const SweepTarget t = parse_sweep_target(target);
      BatchOptions bo;
      bo.parallelism = config.batch.parallel;
      bo.keep_steps = false;
      const auto reference = run_batch(specs, {make_arm(config, artifacts, Architecture::hyprap)}, H, bo);
      const ArmSummary ref = aggregate_report(reference).arms.front();
      SweepOptions so;
      so.radius_max = config.world.sensing_radius;
      so.inner_ratios = inner_ratios;
      const SweepResult s = proximity_sweep(config, artifacts, specs, t, ref, so);
      snapshot(out_dir, config);
      {
        std::ofstream out(std::filesystem::path(out_dir) / "sweep.csv");
        write_sweep_csv(out, s);
      }
      auto all = reference;
      all.insert(all.end(), s.chosen_trials.begin(), s.chosen_trials.end());
      write_batch(out_dir, all);
      const BatchReport r = aggregate_report(all);
      write_report(std::filesystem::path(out_dir) / "report", r);
      print_summary(r);
      const SweepPoint &p = s.evaluated[s.chosen];
      std::printf("outer radius %.4f m (%s tolerance)\n", p.outer_radius, s.matched ? "within" : "outside");
      return ok;
    }

    if (*tradeoff) {
      std::vector<std::pair<int, int>> allocations;
      for (int m1 = 0; m1 <= 8; ++m1) {
        allocations.emplace_back(m1, 8 - m1);
      }
      const TradeoffResult r = tradeoff_study(config, artifacts, 8, allocations, seeds);
      std::filesystem::create_directories(out_dir);
      std::ofstream out(std::filesystem::path(out_dir) / "tradeoff.csv");
      write_tradeoff_csv(out, r);
      write_tradeoff_csv(std::cout, r);
      return ok;
    }
  } catch (const ConfigError &e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return config_error;
  } catch (const ArtifactError &e) {
    std::fprintf(stderr, "artifact error: %s\n", e.what());
    return artifact_error;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return failure;
  }
  return ok;
}
