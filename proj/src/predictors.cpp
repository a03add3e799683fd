#include "hyprap/predictors.hpp"

#include "hyprap/seeding.hpp"

#include <algorithm>
#include <array>
#include <ctime>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hyprap {

namespace {

// Bounded sorted list of the k best (distance, index) pairs; ties keep the earlier index.
class NearestSet {
public:
  explicit NearestSet(std::size_t k) : k_(k) { items_.reserve(k + 1); }

  double worst() const {
    return items_.size() < k_ ? std::numeric_limits<double>::infinity() : items_.back().first;
  }

  void offer(double d, std::size_t idx) {
    if (d >= worst()) {
      return;
    }
    auto pos = std::upper_bound(items_.begin(), items_.end(), d,
                                [](double v, const auto &item) { return v < item.first; });
    items_.insert(pos, {d, idx});
    if (items_.size() > k_) {
      items_.pop_back();
    }
  }

  const std::vector<std::pair<double, std::size_t>> &items() const { return items_; }

private:
  std::size_t k_;
  std::vector<std::pair<double, std::size_t>> items_;
};

NearestSet scan_library(const TrajectoryLibrary &lib, std::span<const double> query, std::size_t k) {
  NearestSet best(k);
  const std::size_t dim = query.size();
  const double *row = lib.history.data();
  const std::size_t n = lib.size();
  for (std::size_t i = 0; i < n; ++i, row += dim) {
    double d = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double e = row[j] - query[j];
      d += e * e;
    }
    best.offer(d, i);
  }
  return best;
}

// Heading of the net displacement over a window; 0 for a window with no net motion.
double canonical_angle(std::span<const Vec2> increments) {
  Vec2 sum{};
  for (const Vec2 &d : increments) {
    sum += d;
  }
  return squared_norm(sum) > 1e-18 ? std::atan2(sum.y, sum.x) : 0.0;
}

Vec2 rotate(const Vec2 &v, double c, double s) { return {c * v.x - s * v.y, s * v.x + c * v.y}; }

void fold_all(std::vector<Vec2> &points, const std::optional<Bounds> &workspace) {
  if (!workspace) {
    return;
  }
  for (Vec2 &p : points) {
    p = fold_into(p, *workspace);
  }
}

} // namespace

const char *to_string(PredictorLevel l) {
  switch (l) {
  case PredictorLevel::simple:
    return "level0";
  case PredictorLevel::accurate:
    return "level1";
  case PredictorLevel::fast:
    return "level2";
  }
  return "unknown";
}

TrajectoryLibrary build_library(std::span<const ObstacleTrack> rollouts, int window, int horizon,
                                int stride, LibraryBuildStats *stats) {
  if (window <= 0 || horizon <= 0 || stride <= 0) {
    throw std::invalid_argument("build_library: window, horizon and stride must be positive");
  }
  TrajectoryLibrary lib;
  lib.window = window;
  lib.horizon = horizon;
  LibraryBuildStats local;
  const std::size_t span_steps = static_cast<std::size_t>(window + horizon);

  for (const ObstacleTrack &r : rollouts) {
    const std::size_t steps = r.history.empty() ? 0 : r.history.size() - 1;
    if (steps < span_steps) {
      ++local.short_rollouts;
      continue;
    }
    for (std::size_t s = 0; s + span_steps <= steps; s += static_cast<std::size_t>(stride)) {
      bool bounced = false;
      if (!r.reflected.empty()) {
        for (std::size_t i = s + 1; i <= s + span_steps; ++i) {
          bounced = bounced || r.reflected[i] != 0;
        }
      }
      if (bounced) {
        ++local.reflected_windows;
        continue;
      }
      std::vector<Vec2> inc(span_steps);
      for (std::size_t i = 0; i < span_steps; ++i) {
        inc[i] = r.history[s + i + 1] - r.history[s + i];
      }
      const double a = canonical_angle(std::span<const Vec2>(inc).first(static_cast<std::size_t>(window)));
      const double c = std::cos(a);
      const double sn = std::sin(a);
      for (std::size_t i = 0; i < span_steps; ++i) {
        const Vec2 d = rotate(inc[i], c, -sn);
        auto &dst = i < static_cast<std::size_t>(window) ? lib.history : lib.future;
        dst.push_back(d.x);
        dst.push_back(d.y);
      }
      ++local.segments;
    }
  }
  if (stats != nullptr) {
    *stats = local;
  }
  return lib;
}

std::vector<Vec2> predict_const_velocity(std::span<const Vec2> history, int horizon) {
  if (history.empty()) {
    throw std::invalid_argument("predict_const_velocity: empty history");
  }
  const Vec2 now = history.back();
  Vec2 step{};
  const std::size_t increments = std::min<std::size_t>(3, history.size() - 1);
  if (increments > 0) {
    const Vec2 &oldest = history[history.size() - 1 - increments];
    step = (now - oldest) * (1.0 / static_cast<double>(increments));
  }
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (int h = 1; h <= horizon; ++h) {
    out.push_back(now + step * static_cast<double>(h));
  }
  return out;
}

std::vector<Vec2> predict_knn(const TrajectoryLibrary &library, std::span<const Vec2> history,
                              int k, int horizon, int repeat) {
  if (library.empty()) {
    throw std::invalid_argument("predict_knn: empty library");
  }
  const std::size_t w = static_cast<std::size_t>(library.window);
  if (history.size() < w + 1) {
    throw std::invalid_argument("predict_knn: history shorter than W+1 points");
  }
  if (horizon > library.horizon) {
    throw std::invalid_argument("predict_knn: horizon exceeds library horizon");
  }
  const auto tail = history.last(w + 1);
  std::vector<Vec2> inc(w);
  for (std::size_t i = 1; i <= w; ++i) {
    inc[i - 1] = tail[i] - tail[i - 1];
  }
  const double a = canonical_angle(inc);
  const double c = std::cos(a);
  const double sn = std::sin(a);
  std::vector<double> query;
  query.reserve(2 * w);
  for (const Vec2 &d : inc) {
    const Vec2 q = rotate(d, c, -sn);
    query.push_back(q.x);
    query.push_back(q.y);
  }

  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 1)), library.size());
  NearestSet best = scan_library(library, query, kk);
  volatile std::size_t sink = 0;
  for (int r = 1; r < repeat; ++r) {
    sink = sink + scan_library(library, query, kk).items().front().second;
  }

  const std::size_t fdim = 2 * static_cast<std::size_t>(library.horizon);
  std::vector<double> mean(2 * static_cast<std::size_t>(horizon), 0.0);
  for (const auto &[d, idx] : best.items()) {
    const double *f = library.future.data() + idx * fdim;
    for (std::size_t j = 0; j < mean.size(); ++j) {
      mean[j] += f[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(best.items().size());

  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(horizon));
  Vec2 p = tail.back();
  for (int h = 0; h < horizon; ++h) {
    p += rotate(Vec2{mean[2 * h] * inv, mean[2 * h + 1] * inv}, c, sn);
    out.push_back(p);
  }
  return out;
}

Prediction predict(PredictorLevel level, std::span<const Vec2> history, int horizon,
                   const PredictorSettings &settings) {
  Prediction out;
  out.used = level;
  if (level == PredictorLevel::accurate) {
    const TrajectoryLibrary *lib = settings.library;
    if (lib != nullptr && !lib->empty() &&
        history.size() >= static_cast<std::size_t>(lib->window) + 1) {
      out.points = predict_knn(*lib, history, settings.k, horizon, settings.work_multiplier);
      fold_all(out.points, settings.workspace);
      return out;
    }
    out.fallback = true;
    out.used = history.size() >= 2 ? PredictorLevel::fast : PredictorLevel::simple;
  } else if (level == PredictorLevel::fast && history.size() < 2) {
    out.fallback = true;
    out.used = PredictorLevel::simple;
  }
  out.points = predict_const_velocity(history, horizon);
  fold_all(out.points, settings.workspace);
  return out;
}

const std::vector<CalibrationPair> &CalibrationSet::pairs(PredictorLevel l) const {
  if (l == PredictorLevel::accurate) {
    return accurate;
  }
  if (l == PredictorLevel::fast) {
    return fast;
  }
  throw std::invalid_argument("calibration set: level 0 has no calibration data");
}

std::vector<CalibrationPair> &CalibrationSet::pairs(PredictorLevel l) {
  return const_cast<std::vector<CalibrationPair> &>(std::as_const(*this).pairs(l));
}

std::vector<ObstacleTrack> simulate_rollouts(const WorldConfig &world, std::uint64_t seed,
                                             int n_rollouts, int steps) {
  std::vector<ObstacleTrack> out;
  out.reserve(static_cast<std::size_t>(std::max(n_rollouts, 0)));
  const Bounds &b = world.workspace;
  for (int i = 0; i < n_rollouts; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const Vec2 start{std::uniform_real_distribution<double>(b.x_min, b.x_max)(rng),
                     std::uniform_real_distribution<double>(b.y_min, b.y_max)(rng)};
    ObstacleTrack track = sample_obstacle(i + 1, start, 0, world, rng);
    track.history.reserve(static_cast<std::size_t>(steps) + 1);
    for (int s = 0; s < steps; ++s) {
      step_obstacles(std::span<ObstacleTrack>(&track, 1), world, rng);
    }
    out.push_back(std::move(track));
  }
  return out;
}

CalibrationSet generate_calibration_set(const WorldConfig &world, const CalibrationOptions &opts,
                                        const PredictorSettings &settings,
                                        std::span<const PredictorLevel> levels) {
  CalibrationSet set;
  set.horizon = opts.horizon;
  set.seed = opts.seed;
  if (opts.rollout_steps < opts.window + opts.horizon) {
    throw std::invalid_argument("generate_calibration_set: rollouts too short for W+H");
  }
  const auto rollouts = simulate_rollouts(world, opts.seed, opts.n_rollouts, opts.rollout_steps);
  Rng sampler(mix_seed(opts.seed, 0xCA11B8A7ULL));
  std::uniform_int_distribution<int> pick_time(opts.window, opts.rollout_steps - opts.horizon);

  for (const ObstacleTrack &r : rollouts) {
    for (int s = 0; s < opts.samples_per_rollout; ++s) {
      const auto t = static_cast<std::size_t>(pick_time(sampler));
      const std::span<const Vec2> hist(r.history.data() + t - opts.window,
                                       static_cast<std::size_t>(opts.window) + 1);
      std::vector<Vec2> truth(r.history.begin() + static_cast<std::ptrdiff_t>(t) + 1,
                              r.history.begin() + static_cast<std::ptrdiff_t>(t) + 1 + opts.horizon);
      for (PredictorLevel level : levels) {
        if (level == PredictorLevel::simple) {
          continue;
        }
        Prediction p = predict(level, hist, opts.horizon, settings);
        set.pairs(level).push_back({std::move(p.points), truth});
      }
    }
  }
  return set;
}

double prediction_cost(PredictorLevel level, const PredictorSettings &settings,
                       std::span<const ObstacleTrack> rollouts, int horizon, int calls) {
  if (rollouts.empty() || calls <= 0) {
    throw std::invalid_argument("prediction_cost: need rollouts and a positive call count");
  }
  const std::size_t window = settings.library != nullptr ? static_cast<std::size_t>(settings.library->window) : 10;
  std::vector<std::span<const Vec2>> queries;
  for (const ObstacleTrack &r : rollouts) {
    if (r.history.size() > window + 1) {
      queries.emplace_back(r.history.data() + r.history.size() / 2 - window, window + 1);
    }
  }
  if (queries.empty()) {
    throw std::invalid_argument("prediction_cost: rollouts too short");
  }
  volatile double sink = 0.0;
  timespec t0{}, t1{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &t0);
  for (int i = 0; i < calls; ++i) {
    const Prediction p = predict(level, queries[static_cast<std::size_t>(i) % queries.size()], horizon, settings);
    sink = sink + p.points.back().x;
  }
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &t1);
  const double elapsed = static_cast<double>(t1.tv_sec - t0.tv_sec) + static_cast<double>(t1.tv_nsec - t0.tv_nsec) * 1e-9;
  return elapsed / calls;
}

PredictionCosts measure_prediction_costs(const PredictorSettings &settings,
                                         std::span<const ObstacleTrack> rollouts, int horizon,
                                         int calls) {
  PredictionCosts c;
  c.accurate = prediction_cost(PredictorLevel::accurate, settings, rollouts, horizon, calls);
  c.fast = prediction_cost(PredictorLevel::fast, settings, rollouts, horizon, calls);
  if (!(c.accurate > c.fast)) {
    throw std::runtime_error("prediction cost ordering violated: level 1 is not slower than level 2 "
                             "(library too small?)");
  }
  return c;
}

} // namespace hyprap
