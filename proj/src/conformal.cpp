#include "hyprap/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hyprap {

namespace {

// ceil() that ignores representation noise such as 20 * 0.95 = 19.000000000000004.
std::size_t robust_ceil(double v) {
  const double r = std::round(v);
  if (std::abs(v - r) <= 1e-9 * std::max(1.0, std::abs(v))) {
    return static_cast<std::size_t>(std::max(0.0, r));
  }
  return static_cast<std::size_t>(std::max(0.0, std::ceil(v)));
}

double row_delta_bar(const EpsilonTable &t, int m) {
  const int count = t.mode() == BudgetMode::per_count ? m : t.m_max();
  return t.delta() / (static_cast<double>(count) * static_cast<double>(t.horizon()));
}

} // namespace

void FailureBudget::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("failure budget: delta must lie in (0, 1)");
  }
  if (horizon < 1 || obstacle_count < 1) {
    throw std::invalid_argument("failure budget: horizon and obstacle count must be >= 1");
  }
}

std::size_t conformal_rank(std::size_t n, double delta_bar) {
  return robust_ceil(static_cast<double>(n + 1) * (1.0 - delta_bar));
}

std::size_t required_calibration_size(double delta_bar) {
  // Smallest n with ceil((n+1)(1-d)) <= n, i.e. n >= (1-d)/d.
  std::size_t n = robust_ceil((1.0 - delta_bar) / delta_bar);
  while (n > 0 && conformal_rank(n - 1, delta_bar) <= n - 1) {
    --n;
  }
  while (conformal_rank(n, delta_bar) > n) {
    ++n;
  }
  return n;
}

double calibrate_radius(std::span<const double> scores, double delta_bar) {
  if (!(delta_bar > 0.0 && delta_bar < 1.0)) {
    throw std::invalid_argument("calibrate_radius: delta_bar must lie in (0, 1)");
  }
  const std::size_t n = scores.size();
  const std::size_t r = conformal_rank(n, delta_bar);
  if (r > n || n == 0) {
    std::ostringstream msg;
    msg << "calibration infeasible: rank " << r << " of " << n << " scores at delta_bar "
        << delta_bar << "; need n >= " << required_calibration_size(delta_bar);
    throw CalibrationInfeasible(msg.str(), required_calibration_size(delta_bar));
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  auto nth = sorted.begin() + static_cast<std::ptrdiff_t>(r - 1);
  std::nth_element(sorted.begin(), nth, sorted.end());
  return *nth;
}

EpsilonTable::EpsilonTable(int m_max, int horizon, double delta, std::size_t n_calibration,
                           std::uint64_t seed, BudgetMode mode)
    : m_max_(m_max), horizon_(horizon), delta_(delta), n_(n_calibration), seed_(seed), mode_(mode),
      values_(2 * static_cast<std::size_t>(m_max) * static_cast<std::size_t>(horizon), 0.0) {
  if (m_max < 1 || horizon < 1) {
    throw std::invalid_argument("epsilon table: M_max and H must be >= 1");
  }
}

std::size_t EpsilonTable::index(PredictorLevel level, int m, int h) const {
  if (level == PredictorLevel::simple) {
    throw std::invalid_argument("epsilon table: level 0 has no conformal region");
  }
  if (m < 1 || m > m_max_ || h < 1 || h > horizon_) {
    std::ostringstream msg;
    msg << "epsilon table: cell (M=" << m << ", h=" << h << ") outside 1.." << m_max_ << " x 1.."
        << horizon_;
    throw std::out_of_range(msg.str());
  }
  const std::size_t l = level == PredictorLevel::accurate ? 0 : 1;
  return (l * static_cast<std::size_t>(m_max_) + static_cast<std::size_t>(m - 1)) *
             static_cast<std::size_t>(horizon_) +
         static_cast<std::size_t>(h - 1);
}

double &EpsilonTable::at(PredictorLevel level, int m, int h) { return values_[index(level, m, h)]; }
double EpsilonTable::at(PredictorLevel level, int m, int h) const { return values_[index(level, m, h)]; }

double EpsilonTable::mean_radius(PredictorLevel level, int m) const {
  double sum = 0.0;
  for (int h = 1; h <= horizon_; ++h) {
    sum += at(level, m, h);
  }
  return sum / horizon_;
}

std::vector<std::vector<double>> horizon_scores(std::span<const CalibrationPair> pairs, int horizon) {
  std::vector<std::vector<double>> scores(static_cast<std::size_t>(horizon));
  for (auto &col : scores) {
    col.reserve(pairs.size());
  }
  for (const CalibrationPair &p : pairs) {
    if (p.predicted.size() < static_cast<std::size_t>(horizon) ||
        p.truth.size() < static_cast<std::size_t>(horizon)) {
      throw std::invalid_argument("calibration pair shorter than the horizon");
    }
    for (int h = 0; h < horizon; ++h) {
      scores[static_cast<std::size_t>(h)].push_back(
          nonconformity_score(p.truth[static_cast<std::size_t>(h)], p.predicted[static_cast<std::size_t>(h)]));
    }
  }
  return scores;
}

EpsilonTable build_epsilon_table(const CalibrationSet &calibration, double delta, int horizon,
                                 int m_max, BudgetMode mode) {
  FailureBudget{delta, horizon, m_max}.validate();
  const std::size_t n = std::min(calibration.accurate.size(), calibration.fast.size());
  EpsilonTable table(m_max, horizon, delta, n, calibration.seed, mode);
  for (PredictorLevel level : {PredictorLevel::accurate, PredictorLevel::fast}) {
    auto scores = horizon_scores(calibration.pairs(level), horizon);
    for (int h = 1; h <= horizon; ++h) {
      auto &col = scores[static_cast<std::size_t>(h - 1)];
      std::sort(col.begin(), col.end());
      for (int m = 1; m <= m_max; ++m) {
        const double db = row_delta_bar(table, m);
        const std::size_t r = conformal_rank(col.size(), db);
        if (r > col.size() || col.empty()) {
          std::ostringstream msg;
          msg << "calibration infeasible at (level " << level_index(level) << ", M=" << m
              << ", h=" << h << "): rank " << r << " of " << col.size()
              << " scores; need n >= " << required_calibration_size(db);
          throw CalibrationInfeasible(msg.str(), required_calibration_size(db));
        }
        table.at(level, m, h) = col[r - 1];
      }
    }
  }
  return table;
}

EpsilonLookup lookup_epsilon(const EpsilonTable &table, PredictorLevel level, int m_t, int h) {
  if (level == PredictorLevel::simple) {
    throw std::invalid_argument("lookup_epsilon: level 0 has no conformal region");
  }
  if (h < 1 || h > table.horizon()) {
    throw std::invalid_argument("lookup_epsilon: h must lie in 1..H");
  }
  EpsilonLookup out;
  int m = std::max(m_t, 1);
  if (m > table.m_max()) {
    m = table.m_max();
    out.clamped = true;
  }
  out.value = table.at(level, m, h);
  return out;
}

BoundValue bonferroni_bound(int m_t, double delta_bar) {
  const double v = 1.0 - static_cast<double>(m_t) * delta_bar;
  return {v, v <= 0.0};
}

BoundValue independent_bound(int m_t, double delta_bar) {
  const double v = std::pow(1.0 - delta_bar, m_t);
  return {v, v <= 0.0};
}

BoundValue partial_coverage_bound(int m1, int m2, double alpha, double delta_bar) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("partial_coverage_bound: alpha must lie in [0, 1]");
  }
  const double q = 1.0 - delta_bar;
  const int j0 = static_cast<int>(robust_ceil(alpha * static_cast<double>(m2)));
  double tail = 0.0;
  double binom = 1.0; // C(m2, j), built incrementally from j = 0
  for (int j = 0; j <= m2; ++j) {
    if (j > 0) {
      binom = binom * static_cast<double>(m2 - j + 1) / static_cast<double>(j);
    }
    if (j >= j0) {
      tail += binom * std::pow(q, j) * std::pow(delta_bar, m2 - j);
    }
  }
  const double v = std::pow(q, m1) * tail;
  return {v, v <= 0.0};
}

CoverageReport empirical_coverage(std::span<const CalibrationPair> holdout, const EpsilonTable &table,
                                  PredictorLevel level, int m, bool joint) {
  if (holdout.empty()) {
    throw std::invalid_argument("empirical_coverage: empty holdout");
  }
  const int H = table.horizon();
  const int row = std::clamp(m, 1, table.m_max());
  const int group = joint ? std::max(m, 1) : 1;
  const std::size_t groups = holdout.size() / static_cast<std::size_t>(group);
  if (groups == 0) {
    throw std::invalid_argument("empirical_coverage: fewer holdout examples than one group");
  }

  CoverageReport rep;
  rep.delta_bar = row_delta_bar(table, row);
  rep.target_marginal = 1.0 - rep.delta_bar;
  rep.target_bonferroni = bonferroni_bound(group, rep.delta_bar).value;
  rep.target_independent = independent_bound(group, rep.delta_bar).value;
  rep.samples = groups;
  rep.per_h.assign(static_cast<std::size_t>(H), 0.0);

  std::vector<double> eps(static_cast<std::size_t>(H));
  for (int h = 1; h <= H; ++h) {
    eps[static_cast<std::size_t>(h - 1)] = table.at(level, row, h);
  }
  std::size_t all_h_hits = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    bool all_h = true;
    for (int h = 0; h < H; ++h) {
      bool covered = true;
      for (int j = 0; j < group; ++j) {
        const CalibrationPair &p = holdout[g * static_cast<std::size_t>(group) + static_cast<std::size_t>(j)];
        const auto hh = static_cast<std::size_t>(h);
        covered = covered && nonconformity_score(p.truth[hh], p.predicted[hh]) <= eps[hh];
      }
      if (covered) {
        rep.per_h[static_cast<std::size_t>(h)] += 1.0;
      }
      all_h = all_h && covered;
    }
    all_h_hits += all_h ? 1 : 0;
  }
  for (double &c : rep.per_h) {
    c /= static_cast<double>(groups);
  }
  rep.min_per_h = *std::min_element(rep.per_h.begin(), rep.per_h.end());
  rep.horizon_joint = static_cast<double>(all_h_hits) / static_cast<double>(groups);
  return rep;
}

} // namespace hyprap
