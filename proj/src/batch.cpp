#include "hyprap/batch.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

namespace hyprap {

namespace {

constexpr const char *kTrialsHeader =
    "label,seed,architecture,obstacle_count,success,collision,deadlock,timeout,error,travel_steps,"
    "calls_l0,calls_l1,calls_l2,fallback_calls,mean_constrained,max_constrained,mean_accuracy,"
    "feasible_steps,safe_steps,safe_steps_all,fallback_steps,clamped_lookups,prediction_time,mpc_time";
constexpr const char *kStepsHeader =
    "label,seed,t,sensed,constrained,m1,m2,status,braking,violation,cost,outer_iterations,"
    "inner_iterations,accuracy,x,y,prediction_time,mpc_time";
constexpr int kTimingColumns = 2;

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

std::vector<std::string> split(const std::string &line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

PlanStatus parse_status(const std::string &s) {
  for (PlanStatus p : {PlanStatus::optimal, PlanStatus::feasible, PlanStatus::infeasible_fallback}) {
    if (s == to_string(p)) {
      return p;
    }
  }
  throw ReportError("steps csv: unknown status '" + s + "'");
}

// Skips the version line and header, checking both.
void expect_preamble(std::istream &in, const std::string &tag, int version, const char *header) {
  std::string line;
  if (!std::getline(in, line) || line != "# " + tag + " v" + std::to_string(version)) {
    throw ReportError(tag + ": missing or unsupported version line");
  }
  if (!std::getline(in, line) || line != header) {
    throw ReportError(tag + ": unexpected header");
  }
}

double to_double(const std::string &s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) {
      return v;
    }
  } catch (const std::exception &) {
  }
  throw ReportError("csv: bad number '" + s + "'");
}

long to_long(const std::string &s) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos == s.size()) {
      return v;
    }
  } catch (const std::exception &) {
  }
  throw ReportError("csv: bad integer '" + s + "'");
}

struct Stats {
  double mean = 0.0;
  double sd = 0.0;
};

Stats stats(const std::vector<double> &v) {
  Stats s;
  if (v.empty()) {
    return s;
  }
  for (double x : v) {
    s.mean += x;
  }
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) {
      ss += (x - s.mean) * (x - s.mean);
    }
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

template <class F> void parallel_for(std::size_t n, int workers, F &&body) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      body(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        body(i);
      }
    });
  }
  for (auto &t : pool) {
    t.join();
  }
}

std::string svg_escape(const std::string &s) {
  std::string out;
  for (char c : s) {
    switch (c) {
    case '<':
      out += "&lt;";
      break;
    case '>':
      out += "&gt;";
      break;
    case '&':
      out += "&amp;";
      break;
    default:
      out += c;
    }
  }
  return out;
}

const char *kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

void write_success_svg(std::ostream &out, const BatchReport &r) {
  const int w = 120 * static_cast<int>(r.arms.size()) + 80, h = 300;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<text x=\"10\" y=\"20\" font-size=\"14\">success rate (%)</text>\n";
  for (std::size_t i = 0; i < r.arms.size(); ++i) {
    const ArmSummary &a = r.arms[i];
    const double bar = 2.0 * a.success_rate;
    const double x = 60.0 + 120.0 * static_cast<double>(i);
    out << "<rect x=\"" << x << "\" y=\"" << 250 - bar << "\" width=\"80\" height=\"" << bar << "\" fill=\""
        << kPalette[i % 6] << "\"/>\n";
    out << "<text x=\"" << x << "\" y=\"270\" font-size=\"11\">" << svg_escape(a.label) << "</text>\n";
    out << "<text x=\"" << x << "\" y=\"" << 245 - bar << "\" font-size=\"11\">" << std::fixed
        << std::setprecision(1) << a.success_rate << "</text>\n";
    out.unsetf(std::ios::fixed);
  }
  out << "<line x1=\"50\" y1=\"250\" x2=\"" << w - 10 << "\" y2=\"250\" stroke=\"black\"/>\n</svg>\n";
}

void write_timing_svg(std::ostream &out, const BatchReport &r) {
  int max_m = 1;
  double max_t = 1e-9;
  for (const TimingPoint &p : r.timing) {
    max_m = std::max(max_m, p.constrained);
    max_t = std::max(max_t, p.prediction_time + p.mpc_time);
  }
  const double w = 520, h = 320, x0 = 60, y0 = 280, pw = 430, ph = 240;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<text x=\"10\" y=\"20\" font-size=\"14\">total time per step (ms) vs M_t</text>\n";
  out << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 + pw << "\" y2=\"" << y0
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y0 - ph
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << x0 - 50 << "\" y=\"" << y0 - ph + 4 << "\" font-size=\"10\">" << max_t * 1e3
      << "</text>\n";
  out << "<text x=\"" << x0 + pw - 10 << "\" y=\"" << y0 + 14 << "\" font-size=\"10\">" << max_m << "</text>\n";
  std::map<std::string, std::vector<const TimingPoint *>> by_label;
  std::vector<std::string> order;
  for (const TimingPoint &p : r.timing) {
    if (by_label[p.label].empty()) {
      order.push_back(p.label);
    }
    by_label[p.label].push_back(&p);
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    out << "<polyline fill=\"none\" stroke=\"" << kPalette[i % 6] << "\" points=\"";
    for (const TimingPoint *p : by_label[order[i]]) {
      out << x0 + pw * p->constrained / max_m << ',' << y0 - ph * (p->prediction_time + p->mpc_time) / max_t
          << ' ';
    }
    out << "\"/>\n<text x=\"" << x0 + 10 << "\" y=\"" << 40 + 14 * static_cast<double>(i)
        << "\" font-size=\"11\" fill=\"" << kPalette[i % 6] << "\">" << svg_escape(order[i]) << "</text>\n";
  }
  out << "</svg>\n";
}

template <class F> void write_file(const std::filesystem::path &p, F &&writer) {
  std::ofstream out(p);
  if (!out) {
    throw ReportError("cannot write " + p.string());
  }
  writer(out);
}

} // namespace

std::vector<std::uint64_t> default_seeds(const StudyConfig &config) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < config.batch.scenarios; ++i) {
    seeds.push_back(config.batch.base_seed + static_cast<std::uint64_t>(i));
  }
  return seeds;
}

std::vector<std::uint64_t> read_seeds(std::istream &in) {
  std::vector<std::uint64_t> seeds;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') {
      continue;
    }
    const auto last = line.find_last_not_of(" \t\r");
    const std::string tok = line.substr(first, last - first + 1);
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(tok, &pos);
      if (pos != tok.size() || tok.front() == '-') {
        throw std::invalid_argument(tok);
      }
      seeds.push_back(v);
    } catch (const std::exception &) {
      throw ConfigError("seeds line " + std::to_string(n) + ": not a seed: '" + tok + "'");
    }
  }
  if (seeds.empty()) {
    throw ConfigError("seeds: no seeds given");
  }
  return seeds;
}

std::vector<ScenarioSpec> make_specs(const StudyConfig &config, const std::vector<std::uint64_t> &seeds) {
  std::vector<ScenarioSpec> specs;
  for (std::uint64_t s : seeds) {
    ScenarioSpec spec = config.scenario;
    spec.seed = s;
    spec.world = config.world;
    specs.push_back(spec);
  }
  return specs;
}

Arm make_arm(const StudyConfig &config, const Artifacts &artifacts, Architecture architecture,
             std::string label) {
  Arm arm;
  arm.label = label.empty() ? to_string(architecture) : std::move(label);
  arm.options = trial_options(config, architecture);
  arm.options.table = &artifacts.table;
  arm.options.predictors.library = &artifacts.library;
  return arm;
}

std::vector<TrialResult> run_batch(const std::vector<ScenarioSpec> &specs, const std::vector<Arm> &arms,
                                   int horizon, const BatchOptions &options) {
  for (std::size_t i = 0; i < arms.size(); ++i) {
    if (arms[i].label.empty() || arms[i].label.find_first_of(",\n") != std::string::npos) {
      throw std::invalid_argument("run_batch: arm labels must be non-empty and free of commas");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (arms[i].label == arms[j].label) {
        throw std::invalid_argument("run_batch: duplicate arm label " + arms[i].label);
      }
    }
  }
  const int workers = options.timing_isolated ? 1 : options.parallelism;

  std::vector<std::optional<Scenario>> scenarios(specs.size());
  std::vector<std::string> generation_error(specs.size());
  parallel_for(specs.size(), workers, [&](std::size_t i) {
    try {
      scenarios[i] = generate_scenario(specs[i], horizon);
    } catch (const std::exception &e) {
      generation_error[i] = sanitize(e.what());
    }
  });

  std::vector<TrialResult> results(specs.size() * arms.size());
  parallel_for(results.size(), workers, [&](std::size_t k) {
    const std::size_t si = k / arms.size();
    const Arm &arm = arms[k % arms.size()];
    TrialResult &r = results[k];
    r.label = arm.label;
    r.metrics.seed = specs[si].seed;
    r.metrics.architecture = arm.options.architecture;
    if (!scenarios[si]) {
      r.error = generation_error[si];
      return;
    }
    try {
      r.metrics = run_scenario(*scenarios[si], specs[si].seed, arm.options);
      if (!options.keep_steps) {
        r.metrics.steps.clear();
        r.metrics.steps.shrink_to_fit();
      }
    } catch (const std::exception &e) {
      r.error = sanitize(e.what());
    }
  });
  return results;
}

void write_trials_csv(std::ostream &out, const std::vector<TrialResult> &results) {
  out << "# hyprap-trials v" << kTrialsCsvVersion << '\n' << kTrialsHeader << '\n';
  for (const TrialResult &r : results) {
    const TrialMetrics &m = r.metrics;
    out << r.label << ',' << m.seed << ',' << to_string(m.architecture) << ',' << m.obstacle_count << ','
        << m.success << ',' << m.collision << ',' << m.deadlock << ',' << m.timeout << ',' << sanitize(r.error)
        << ',' << m.travel_steps << ',' << m.calls_l0 << ',' << m.calls_l1 << ',' << m.calls_l2 << ','
        << m.fallback_calls << ',' << num(m.mean_constrained) << ',' << m.max_constrained << ','
        << num(m.mean_accuracy) << ',' << m.feasible_steps << ',' << m.safe_steps << ',' << m.safe_steps_all
        << ',' << m.fallback_steps << ',' << m.clamped_lookups << ',' << num(m.prediction_time) << ','
        << num(m.mpc_time) << '\n';
  }
}

std::vector<TrialResult> read_trials_csv(std::istream &in) {
  expect_preamble(in, "hyprap-trials", kTrialsCsvVersion, kTrialsHeader);
  const std::size_t columns = split(kTrialsHeader).size();
  std::vector<TrialResult> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto c = split(line);
    if (c.size() != columns) {
      throw ReportError("trials csv: row has " + std::to_string(c.size()) + " columns");
    }
    TrialResult r;
    TrialMetrics &m = r.metrics;
    r.label = c[0];
    m.seed = static_cast<std::uint64_t>(std::stoull(c[1]));
    m.architecture = parse_architecture(c[2]);
    m.obstacle_count = static_cast<int>(to_long(c[3]));
    m.success = to_long(c[4]) != 0;
    m.collision = to_long(c[5]) != 0;
    m.deadlock = to_long(c[6]) != 0;
    m.timeout = to_long(c[7]) != 0;
    r.error = c[8];
    m.travel_steps = static_cast<int>(to_long(c[9]));
    m.calls_l0 = to_long(c[10]);
    m.calls_l1 = to_long(c[11]);
    m.calls_l2 = to_long(c[12]);
    m.fallback_calls = to_long(c[13]);
    m.mean_constrained = to_double(c[14]);
    m.max_constrained = static_cast<int>(to_long(c[15]));
    m.mean_accuracy = to_double(c[16]);
    m.feasible_steps = static_cast<int>(to_long(c[17]));
    m.safe_steps = static_cast<int>(to_long(c[18]));
    m.safe_steps_all = static_cast<int>(to_long(c[19]));
    m.fallback_steps = static_cast<int>(to_long(c[20]));
    m.clamped_lookups = static_cast<int>(to_long(c[21]));
    m.prediction_time = to_double(c[22]);
    m.mpc_time = to_double(c[23]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_steps_csv(std::ostream &out, const std::vector<TrialResult> &results) {
  out << "# hyprap-steps v" << kStepsCsvVersion << '\n' << kStepsHeader << '\n';
  for (const TrialResult &r : results) {
    for (const StepRecord &s : r.metrics.steps) {
      out << r.label << ',' << r.metrics.seed << ',' << s.t << ',' << s.sensed << ',' << s.constrained << ','
          << s.m1 << ',' << s.m2 << ',' << to_string(s.status) << ',' << s.braking << ',' << num(s.violation)
          << ',' << num(s.cost) << ',' << s.outer_iterations << ',' << s.inner_iterations << ','
          << num(s.accuracy) << ',' << num(s.agent.x) << ',' << num(s.agent.y) << ','
          << num(s.prediction_time) << ',' << num(s.mpc_time) << '\n';
    }
  }
}

void read_steps_csv(std::istream &in, std::vector<TrialResult> &results) {
  expect_preamble(in, "hyprap-steps", kStepsCsvVersion, kStepsHeader);
  const std::size_t columns = split(kStepsHeader).size();
  std::map<std::pair<std::string, std::uint64_t>, TrialResult *> index;
  for (TrialResult &r : results) {
    r.metrics.steps.clear();
    index[{r.label, r.metrics.seed}] = &r;
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto c = split(line);
    if (c.size() != columns) {
      throw ReportError("steps csv: row has " + std::to_string(c.size()) + " columns");
    }
    const auto it = index.find({c[0], static_cast<std::uint64_t>(std::stoull(c[1]))});
    if (it == index.end()) {
      throw ReportError("steps csv: no trial for " + c[0] + " seed " + c[1]);
    }
    StepRecord s;
    s.t = static_cast<int>(to_long(c[2]));
    s.sensed = static_cast<int>(to_long(c[3]));
    s.constrained = static_cast<int>(to_long(c[4]));
    s.m1 = static_cast<int>(to_long(c[5]));
    s.m2 = static_cast<int>(to_long(c[6]));
    s.status = parse_status(c[7]);
    s.braking = to_long(c[8]) != 0;
    s.violation = to_double(c[9]);
    s.cost = to_double(c[10]);
    s.outer_iterations = static_cast<int>(to_long(c[11]));
    s.inner_iterations = static_cast<int>(to_long(c[12]));
    s.accuracy = to_double(c[13]);
    s.agent.x = to_double(c[14]);
    s.agent.y = to_double(c[15]);
    s.prediction_time = to_double(c[16]);
    s.mpc_time = to_double(c[17]);
    it->second->metrics.steps.push_back(s);
  }
}

std::string strip_timing_columns(const std::string &csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) != 0) {
      std::size_t cut = line.size();
      for (int i = 0; i < kTimingColumns && cut != std::string::npos; ++i) {
        cut = line.rfind(',', cut - 1);
      }
      if (cut != std::string::npos) {
        line.resize(cut);
      }
    }
    out << line << '\n';
  }
  return out.str();
}

const ArmSummary &BatchReport::arm(const std::string &label) const {
  for (const ArmSummary &a : arms) {
    if (a.label == label) {
      return a;
    }
  }
  throw ReportError("report: no arm labelled " + label);
}

BatchReport aggregate_report(const std::vector<TrialResult> &results) {
  if (results.empty()) {
    throw ReportError("aggregate_report: no trials");
  }
  BatchReport report;
  std::map<std::string, std::size_t> slot;
  std::vector<std::vector<double>> travel;
  std::vector<std::map<int, TimingPoint>> curves;
  for (const TrialResult &r : results) {
    auto [it, fresh] = slot.try_emplace(r.label, report.arms.size());
    if (fresh) {
      report.arms.emplace_back();
      report.arms.back().label = r.label;
      report.arms.back().architecture = r.metrics.architecture;
      travel.emplace_back();
      curves.emplace_back();
    }
    ArmSummary &a = report.arms[it->second];
    const TrialMetrics &m = r.metrics;
    ++a.trials;
    if (!r.error.empty()) {
      ++a.errors;
      continue;
    }
    a.success_rate += m.success;
    a.collision_rate += m.collision;
    a.deadlock_rate += m.deadlock;
    a.timeout_rate += m.timeout;
    if (m.success) {
      travel[it->second].push_back(m.travel_steps);
    }
    a.calls_l0 += m.calls_l0;
    a.calls_l1 += m.calls_l1;
    a.calls_l2 += m.calls_l2;
    a.mean_constrained += m.mean_constrained;
    a.feasible_steps += m.feasible_steps;
    a.safe_steps += m.safe_steps;
    a.prediction_time_per_step += m.prediction_time;
    a.mpc_time_per_step += m.mpc_time;
    a.steps += m.travel_steps;
    for (const StepRecord &s : m.steps) {
      TimingPoint &p = curves[it->second][s.constrained];
      ++p.steps;
      p.prediction_time += s.prediction_time;
      p.mpc_time += s.mpc_time;
    }
  }
  for (std::size_t i = 0; i < report.arms.size(); ++i) {
    ArmSummary &a = report.arms[i];
    const double n = a.trials;
    const double ok = a.trials - a.errors;
    a.success_rate *= 100.0 / n;
    a.collision_rate *= 100.0 / n;
    a.deadlock_rate *= 100.0 / n;
    a.timeout_rate *= 100.0 / n;
    if (ok > 0) {
      a.mean_constrained /= ok;
    }
    if (a.steps > 0) {
      a.prediction_time_per_step /= static_cast<double>(a.steps);
      a.mpc_time_per_step /= static_cast<double>(a.steps);
    }
    const Stats st = stats(travel[i]);
    a.travel_mean = st.mean;
    a.travel_std = st.sd;
    a.safety = a.feasible_steps > 0 ? static_cast<double>(a.safe_steps) / static_cast<double>(a.feasible_steps) : 1.0;
    for (auto &[mt, p] : curves[i]) {
      p.label = a.label;
      p.constrained = mt;
      p.prediction_time /= static_cast<double>(p.steps);
      p.mpc_time /= static_cast<double>(p.steps);
      report.timing.push_back(p);
    }
  }
  return report;
}

void write_report(const std::filesystem::path &dir, const BatchReport &report) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw ReportError("cannot create " + dir.string() + ": " + ec.message());
  }
  write_file(dir / "summary.csv", [&](std::ostream &o) {
    o << "label,architecture,trials,errors,success_pct,collision_pct,deadlock_pct,timeout_pct,travel_mean,"
         "travel_std,mean_constrained,calls_l0,calls_l1,calls_l2,model_calls,feasible_steps,safe_steps,"
         "safety,prediction_ms_per_step,mpc_ms_per_step,total_ms_per_step\n";
    for (const ArmSummary &a : report.arms) {
      o << a.label << ',' << to_string(a.architecture) << ',' << a.trials << ',' << a.errors << ','
        << num(a.success_rate) << ',' << num(a.collision_rate) << ',' << num(a.deadlock_rate) << ','
        << num(a.timeout_rate) << ',' << num(a.travel_mean) << ',' << num(a.travel_std) << ','
        << num(a.mean_constrained) << ',' << a.calls_l0 << ',' << a.calls_l1 << ',' << a.calls_l2 << ','
        << a.model_calls() << ',' << a.feasible_steps << ',' << a.safe_steps << ',' << num(a.safety) << ','
        << num(a.prediction_time_per_step * 1e3) << ',' << num(a.mpc_time_per_step * 1e3) << ','
        << num((a.prediction_time_per_step + a.mpc_time_per_step) * 1e3) << '\n';
    }
  });
  write_file(dir / "proximity.csv", [&](std::ostream &o) {
    o << "label,success_pct,calls_l1,calls_l2,model_calls\n";
    for (const ArmSummary &a : report.arms) {
      o << a.label << ',' << num(a.success_rate) << ',' << a.calls_l1 << ',' << a.calls_l2 << ','
        << a.model_calls() << '\n';
    }
  });
  write_file(dir / "timing_by_mt.csv", [&](std::ostream &o) {
    o << "label,constrained,steps,prediction_ms,mpc_ms,total_ms\n";
    for (const TimingPoint &p : report.timing) {
      o << p.label << ',' << p.constrained << ',' << p.steps << ',' << num(p.prediction_time * 1e3) << ','
        << num(p.mpc_time * 1e3) << ',' << num((p.prediction_time + p.mpc_time) * 1e3) << '\n';
    }
  });
  nlohmann::json j;
  for (const ArmSummary &a : report.arms) {
    j["arms"].push_back({{"label", a.label},
                         {"architecture", to_string(a.architecture)},
                         {"trials", a.trials},
                         {"errors", a.errors},
                         {"success_pct", a.success_rate},
                         {"travel_mean", a.travel_mean},
                         {"travel_std", a.travel_std},
                         {"calls_l1", a.calls_l1},
                         {"calls_l2", a.calls_l2},
                         {"safety", a.safety},
                         {"prediction_ms_per_step", a.prediction_time_per_step * 1e3},
                         {"mpc_ms_per_step", a.mpc_time_per_step * 1e3}});
  }
  for (const TimingPoint &p : report.timing) {
    auto &series = j["timing_by_mt"][p.label];
    series["constrained"].push_back(p.constrained);
    series["prediction_ms"].push_back(p.prediction_time * 1e3);
    series["mpc_ms"].push_back(p.mpc_time * 1e3);
  }
  write_file(dir / "report.json", [&](std::ostream &o) { o << j.dump(2) << '\n'; });
  write_file(dir / "success.svg", [&](std::ostream &o) { write_success_svg(o, report); });
  write_file(dir / "timing.svg", [&](std::ostream &o) { write_timing_svg(o, report); });
}

void write_batch(const std::filesystem::path &dir, const std::vector<TrialResult> &results) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw ReportError("cannot create " + dir.string() + ": " + ec.message());
  }
  write_file(dir / "trials.csv", [&](std::ostream &o) { write_trials_csv(o, results); });
  write_file(dir / "steps.csv", [&](std::ostream &o) { write_steps_csv(o, results); });
}

std::vector<TrialResult> read_batch(const std::filesystem::path &dir) {
  std::ifstream trials(dir / "trials.csv");
  if (!trials) {
    throw ReportError("cannot read " + (dir / "trials.csv").string());
  }
  auto results = read_trials_csv(trials);
  std::ifstream steps(dir / "steps.csv");
  if (steps) {
    read_steps_csv(steps, results);
  }
  return results;
}

double measure_call_time(const StudyConfig &config, const Artifacts &artifacts, PredictorLevel level,
                         int calls) {
  PredictorSettings ps = trial_options(config, Architecture::hyprap).predictors;
  ps.library = &artifacts.library;
  const auto rollouts = simulate_rollouts(config.world, config.calibration.seed + 7919, 20,
                                          config.library.window + config.planner.prediction_horizon + 20);
  return prediction_cost(level, ps, rollouts, config.planner.prediction_horizon, calls);
}

TradeoffResult tradeoff_study(const StudyConfig &config, const Artifacts &artifacts, int total,
                              const std::vector<std::pair<int, int>> &allocations,
                              const std::vector<std::uint64_t> &seeds) {
  if (allocations.empty() || seeds.empty()) {
    throw std::invalid_argument("tradeoff_study: need allocations and seeds");
  }
  TradeoffResult out;
  out.dt1 = measure_call_time(config, artifacts, PredictorLevel::accurate, 500);
  out.dt2 = measure_call_time(config, artifacts, PredictorLevel::fast, 500);
  const int H = config.planner.prediction_horizon;
  const double e1 = artifacts.table.mean_radius(PredictorLevel::accurate, std::min(total, artifacts.table.m_max()));
  const double e2 = artifacts.table.mean_radius(PredictorLevel::fast, std::min(total, artifacts.table.m_max()));
  const auto specs = make_specs(config, seeds);
  std::vector<Scenario> scenarios;
  for (const ScenarioSpec &s : specs) {
    scenarios.push_back(generate_scenario(s, H));
  }
  for (const auto &[m1, m2] : allocations) {
    if (m1 < 0 || m2 < 0 || m1 + m2 != total) {
      throw std::invalid_argument("tradeoff_study: allocation must split the total");
    }
    Arm arm = make_arm(config, artifacts, Architecture::hyprap);
    arm.options.forced = ForcedAllocation{total, m1};
    arm.options.collect_safety = false;
    TradeoffPoint p;
    p.m1 = m1;
    p.m2 = m2;
    double pred = 0.0, both = 0.0;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      const TrialMetrics m = run_scenario(scenarios[i], specs[i].seed, arm.options);
      for (const StepRecord &s : m.steps) {
        if (s.full_allocation) {
          ++p.steps;
          pred += s.prediction_time;
          both += s.prediction_time + s.mpc_time;
        }
      }
    }
    if (p.steps > 0) {
      p.prediction_time = pred / static_cast<double>(p.steps);
      p.total_time = both / static_cast<double>(p.steps);
    }
    p.accuracy = compute_E(m1, m2, e1, e2);
    p.theory = m1 * out.dt1 + m2 * out.dt2;
    out.points.push_back(p);
  }
  // Least squares of prediction time on M1.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(out.points.size());
  for (const TradeoffPoint &p : out.points) {
    sx += p.m1;
    sy += p.prediction_time;
    sxx += double(p.m1) * p.m1;
    sxy += p.m1 * p.prediction_time;
  }
  const double den = n * sxx - sx * sx;
  out.slope = den != 0.0 ? (n * sxy - sx * sy) / den : 0.0;
  out.intercept = (sy - out.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  for (const TradeoffPoint &p : out.points) {
    const double fit = out.intercept + out.slope * p.m1;
    ss_res += (p.prediction_time - fit) * (p.prediction_time - fit);
    ss_tot += (p.prediction_time - sy / n) * (p.prediction_time - sy / n);
  }
  out.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return out;
}

void write_tradeoff_csv(std::ostream &out, const TradeoffResult &r) {
  out << "m1,m2,steps,prediction_ms,total_ms,accuracy_E,theory_ms,fit_ms\n";
  for (const TradeoffPoint &p : r.points) {
    out << p.m1 << ',' << p.m2 << ',' << p.steps << ',' << num(p.prediction_time * 1e3) << ','
        << num(p.total_time * 1e3) << ',' << num(p.accuracy) << ',' << num(p.theory * 1e3) << ','
        << num((r.intercept + r.slope * p.m1) * 1e3) << '\n';
  }
  out << "# dT1_ms=" << num(r.dt1 * 1e3) << " dT2_ms=" << num(r.dt2 * 1e3) << " r_squared=" << num(r.r_squared)
      << '\n';
}

SweepTarget parse_sweep_target(const std::string &name) {
  if (name == "calls") {
    return SweepTarget::calls;
  }
  if (name == "success") {
    return SweepTarget::success;
  }
  throw ConfigError("sweep target must be calls or success, got '" + name + "'");
}

SweepResult proximity_sweep(const StudyConfig &config, const Artifacts &artifacts,
                            const std::vector<ScenarioSpec> &specs, SweepTarget target,
                            const ArmSummary &reference, const SweepOptions &options) {
  if (!(options.radius_min > 0.0 && options.radius_max > options.radius_min) || options.max_evaluations < 1) {
    throw std::invalid_argument("proximity_sweep: bad search interval");
  }
  SweepResult out;
  out.target = target;
  out.reference = reference;
  const Architecture arch = target == SweepTarget::calls ? Architecture::prox_a : Architecture::prox_b;
  BatchOptions bo;
  bo.parallelism = config.batch.parallel;
  bo.keep_steps = false;

  // Signed distance to the target in the target's own units; both grow with the radius.
  auto miss = [&](const ArmSummary &a) {
    if (target == SweepTarget::calls) {
      const double ref = std::max<double>(1.0, static_cast<double>(reference.model_calls()));
      return (static_cast<double>(a.model_calls()) - ref) / ref;
    }
    return a.success_rate - reference.success_rate;
  };
  const double tol = target == SweepTarget::calls ? options.calls_tolerance : options.success_tolerance;

  // Matched points rank by the baseline's own merit; misses by their distance to the target.
  auto better = [&](const SweepPoint &a, double da, const SweepPoint &b, double db) {
    const bool ma = std::abs(da) <= tol, mb = std::abs(db) <= tol;
    if (ma != mb) {
      return ma;
    }
    if (!ma) {
      return std::abs(da) < std::abs(db);
    }
    if (target == SweepTarget::calls) {
      return a.summary.success_rate > b.summary.success_rate;
    }
    return a.summary.model_calls() < b.summary.model_calls();
  };
  std::vector<double> ratios = options.inner_ratios;
  if (ratios.empty()) {
    ratios.push_back(config.proximity.inner_ratio);
  }
  double chosen_miss = std::numeric_limits<double>::infinity();
  for (double ratio : ratios) {
    double lo = options.radius_min, hi = options.radius_max;
    for (int i = 0; i < options.max_evaluations; ++i) {
      const double r = 0.5 * (lo + hi);
      Arm arm = make_arm(config, artifacts, arch);
      arm.options.proximity.outer_radius = r;
      arm.options.proximity.inner_ratio = ratio;
      auto trials = run_batch(specs, {arm}, config.planner.prediction_horizon, bo);
      SweepPoint p;
      p.outer_radius = r;
      p.inner_ratio = ratio;
      p.summary = aggregate_report(trials).arms.front();
      const double d = miss(p.summary);
      out.evaluated.push_back(p);
      if (out.evaluated.size() == 1 || better(p, d, out.evaluated[out.chosen], chosen_miss)) {
        out.chosen = out.evaluated.size() - 1;
        chosen_miss = d;
        out.chosen_trials = std::move(trials);
      }
      if (std::abs(d) <= tol) {
        break;
      }
      (d < 0.0 ? lo : hi) = r;
    }
  }
  out.matched = std::abs(chosen_miss) <= tol;
  return out;
}

void write_sweep_csv(std::ostream &out, const SweepResult &r) {
  out << "target,outer_radius,inner_ratio,success_pct,calls_l1,calls_l2,model_calls,reference_success_pct,"
         "reference_model_calls,chosen,matched\n";
  for (std::size_t i = 0; i < r.evaluated.size(); ++i) {
    const SweepPoint &p = r.evaluated[i];
    out << (r.target == SweepTarget::calls ? "calls" : "success") << ',' << num(p.outer_radius) << ','
        << num(p.inner_ratio) << ',' << num(p.summary.success_rate) << ',' << p.summary.calls_l1 << ',' << p.summary.calls_l2 << ','
        << p.summary.model_calls() << ',' << num(r.reference.success_rate) << ','
        << r.reference.model_calls() << ',' << (i == r.chosen) << ',' << (i == r.chosen && r.matched) << '\n';
  }
}

} // namespace hyprap
