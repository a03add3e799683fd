#include "hyprap/artifacts.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace hyprap {

namespace {

static_assert(std::endian::native == std::endian::little, "artifact format assumes little-endian");

constexpr std::array<char, 8> kMagic{'H', 'Y', 'P', 'R', 'A', 'P', 'A', 'F'};

enum class Kind : std::uint32_t { library = 1, calibration = 2, table = 3 };

const char *kind_name(Kind k) {
  switch (k) {
  case Kind::library:
    return "library";
  case Kind::calibration:
    return "calibration";
  case Kind::table:
    return "epsilon table";
  }
  return "unknown";
}

template <class T> void put(std::ostream &out, T v) { out.write(reinterpret_cast<const char *>(&v), sizeof v); }

template <class T> T get(std::istream &in) {
  T v{};
  in.read(reinterpret_cast<char *>(&v), sizeof v);
  if (!in) {
    throw ArtifactError("artifact: truncated file");
  }
  return v;
}

void put_doubles(std::ostream &out, const std::vector<double> &v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char *>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream &in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (std::uint64_t{1} << 34)) {
    throw ArtifactError("artifact: implausible array length");
  }
  std::vector<double> v(n);
  in.read(reinterpret_cast<char *>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) {
    throw ArtifactError("artifact: truncated array");
  }
  return v;
}

void put_header(std::ostream &out, Kind kind, std::uint64_t fingerprint) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kArtifactVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(kind));
  put<std::uint64_t>(out, fingerprint);
}

std::uint64_t get_header(std::istream &in, Kind kind) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) {
    throw ArtifactError("artifact: not an artifact file");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kArtifactVersion) {
    throw ArtifactError("artifact: version " + std::to_string(version) + ", expected " +
                        std::to_string(kArtifactVersion));
  }
  const auto k = static_cast<Kind>(get<std::uint32_t>(in));
  if (k != kind) {
    throw ArtifactError(std::string("artifact: expected ") + kind_name(kind) + ", found " + kind_name(k));
  }
  return get<std::uint64_t>(in);
}

std::vector<double> flatten_pairs(const std::vector<CalibrationPair> &pairs) {
  std::vector<double> out;
  for (const CalibrationPair &p : pairs) {
    for (const auto *pts : {&p.predicted, &p.truth}) {
      for (const Vec2 &q : *pts) {
        out.push_back(q.x);
        out.push_back(q.y);
      }
    }
  }
  return out;
}

std::vector<CalibrationPair> unflatten_pairs(const std::vector<double> &flat, int horizon) {
  const std::size_t per = 4 * static_cast<std::size_t>(horizon);
  if (horizon < 1 || flat.size() % per != 0) {
    throw ArtifactError("artifact: calibration array does not divide into pairs");
  }
  std::vector<CalibrationPair> out(flat.size() / per);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double *base = flat.data() + i * per;
    for (int h = 0; h < horizon; ++h) {
      out[i].predicted.push_back({base[2 * h], base[2 * h + 1]});
      out[i].truth.push_back({base[2 * (horizon + h)], base[2 * (horizon + h) + 1]});
    }
  }
  return out;
}

template <class F> auto open_read(const std::filesystem::path &p, F &&reader) {
  std::ifstream in(p, std::ios::binary);
  if (!in) {
    throw ArtifactError("artifact: cannot open " + p.string());
  }
  try {
    return reader(in);
  } catch (const ArtifactError &e) {
    throw ArtifactError(p.string() + ": " + e.what());
  }
}

template <class F> void open_write(const std::filesystem::path &p, F &&writer) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ArtifactError("artifact: cannot write " + p.string());
  }
  writer(out);
  if (!out) {
    throw ArtifactError("artifact: write failed for " + p.string());
  }
}

} // namespace

std::uint64_t artifact_fingerprint(const StudyConfig &config) {
  std::ostringstream os;
  write_config(os, config);
  std::istringstream lines(os.str());
  std::string line, section;
  std::uint64_t h = 1469598103934665603ULL;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.front() == '[') {
      section = line;
      continue;
    }
    const bool relevant = section == "[world]" || section == "[obstacles]" || section == "[library]" ||
                          section == "[calibration]" || section == "[conformal]" ||
                          line.rfind("prediction_horizon", 0) == 0 || line.rfind("k ", 0) == 0;
    if (!relevant || line.rfind("artifact_dir", 0) == 0) {
      continue;
    }
    for (char c : section + line) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

Artifacts build_artifacts(const StudyConfig &config) {
  config.validate();
  Artifacts a;
  a.fingerprint = artifact_fingerprint(config);
  const int H = config.planner.prediction_horizon;
  {
    const auto rollouts =
        simulate_rollouts(config.world, config.library.seed, config.library.rollouts, config.library.steps);
    a.library = build_library(rollouts, config.library.window, H, config.library.stride);
    a.library.seed = config.library.seed;
  }
  if (a.library.empty()) {
    throw ArtifactError("artifact: library is empty; rollouts shorter than W + H");
  }
  PredictorSettings ps;
  ps.library = &a.library;
  ps.k = config.k;
  ps.workspace = config.world.workspace;
  CalibrationOptions opts = config.calibration;
  opts.window = config.library.window;
  opts.horizon = H;
  const PredictorLevel levels[2] = {PredictorLevel::accurate, PredictorLevel::fast};
  a.calibration = generate_calibration_set(config.world, opts, ps, levels);
  a.table = build_epsilon_table(a.calibration, config.conformal.delta, H, config.conformal.m_max,
                                config.conformal.mode);
  return a;
}

void write_library(std::ostream &out, const TrajectoryLibrary &lib, std::uint64_t fingerprint) {
  put_header(out, Kind::library, fingerprint);
  put<std::int32_t>(out, lib.window);
  put<std::int32_t>(out, lib.horizon);
  put<std::uint64_t>(out, lib.size());
  put<std::uint64_t>(out, lib.seed);
  put_doubles(out, lib.history);
  put_doubles(out, lib.future);
}

TrajectoryLibrary read_library(std::istream &in, std::uint64_t *fingerprint) {
  const auto fp = get_header(in, Kind::library);
  TrajectoryLibrary lib;
  lib.window = get<std::int32_t>(in);
  lib.horizon = get<std::int32_t>(in);
  const auto n = get<std::uint64_t>(in);
  lib.seed = get<std::uint64_t>(in);
  lib.history = get_doubles(in);
  lib.future = get_doubles(in);
  if (lib.window < 1 || lib.horizon < 1 || lib.size() != n ||
      lib.future.size() != n * 2 * static_cast<std::size_t>(lib.horizon)) {
    throw ArtifactError("artifact: library header does not match its arrays");
  }
  if (fingerprint != nullptr) {
    *fingerprint = fp;
  }
  return lib;
}

void write_calibration(std::ostream &out, const CalibrationSet &set, std::uint64_t fingerprint) {
  put_header(out, Kind::calibration, fingerprint);
  put<std::int32_t>(out, set.horizon);
  put<std::uint64_t>(out, set.accurate.size());
  put<std::uint64_t>(out, set.fast.size());
  put<std::uint64_t>(out, set.seed);
  put_doubles(out, flatten_pairs(set.accurate));
  put_doubles(out, flatten_pairs(set.fast));
}

CalibrationSet read_calibration(std::istream &in, std::uint64_t *fingerprint) {
  const auto fp = get_header(in, Kind::calibration);
  CalibrationSet set;
  set.horizon = get<std::int32_t>(in);
  const auto n1 = get<std::uint64_t>(in);
  const auto n2 = get<std::uint64_t>(in);
  set.seed = get<std::uint64_t>(in);
  set.accurate = unflatten_pairs(get_doubles(in), set.horizon);
  set.fast = unflatten_pairs(get_doubles(in), set.horizon);
  if (set.accurate.size() != n1 || set.fast.size() != n2) {
    throw ArtifactError("artifact: calibration header does not match its arrays");
  }
  if (fingerprint != nullptr) {
    *fingerprint = fp;
  }
  return set;
}

void write_table(std::ostream &out, const EpsilonTable &table, std::uint64_t fingerprint) {
  put_header(out, Kind::table, fingerprint);
  put<std::int32_t>(out, table.m_max());
  put<std::int32_t>(out, table.horizon());
  put<double>(out, table.delta());
  put<std::uint64_t>(out, table.calibration_size());
  put<std::uint64_t>(out, table.seed());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(table.mode()));
  put_doubles(out, table.raw());
}

EpsilonTable read_table(std::istream &in, std::uint64_t *fingerprint) {
  const auto fp = get_header(in, Kind::table);
  const auto m_max = get<std::int32_t>(in);
  const auto horizon = get<std::int32_t>(in);
  const auto delta = get<double>(in);
  const auto n = get<std::uint64_t>(in);
  const auto seed = get<std::uint64_t>(in);
  const auto mode = get<std::uint32_t>(in);
  if (m_max < 1 || horizon < 1 || mode > 1) {
    throw ArtifactError("artifact: bad epsilon table header");
  }
  EpsilonTable table(m_max, horizon, delta, n, seed, static_cast<BudgetMode>(mode));
  auto values = get_doubles(in);
  if (values.size() != table.raw().size()) {
    throw ArtifactError("artifact: epsilon table size does not match its header");
  }
  table.raw() = std::move(values);
  if (fingerprint != nullptr) {
    *fingerprint = fp;
  }
  return table;
}

void write_table_csv(std::ostream &out, const EpsilonTable &table) {
  out << "level,M,h,epsilon\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (PredictorLevel l : {PredictorLevel::accurate, PredictorLevel::fast}) {
    for (int m = 1; m <= table.m_max(); ++m) {
      for (int h = 1; h <= table.horizon(); ++h) {
        out << level_index(l) << ',' << m << ',' << h << ',' << table.at(l, m, h) << '\n';
      }
    }
  }
}

void save_artifacts(const std::filesystem::path &dir, const Artifacts &a, const StudyConfig &config) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw ArtifactError("artifact: cannot create " + dir.string() + ": " + ec.message());
  }
  open_write(dir / "library.bin", [&](std::ostream &o) { write_library(o, a.library, a.fingerprint); });
  open_write(dir / "calibration.bin", [&](std::ostream &o) { write_calibration(o, a.calibration, a.fingerprint); });
  open_write(dir / "epsilon.bin", [&](std::ostream &o) { write_table(o, a.table, a.fingerprint); });
  open_write(dir / "epsilon.csv", [&](std::ostream &o) { write_table_csv(o, a.table); });
  open_write(dir / "config.ini", [&](std::ostream &o) { write_config(o, config); });
}

Artifacts load_artifacts(const std::filesystem::path &dir, const StudyConfig &config) {
  Artifacts a;
  std::uint64_t f1 = 0, f2 = 0, f3 = 0;
  a.library = open_read(dir / "library.bin", [&](std::istream &in) { return read_library(in, &f1); });
  a.calibration = open_read(dir / "calibration.bin", [&](std::istream &in) { return read_calibration(in, &f2); });
  a.table = open_read(dir / "epsilon.bin", [&](std::istream &in) { return read_table(in, &f3); });
  const std::uint64_t expected = artifact_fingerprint(config);
  if (f1 != expected || f2 != expected || f3 != expected) {
    throw ArtifactError("artifact: " + dir.string() + " was built from a different configuration; rerun calibrate");
  }
  const int H = config.planner.prediction_horizon;
  if (a.library.window != config.library.window || a.library.horizon < H || a.table.horizon() != H ||
      a.table.m_max() != config.conformal.m_max || a.table.delta() != config.conformal.delta) {
    throw ArtifactError("artifact: W, H, M_max or delta disagree with the configuration");
  }
  a.fingerprint = expected;
  return a;
}

Artifacts load_or_build_artifacts(const StudyConfig &config) {
  const std::filesystem::path dir = config.conformal.artifact_dir;
  if (std::filesystem::exists(dir / "epsilon.bin")) {
    return load_artifacts(dir, config);
  }
  Artifacts a = build_artifacts(config);
  save_artifacts(dir, a, config);
  return a;
}

} // namespace hyprap
