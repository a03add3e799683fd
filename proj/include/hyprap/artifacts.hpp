#pragma once

#include "hyprap/config.hpp"
#include "hyprap/conformal.hpp"
#include "hyprap/predictors.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace hyprap {

class ArtifactError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kArtifactVersion = 1;

/// Offline products of `calibrate`: kNN library, calibration pairs and the epsilon table.
struct Artifacts {
  TrajectoryLibrary library;
  CalibrationSet calibration;
  EpsilonTable table;
  std::uint64_t fingerprint = 0; // of the config fields the artifacts depend on
};

/// FNV-1a over the serialized world, obstacle, library, calibration and conformal settings.
std::uint64_t artifact_fingerprint(const StudyConfig &config);

/// Library from `library.rollouts` rollouts, calibration pairs from independent rollouts
/// seeded by `calibration.seed`, then the table. Throws CalibrationInfeasible when n is too small.
Artifacts build_artifacts(const StudyConfig &config);

// Binary layout: "HYPRAPAF", u32 version, u32 kind, u64 fingerprint, kind-specific header
// (W, H, n, seed, ...), then flat little-endian double arrays.
void write_library(std::ostream &out, const TrajectoryLibrary &lib, std::uint64_t fingerprint);
TrajectoryLibrary read_library(std::istream &in, std::uint64_t *fingerprint = nullptr);
void write_calibration(std::ostream &out, const CalibrationSet &set, std::uint64_t fingerprint);
CalibrationSet read_calibration(std::istream &in, std::uint64_t *fingerprint = nullptr);
void write_table(std::ostream &out, const EpsilonTable &table, std::uint64_t fingerprint);
EpsilonTable read_table(std::istream &in, std::uint64_t *fingerprint = nullptr);

/// level,M,h,epsilon rows.
void write_table_csv(std::ostream &out, const EpsilonTable &table);

/// library.bin, calibration.bin, epsilon.bin, epsilon.csv and config.ini under `dir`.
void save_artifacts(const std::filesystem::path &dir, const Artifacts &artifacts, const StudyConfig &config);

/// Reads the three binaries and checks them against `config` (fingerprint, W, H, delta, M_max).
Artifacts load_artifacts(const std::filesystem::path &dir, const StudyConfig &config);

/// Loads from config.conformal.artifact_dir, building and saving there first when absent.
Artifacts load_or_build_artifacts(const StudyConfig &config);

} // namespace hyprap
