#pragma once

// JSON-lines track files and small output helpers. Each file starts with a
// header record carrying the config hash and seed; every following line is
// one time step.

#include "skewtvb/common.hpp"
#include "skewtvb/scenarios.hpp"
#include "skewtvb/track.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace skewtvb {

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

struct FileHeader {
  std::string kind;  // "simulation" or "estimate"
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string estimator;  // estimate files only
  std::size_t runs = 0;
};

/// Header line plus, per run and step, {run, k, x[], y[]}.
void write_simulation(std::ostream& os, const FileHeader& header,
                      const std::vector<SimulatedRun>& runs);
struct SimulationFile {
  FileHeader header;
  std::vector<SimulatedRun> runs;
};
SimulationFile read_simulation(std::istream& is);

/// Header line plus, per run and step, {run, k, mean[], cov_upper_triangle[],
/// diagnostics{}}.
void write_tracks(std::ostream& os, const FileHeader& header,
                  const std::vector<EstimateTrack>& tracks);
struct TrackFile {
  FileHeader header;
  std::vector<EstimateTrack> tracks;
};
TrackFile read_tracks(std::istream& is);

/// Shortest round-trip decimal form; "inf"/"-inf"/"nan" for non-finite values.
std::string format_double(double v);

}  // namespace skewtvb
