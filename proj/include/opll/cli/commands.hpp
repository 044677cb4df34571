#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "opll/cli/config.hpp"

namespace opll::cli {

inline constexpr const char* kVersion = "opll 0.1.0";

enum ExitCode : int { kExitLocked = 0, kExitUsage = 1, kExitNotLocked = 2 };

/// Flat key=value record written next to every command's outputs.
struct RunManifest {
  std::string command;
  std::string config_hash;  // empty for commands without a config
  std::optional<std::uint64_t> seed;
  std::vector<std::string> outputs;
  double wall_time_s = 0.0;
  std::vector<std::pair<std::string, std::string>> fields;  // command-specific results

  void set(const std::string& key, const std::string& value);
  std::string text() const;
  void write(const std::string& path) const;
};

struct SimulateOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  std::size_t every = 1;  // keep every n-th sample in the CSV outputs
};

struct AnalyzeOptions {
  std::string input;
  std::string mode;  // psd, eq1, mvar, rms
  std::string out_dir;
  std::size_t seg_len = 4096;
  double overlap = 0.5;
  std::string detrend = "mean";       // psd: none, mean or linear
  double carrier_width_hz = 0.0;      // eq1: 0 selects three bins
  std::optional<double> span_hz;      // eq1 on a spectrum
  std::optional<double> rbw_hz;       // eq1 on an analyzer trace
  std::optional<double> nu0_hz;       // mvar
  std::optional<double> tau_min_s;    // mvar
  std::optional<double> tau_max_s;    // mvar
  int per_decade = 10;                // mvar
  double rate_hz = 5.0e6;             // rms
};

struct SweepOptions {
  std::string config_path;
  std::string axis;  // dotted path into the config, e.g. pfd.n_div
  std::vector<double> values;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  unsigned threads = 0;  // 0 reads OPLL_THREADS, then the hardware count
};

/// Comma-separated numbers; an empty string gives an empty list.
/// Throws std::invalid_argument on anything else.
std::vector<double> parse_values(const std::string& text);

/// Measured phase variance (carrier-fraction method) of a run after its settling part.
double run_phase_variance(const SimRecord& record, const AnalysisSettings& settings);

int cmd_simulate(const SimulateOptions& opt, std::ostream& out, std::ostream& err);
int cmd_analyze(const AnalyzeOptions& opt, std::ostream& out, std::ostream& err);
int cmd_sweep(const SweepOptions& opt, std::ostream& out, std::ostream& err);
int cmd_selftest(std::ostream& out, std::ostream& err);

}  // namespace opll::cli
