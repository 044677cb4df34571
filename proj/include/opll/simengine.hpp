#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "opll/laser.hpp"
#include "opll/loopfilter.hpp"
#include "opll/noise.hpp"
#include "opll/pfd.hpp"

namespace opll {

/// Everything needed for one closed-loop run.
///
/// Only the beat phase (slave minus master) is simulated; the microwave
/// carrier exists only as the nominal ramp 2 pi f_beat t. The reference enters
/// the discriminator as its phase divided by R. The discriminator's own noise
/// floor is injected as white phase noise on the reference side, referred to
/// the beat carrier.
struct SimConfig {
  double f_beat_target_hz = 6.912e9;
  double f_ref_hz = 216.0e6;
  LaserParams laser{};
  PfdConfig pfd{};
  LoopConfig loop{};
  std::optional<DbcSpec> ref_noise = DbcSpec::flat(-125.0);
  PowerLawNoiseSpec master_noise{{{-2, 1.0e2}}};
  PowerLawNoiseSpec detector_floor{{{0, 1.0e-12}}};
  bool pfd_floor_enabled = true;
  double fs_hz = 1.0e8;
  double duration_s = 0.01;
  std::uint64_t seed = 1;

  // lock bookkeeping
  double lock_threshold_rad = std::numbers::pi / 2.0;  // divided-phase excursion allowed
  double lock_periods = 1.0e4;                         // divided periods inside the bound
  double divergence_cycles = 1.0e3;                    // divided cycles, with slow path at its limit
  std::size_t max_samples = std::size_t{1} << 24;
  /// Start with the PI node at its locked voltage instead of 0 V.
  bool start_at_equilibrium = true;

  /// Checks every module's invariants plus the lock condition
  /// f_ref / R == f_beat / (P N) (1 ppm), fs >= 20 x loop bandwidth and the
  /// sample budget. Throws std::invalid_argument naming the violation.
  void validate() const;

  std::size_t sample_count() const;
  /// Beat frequency the loop actually steers to: f_ref * P * N / R.
  double lock_frequency_hz() const;
  double comparison_frequency_hz() const { return f_ref_hz / static_cast<double>(pfd.r_div); }
};

/// Small-signal open-loop gain from beat phase back to beat phase.
std::complex<double> open_loop_gain(const SimConfig& cfg, double f);

/// Highest frequency where |open_loop_gain| crosses unity; 0 if it never does.
double estimate_loop_bandwidth(const SimConfig& cfg);

struct SimRecord {
  /// Measured beat phase: 2 pi f_beat t + slave - master + detector noise.
  PhaseSeries beat_phase;
  /// Beat phase minus 2 pi f_lock t, without detector noise.
  PhaseSeries phase_error;
  std::vector<double> fast_drive;  // V at the lead-filter output
  std::vector<double> slow_drive;  // V at the piezo integrator
  std::vector<double> main_stage;  // V at the gain stage feeding both paths
  std::optional<double> lock_time_s;
  bool locked = false;  // inside the lock bound at the end of the run
  std::vector<double> overrun_events;  // s, slow integrator reaching a limit
  std::string failure;  // empty unless the run was aborted
  double lock_frequency_hz = 0.0;

  bool aborted() const { return !failure.empty(); }
};

/// Seeds of the independent noise processes of one loop.
struct NoiseSeeds {
  std::uint64_t master = 0;
  std::uint64_t reference = 0;
  std::uint64_t laser = 0;
  std::uint64_t pfd_floor = 0;
  std::uint64_t detector = 0;

  static NoiseSeeds from(std::uint64_t seed);
};

/// Runs one loop. Divergence or a mode hop ends the run early with
/// `failure` set and the record truncated at that point; it does not throw.
/// Throws std::invalid_argument if the configuration is invalid.
SimRecord run_simulation(const SimConfig& cfg);
SimRecord run_simulation(const SimConfig& cfg, const NoiseSeeds& seeds);

struct TwoSlaveSeeds {
  std::uint64_t master = 0;
  /// Shared reference realization; when empty each loop draws its own from its seed.
  std::optional<std::uint64_t> reference;
};

struct TwoSlaveResult {
  PhaseSeries differential;  // slave_a - slave_b
  PhaseSeries measured;      // differential plus detector noise of cfg_a
  SimRecord a;
  SimRecord b;
  std::string failed_loop;  // "a", "b", "a,b" or empty

  bool ok() const { return failed_loop.empty(); }
};

/// Two slaves locked to one master. The master realization is common to both
/// loops, so it cancels in the differential phase; each loop keeps its own
/// laser and discriminator noise. Both configs must share fs and duration.
TwoSlaveResult two_slave_experiment(const SimConfig& cfg_a, const SimConfig& cfg_b,
                                    const TwoSlaveSeeds& seeds);

}  // namespace opll
