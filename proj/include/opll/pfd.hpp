#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "opll/noise.hpp"

namespace opll {

/// Integer-N phase-frequency discriminator settings.
struct PfdConfig {
  std::int64_t prescaler_p = 1;
  std::int64_t n_div = 96;
  std::int64_t r_div = 3;
  double i_cp = 1.0;  // pump magnitude, normalized (the loop gain lives in the filter chain)

  static constexpr std::int64_t kMinN = 24;
  static constexpr std::int64_t kMaxN = 500000;
  static constexpr std::int64_t kMinR = 1;
  static constexpr std::int64_t kMaxR = 16383;

  void validate() const;
  /// Total division applied to the beat phase (prescaler times N).
  std::int64_t beat_modulus() const { return prescaler_p * n_div; }
};

/// Dual flip-flop state plus the running divided phases (rad) of both inputs.
struct PfdState {
  bool up = false;
  bool down = false;
  double ref_accum = 0.0;
  double div_accum = 0.0;
};

struct PfdStepOutput {
  PfdState state;
  double current = 0.0;  // one of +i_cp, 0, -i_cp
};

/// One edge event: a reference edge sets UP, a divider edge sets DOWN, and
/// both set means both reset. Output is i_cp * (up - down) after the reset.
PfdStepOutput pfd_step(const PfdState& state, const PfdConfig& cfg, bool ref_edge,
                       bool div_edge);

/// Divider as an edge generator: one edge each time the phase accumulated since
/// the first sample crosses another multiple of 2 pi * modulus. Crossing
/// instants are linearly interpolated between samples.
/// Throws std::domain_error if the phase ever decreases.
std::vector<double> edges_from_phase(const PhaseSeries& series, std::int64_t modulus);

/// Keeps every modulus-th edge of an edge train (a counter chained after another).
std::vector<double> divide_edges(std::span<const double> edges, std::int64_t modulus);

/// Drives the state machine with two sorted edge trains and returns the
/// time-averaged pump output over [t_begin, t_end].
double mean_pump_output(std::span<const double> ref_edges, std::span<const double> div_edges,
                        const PfdConfig& cfg, double t_begin, double t_end,
                        PfdState initial = {});

struct PfdAdvance {
  PfdState state;
  double mean_current = 0.0;  // pump charge over the step divided by the step length
  int ref_edges = 0;
  int div_edges = 0;
};

/// Advances the discriminator over one fixed simulation step.
///
/// The divided phases are taken to move linearly from the state's running
/// values to `ref_phase_end` / `div_phase_end` (rad) across the step; every
/// 2 pi crossing inside the step becomes an edge at its interpolated instant.
/// The returned current is the exact pump charge over the step divided by dt,
/// which is what the integrating loop filter sees.
/// A phase that moves backwards produces no edges (a counter does not count down).
PfdAdvance pfd_advance(const PfdState& state, const PfdConfig& cfg, double ref_phase_end,
                       double div_phase_end);

}  // namespace opll
