#pragma once

#include <complex>

#include "opll/noise.hpp"

namespace opll {

/// Slave ECDL: a phase integrator with free-running noise and two actuators.
///
/// The injection-current FM response is the difference of a thermal term,
/// which rolls off above `f_thermal_hz`, and a frequency-flat carrier-density
/// term of opposite sign. At DC the thermal term wins, so positive current
/// raises the optical frequency; well above the crossover the response is
/// sign-flipped. The piezo is a resonant second-order low-pass.
///
/// None of the actuator gains are known for a specific device. The defaults
/// put the current-FM crossover at 3 MHz and the first piezo resonance at 3 kHz.
struct LaserParams {
  PowerLawNoiseSpec free_run_noise{{{-2, 3.0e4}, {-3, 1.0e8}}};
  double k_thermal_hz_per_ma = 2.0e6;
  double f_thermal_hz = 3.0e5;
  double k_carrier_hz_per_ma = 2.0e6 / 101.0;
  double k_piezo_hz_per_v = 1.0e7;
  double f_piezo_hz = 3.0e3;
  double q_piezo = 3.0;
  double detuning0_hz = 0.0;
  /// Largest current-induced detuning before the laser is considered to mode-hop.
  double mode_hop_limit_hz = 5.0e8;

  void validate() const;

  /// Frequency at which the current-FM phase passes -90 degrees.
  double crossover_hz() const;
};

/// H(f) = k_thermal / (1 + i f / f_thermal) - k_carrier, in Hz/mA.
std::complex<double> current_fm_response(const LaserParams& params, double f);

/// k_piezo w^2 / (s^2 + s w / q + w^2) at s = i 2 pi f, in Hz/V.
std::complex<double> piezo_response(const LaserParams& params, double f);

struct LaserState {
  double phase = 0.0;  // rad, relative to the target beat ramp

  // thermal low-pass: last input and the last three raw outputs
  double thermal_in = 0.0;
  double thermal_out[3] = {0.0, 0.0, 0.0};
  // piezo biquad (transposed direct form II) and its raw output history
  double piezo_z[2] = {0.0, 0.0};
  double piezo_out[3] = {0.0, 0.0, 0.0};

  double current_shift_hz = 0.0;  // thermal + carrier-density shift after the last step
  double piezo_shift_hz = 0.0;
};

/// Discretized actuator dynamics for a fixed step.
///
/// Both actuator filters use the bilinear transform followed by a two-tap
/// correction (1 + c (1 - z^-1)^2) that removes the leading frequency-warping
/// error of the bilinear map (c = -1/12 for the first-order thermal path,
/// -1/6 for the second-order piezo). The correction is FIR, so stability is
/// that of the bilinear filters.
class LaserModel {
 public:
  LaserModel(const LaserParams& params, double dt);

  const LaserParams& params() const { return params_; }
  double dt() const { return dt_; }

  /// Advances by one step. `noise_hz` is the free-running frequency deviation
  /// over the step.
  void step(LaserState& state, double i_mod_ma, double v_piezo, double noise_hz) const;

 private:
  LaserParams params_;
  double dt_;
  double th_b_, th_a1_;         // y = th_b (u + u1) - th_a1 y1
  double pz_b0_, pz_b1_, pz_b2_, pz_a1_, pz_a2_;
};

/// Single-step convenience wrapper around LaserModel.
LaserState step_laser(const LaserState& state, const LaserParams& params, double i_mod_ma,
                      double v_piezo, double noise_hz, double dt);

}  // namespace opll
