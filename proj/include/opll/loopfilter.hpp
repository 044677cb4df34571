#pragma once

#include <complex>

namespace opll {

/// Analog chain between the charge pump and the two actuators.
///
///   v_pi = clamp(k_p * i + integral(i) / tau_i, [rail_lo, rail_hi])
///   v3   = clamp(main_gain * (pre_gain * v_pi + bias), +-main_rail)
///   fast = fast_gain * lead(v3)           -> current modulator
///   slow = clamp(integral(v3) / slow_tau, +-slow_limit) -> piezo
///
/// With the default gain-2 preamp and -5 V bias the main stage sits at zero
/// when the PI node is at 2.5 V, the middle of its 0-5 V range.
///
/// The slow-path gain may be set so high that a piezo-only loop oscillates
/// about the target frequency; the fast path is what makes the combined loop
/// stable.
struct LoopConfig {
  double pi_proportional = 0.55;   // V per unit pump current
  double pi_integral_tau = 2.9e-6; // unit pump current * s per V
  double rail_lo = 0.0;            // V
  double rail_hi = 5.0;            // V
  double pre_gain = 2.0;
  double bias = -5.0;              // V
  double main_gain = 300.0;
  double main_rail = 15.0;         // V, symmetric
  double lead_tau1 = 5.03e-7;      // s
  double lead_tau2 = 5.03e-8;      // s
  double fast_gain = 1.0;          // 0 disables the current path
  double modulator_ma_per_v = 1.0; // current-modulator transconductance
  double slow_tau = 3.0e-3;        // s
  double slow_limit = 10.0;        // V, symmetric
  bool slow_enabled = true;
  bool clamps_enabled = true;      // false makes the chain affine (tests only)

  void validate() const;

  /// PI-node voltage that puts the main stage output at zero.
  double locked_pi_voltage() const { return -bias / pre_gain; }
};

struct FilterChainState {
  double pi_integral = 0.0;   // V
  double lead_state = 0.0;    // V, low-pass memory of the lead network
  double slow_integral = 0.0; // V
  bool overrun = false;       // latched; cleared only by reset_overrun
};

struct FilterStepOutput {
  FilterChainState state;
  double fast_out = 0.0;  // V
  double slow_out = 0.0;  // V
  double v_pi = 0.0;      // V, for inspection
  double v3 = 0.0;        // V, main-stage output
};

/// Precomputed discretization of the chain for a fixed step.
///
/// The lead network is discretized step-invariantly: it is split into its
/// high-frequency gain tau1/tau2 plus a first-order low-pass, and the low-pass
/// uses the exact exp(-dt/tau2) update. The PI and slow integrators are
/// forward-Euler accumulators.
class LoopFilterChain {
 public:
  LoopFilterChain(const LoopConfig& cfg, double dt);

  const LoopConfig& config() const { return cfg_; }

  FilterStepOutput step(const FilterChainState& state, double i_pump) const;

 private:
  LoopConfig cfg_;
  double dt_;
  double lead_decay_;
};

FilterStepOutput filter_step(const FilterChainState& state, const LoopConfig& cfg, double i_pump,
                             double dt);

/// (1 + i 2 pi f tau1) / (1 + i 2 pi f tau2)
std::complex<double> lead_response(const LoopConfig& cfg, double f);

/// Continuous small-signal PI impedance k_p + 1/(s tau_i), V per unit current.
std::complex<double> pi_response(const LoopConfig& cfg, double f);

inline void reset_overrun(FilterChainState& state) { state.overrun = false; }

}  // namespace opll
