#include "opll/loopfilter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace opll {

namespace {
bool positive_finite(double v) { return v > 0.0 && std::isfinite(v); }
}  // namespace

void LoopConfig::validate() const {
  if (!positive_finite(pi_integral_tau)) {
    throw std::invalid_argument("LoopConfig: pi_integral_tau must be positive");
  }
  if (!std::isfinite(pi_proportional) || pi_proportional < 0.0) {
    throw std::invalid_argument("LoopConfig: pi_proportional must be >= 0");
  }
  if (!(rail_lo < rail_hi) || !std::isfinite(rail_lo) || !std::isfinite(rail_hi)) {
    throw std::invalid_argument("LoopConfig: rail_lo must be below rail_hi");
  }
  if (!std::isfinite(pre_gain) || !std::isfinite(bias) || !std::isfinite(main_gain)) {
    throw std::invalid_argument("LoopConfig: non-finite gain or bias");
  }
  if (!positive_finite(main_rail)) throw std::invalid_argument("LoopConfig: main_rail");
  if (!(lead_tau2 > 0.0) || !(lead_tau1 > lead_tau2) || !std::isfinite(lead_tau1)) {
    throw std::invalid_argument("LoopConfig: lead filter needs lead_tau1 > lead_tau2 > 0");
  }
  if (!std::isfinite(fast_gain) || fast_gain < 0.0) {
    throw std::invalid_argument("LoopConfig: fast_gain must be >= 0");
  }
  if (!std::isfinite(modulator_ma_per_v)) {
    throw std::invalid_argument("LoopConfig: modulator_ma_per_v");
  }
  if (!positive_finite(slow_tau)) throw std::invalid_argument("LoopConfig: slow_tau");
  if (!positive_finite(slow_limit)) {
    throw std::invalid_argument("LoopConfig: slow_limit must be positive and finite");
  }
}

LoopFilterChain::LoopFilterChain(const LoopConfig& cfg, double dt) : cfg_(cfg), dt_(dt) {
  cfg_.validate();
  if (!positive_finite(dt)) throw std::invalid_argument("LoopFilterChain: dt must be positive");
  lead_decay_ = std::exp(-dt / cfg_.lead_tau2);
}

FilterStepOutput LoopFilterChain::step(const FilterChainState& state, double i_pump) const {
  if (!std::isfinite(i_pump)) throw std::invalid_argument("filter_step: non-finite pump current");
  const LoopConfig& c = cfg_;
  FilterStepOutput out;
  FilterChainState s = state;

  s.pi_integral += i_pump * dt_ / c.pi_integral_tau;
  double v_pi = i_pump * c.pi_proportional + s.pi_integral;
  if (c.clamps_enabled) {
    // the integrating capacitor cannot charge past the pump's compliance range
    s.pi_integral = std::clamp(s.pi_integral, c.rail_lo, c.rail_hi);
    v_pi = std::clamp(v_pi, c.rail_lo, c.rail_hi);
  }

  const double v2 = c.pre_gain * v_pi;
  double v3 = c.main_gain * (v2 + c.bias);
  if (c.clamps_enabled) v3 = std::clamp(v3, -c.main_rail, c.main_rail);

  // lead = r + (1 - r) / (1 + s tau2), r = tau1 / tau2
  const double r = c.lead_tau1 / c.lead_tau2;
  const double lead = r * v3 + (1.0 - r) * s.lead_state;
  s.lead_state = lead_decay_ * s.lead_state + (1.0 - lead_decay_) * v3;

  double slow = 0.0;
  if (c.slow_enabled) {
    s.slow_integral += v3 * dt_ / c.slow_tau;
    if (c.clamps_enabled && std::abs(s.slow_integral) >= c.slow_limit) {
      s.slow_integral = std::copysign(c.slow_limit, s.slow_integral);
      s.overrun = true;
    }
    slow = s.slow_integral;
  }

  out.state = s;
  out.fast_out = c.fast_gain * lead;
  out.slow_out = slow;
  out.v_pi = v_pi;
  out.v3 = v3;
  return out;
}

FilterStepOutput filter_step(const FilterChainState& state, const LoopConfig& cfg, double i_pump,
                             double dt) {
  return LoopFilterChain(cfg, dt).step(state, i_pump);
}

std::complex<double> lead_response(const LoopConfig& cfg, double f) {
  if (!(f >= 0.0)) throw std::invalid_argument("lead_response: f must be >= 0");
  const double w = 2.0 * std::numbers::pi * f;
  return std::complex<double>(1.0, w * cfg.lead_tau1) / std::complex<double>(1.0, w * cfg.lead_tau2);
}

std::complex<double> pi_response(const LoopConfig& cfg, double f) {
  if (!(f > 0.0)) throw std::invalid_argument("pi_response: f must be > 0");
  const std::complex<double> s(0.0, 2.0 * std::numbers::pi * f);
  return cfg.pi_proportional + 1.0 / (s * cfg.pi_integral_tau);
}

}  // namespace opll
