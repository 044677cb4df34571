#include "opll/laser.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace opll {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool positive_finite(double v) { return v > 0.0 && std::isfinite(v); }

// Leading-order warping compensation for the bilinear map.
constexpr double kThermalWarpTap = -1.0 / 12.0;
constexpr double kPiezoWarpTap = -1.0 / 6.0;
}  // namespace

void LaserParams::validate() const {
  free_run_noise.validate();
  if (!positive_finite(k_thermal_hz_per_ma)) {
    throw std::invalid_argument("LaserParams: k_thermal must be positive");
  }
  if (!positive_finite(f_thermal_hz)) {
    throw std::invalid_argument("LaserParams: f_thermal must be positive");
  }
  if (!positive_finite(k_carrier_hz_per_ma)) {
    throw std::invalid_argument("LaserParams: k_carrier must be positive");
  }
  if (!(k_thermal_hz_per_ma > k_carrier_hz_per_ma)) {
    throw std::invalid_argument(
        "LaserParams: k_thermal must exceed k_carrier for a finite FM crossover");
  }
  if (!std::isfinite(k_piezo_hz_per_v)) throw std::invalid_argument("LaserParams: k_piezo");
  if (!positive_finite(f_piezo_hz)) throw std::invalid_argument("LaserParams: f_piezo");
  if (!positive_finite(q_piezo)) throw std::invalid_argument("LaserParams: q_piezo");
  if (!std::isfinite(detuning0_hz)) throw std::invalid_argument("LaserParams: detuning0");
  if (!positive_finite(mode_hop_limit_hz)) {
    throw std::invalid_argument("LaserParams: mode_hop_limit must be positive");
  }
  if (!(f_thermal_hz < crossover_hz())) {
    throw std::invalid_argument("LaserParams: f_thermal must lie below the FM crossover");
  }
}

double LaserParams::crossover_hz() const {
  // Re H = 0  <=>  1 + (f/f_th)^2 = k_thermal / k_carrier
  return f_thermal_hz * std::sqrt(k_thermal_hz_per_ma / k_carrier_hz_per_ma - 1.0);
}

std::complex<double> current_fm_response(const LaserParams& params, double f) {
  if (!(f >= 0.0)) throw std::invalid_argument("current_fm_response: f must be >= 0");
  if (std::isinf(f)) return {-params.k_carrier_hz_per_ma, 0.0};
  const std::complex<double> thermal =
      params.k_thermal_hz_per_ma / std::complex<double>(1.0, f / params.f_thermal_hz);
  return thermal - params.k_carrier_hz_per_ma;
}

std::complex<double> piezo_response(const LaserParams& params, double f) {
  if (!(f >= 0.0)) throw std::invalid_argument("piezo_response: f must be >= 0");
  const double w = kTwoPi * params.f_piezo_hz;
  const std::complex<double> s(0.0, kTwoPi * f);
  return params.k_piezo_hz_per_v * w * w / (s * s + s * w / params.q_piezo + w * w);
}

LaserModel::LaserModel(const LaserParams& params, double dt) : params_(params), dt_(dt) {
  params_.validate();
  if (!positive_finite(dt)) throw std::invalid_argument("LaserModel: dt must be positive");
  if (dt > 1.0 / (20.0 * params_.crossover_hz()) * (1.0 + 1e-12)) {
    throw std::invalid_argument("LaserModel: dt must resolve the FM crossover (dt <= 1/(20 f_x))");
  }

  const double k = 2.0 / dt;

  // 1 / (1 + s / w_th)
  const double wt = kTwoPi * params_.f_thermal_hz;
  const double a0 = 1.0 + k / wt;
  th_b_ = 1.0 / a0;
  th_a1_ = (1.0 - k / wt) / a0;

  // w^2 / (s^2 + s w / q + w^2), unit DC gain; k_piezo applied on output
  const double wp = kTwoPi * params_.f_piezo_hz;
  const double q = params_.q_piezo;
  const double d0 = k * k + k * wp / q + wp * wp;
  pz_b0_ = wp * wp / d0;
  pz_b1_ = 2.0 * wp * wp / d0;
  pz_b2_ = wp * wp / d0;
  pz_a1_ = (2.0 * wp * wp - 2.0 * k * k) / d0;
  pz_a2_ = (k * k - k * wp / q + wp * wp) / d0;
}

void LaserModel::step(LaserState& s, double i_mod_ma, double v_piezo, double noise_hz) const {
  if (!std::isfinite(i_mod_ma) || !std::isfinite(v_piezo) || !std::isfinite(noise_hz)) {
    throw std::invalid_argument("step_laser: non-finite input");
  }

  // thermal path
  const double th = th_b_ * (i_mod_ma + s.thermal_in) - th_a1_ * s.thermal_out[0];
  s.thermal_in = i_mod_ma;
  s.thermal_out[2] = s.thermal_out[1];
  s.thermal_out[1] = s.thermal_out[0];
  s.thermal_out[0] = th;
  const double th_corr =
      th + kThermalWarpTap * (th - 2.0 * s.thermal_out[1] + s.thermal_out[2]);

  // piezo path
  const double pz = pz_b0_ * v_piezo + s.piezo_z[0];
  s.piezo_z[0] = pz_b1_ * v_piezo - pz_a1_ * pz + s.piezo_z[1];
  s.piezo_z[1] = pz_b2_ * v_piezo - pz_a2_ * pz;
  s.piezo_out[2] = s.piezo_out[1];
  s.piezo_out[1] = s.piezo_out[0];
  s.piezo_out[0] = pz;
  const double pz_corr = pz + kPiezoWarpTap * (pz - 2.0 * s.piezo_out[1] + s.piezo_out[2]);

  s.current_shift_hz =
      params_.k_thermal_hz_per_ma * th_corr - params_.k_carrier_hz_per_ma * i_mod_ma;
  s.piezo_shift_hz = params_.k_piezo_hz_per_v * pz_corr;

  const double df = params_.detuning0_hz + s.current_shift_hz + s.piezo_shift_hz + noise_hz;
  s.phase += kTwoPi * df * dt_;
}

LaserState step_laser(const LaserState& state, const LaserParams& params, double i_mod_ma,
                      double v_piezo, double noise_hz, double dt) {
  LaserModel model(params, dt);
  LaserState next = state;
  model.step(next, i_mod_ma, v_piezo, noise_hz);
  return next;
}

}  // namespace opll
