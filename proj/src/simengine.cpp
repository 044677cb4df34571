#include "opll/simengine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace opll {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }

// Noise is synthesized on a power-of-two grid and truncated: FFT sizes with
// large prime factors are several times slower.
std::vector<double> truncated(std::vector<double> v, std::size_t n) {
  v.resize(n);
  v.shrink_to_fit();
  return v;
}

std::vector<double> power_law_or_zero(const PowerLawNoiseSpec& spec, std::size_t n, double fs,
                                      std::uint64_t seed) {
  if (spec.empty()) return zeros(n);
  return truncated(synthesize_power_law(spec, std::bit_ceil(n), fs, seed).samples, n);
}

std::uint64_t stream(std::uint64_t seed, std::uint64_t id) { return seed * 8 + id; }
}  // namespace

NoiseSeeds NoiseSeeds::from(std::uint64_t seed) {
  return {stream(seed, 1), stream(seed, 2), stream(seed, 3), stream(seed, 4), stream(seed, 5)};
}

std::size_t SimConfig::sample_count() const {
  return static_cast<std::size_t>(std::llround(duration_s * fs_hz));
}

double SimConfig::lock_frequency_hz() const {
  return f_ref_hz * static_cast<double>(pfd.beat_modulus()) / static_cast<double>(pfd.r_div);
}

void SimConfig::validate() const {
  laser.validate();
  pfd.validate();
  loop.validate();
  if (ref_noise) ref_noise->validate();
  master_noise.validate();
  detector_floor.validate();

  if (!(f_beat_target_hz > 0.0) || !std::isfinite(f_beat_target_hz)) {
    throw std::invalid_argument("SimConfig: f_beat must be positive");
  }
  if (!(f_ref_hz > 0.0) || !std::isfinite(f_ref_hz)) {
    throw std::invalid_argument("SimConfig: f_ref must be positive");
  }
  if (!(fs_hz > 0.0) || !std::isfinite(fs_hz)) {
    throw std::invalid_argument("SimConfig: fs must be positive");
  }
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
    throw std::invalid_argument("SimConfig: duration must be positive");
  }
  if (!(lock_threshold_rad > 0.0) || !(lock_periods > 0.0) || !(divergence_cycles > 0.0)) {
    throw std::invalid_argument("SimConfig: lock bookkeeping thresholds must be positive");
  }

  const double f_div = f_beat_target_hz / static_cast<double>(pfd.beat_modulus());
  const double f_cmp = comparison_frequency_hz();
  const double mismatch = std::abs(f_cmp - f_div) / f_div;
  if (mismatch > 1e-6) {
    throw std::invalid_argument(
        "SimConfig: lock condition violated: f_ref/R = " + std::to_string(f_cmp) +
        " Hz but f_beat/(P*N) = " + std::to_string(f_div) + " Hz (" +
        std::to_string(mismatch * 1e6) + " ppm)");
  }

  const std::size_t n = sample_count();
  if (n < 2) throw std::invalid_argument("SimConfig: duration*fs must give at least 2 samples");
  if (n > max_samples) {
    throw std::invalid_argument("SimConfig: duration*fs = " + std::to_string(n) +
                                " samples exceeds max_samples = " + std::to_string(max_samples));
  }

  const double bw = estimate_loop_bandwidth(*this);
  if (fs_hz < 20.0 * bw) {
    throw std::invalid_argument("SimConfig: fs = " + std::to_string(fs_hz) +
                                " Hz is below 20x the loop bandwidth (" + std::to_string(bw) +
                                " Hz)");
  }
}

std::complex<double> open_loop_gain(const SimConfig& cfg, double f) {
  const LoopConfig& lc = cfg.loop;
  const std::complex<double> s(0.0, kTwoPi * f);

  std::complex<double> actuator = 0.0;
  if (lc.fast_gain > 0.0) {
    actuator += lc.fast_gain * lc.modulator_ma_per_v * lead_response(lc, f) *
                current_fm_response(cfg.laser, f);
  }
  if (lc.slow_enabled) actuator += piezo_response(cfg.laser, f) / (s * lc.slow_tau);

  // pump: i_cp / (2 pi) per divided rad, 1 / (P N) divided rad per beat rad;
  // frequency to phase: 2 pi / s
  const double divider = static_cast<double>(cfg.pfd.beat_modulus());
  return cfg.pfd.i_cp / divider * pi_response(lc, f) * lc.pre_gain * lc.main_gain * actuator /
         s;
}

double estimate_loop_bandwidth(const SimConfig& cfg) {
  // scan downwards from a decade above any sensible loop bandwidth
  const double f_hi = std::max(cfg.fs_hz, 1e3);
  const int steps = 2000;
  const double decades = std::log10(f_hi) - (-1.0);
  double prev = std::abs(open_loop_gain(cfg, f_hi));
  for (int i = 1; i <= steps; ++i) {
    const double f = f_hi * std::pow(10.0, -decades * i / steps);
    const double g = std::abs(open_loop_gain(cfg, f));
    if (prev < 1.0 && g >= 1.0) {
      const double f_prev = f_hi * std::pow(10.0, -decades * (i - 1) / steps);
      const double u = std::log(g) / (std::log(g) - std::log(prev));
      return std::exp(std::log(f) + u * (std::log(f_prev) - std::log(f)));
    }
    prev = g;
  }
  return 0.0;
}

SimRecord run_simulation(const SimConfig& cfg) { return run_simulation(cfg, NoiseSeeds::from(cfg.seed)); }

SimRecord run_simulation(const SimConfig& cfg, const NoiseSeeds& seeds) {
  cfg.validate();

  const std::size_t n = cfg.sample_count();
  const double fs = cfg.fs_hz;
  const double dt = 1.0 / fs;
  const double modulus = static_cast<double>(cfg.pfd.beat_modulus());
  const double r_div = static_cast<double>(cfg.pfd.r_div);
  const double f_lock = cfg.lock_frequency_hz();
  const double f_div_nominal = cfg.f_beat_target_hz / modulus;  // cycles per second
  const double f_ref_div = cfg.f_ref_hz / r_div;

  // Noise processes, one sample per step boundary.
  const std::vector<double> master = power_law_or_zero(cfg.master_noise, n + 1, fs, seeds.master);
  const std::vector<double> free_run =
      power_law_or_zero(cfg.laser.free_run_noise, n + 1, fs, seeds.laser);
  std::vector<double> reference = zeros(n + 1);
  if (cfg.ref_noise) {
    const DbcSpec spec = *cfg.ref_noise;
    reference = truncated(
        synthesize_phase_noise([&spec](double f) { return dbc_to_phase_psd(spec, f); },
                               std::bit_ceil(n + 1), fs, seeds.reference)
            .samples,
        n + 1);
  }
  std::vector<double> floor = zeros(n + 1);
  if (cfg.pfd_floor_enabled) {
    const double level = pfd_noise_floor_dbc(modulus, cfg.f_beat_target_hz);
    floor = power_law_or_zero(PowerLawNoiseSpec::single(0, 2.0 * std::pow(10.0, level / 10.0)),
                              n + 1, fs, seeds.pfd_floor);
  }
  const std::vector<double> detector = power_law_or_zero(cfg.detector_floor, n, fs, seeds.detector);

  const LaserModel laser(cfg.laser, dt);
  const LoopFilterChain chain(cfg.loop, dt);

  // Divided phases in cycles at step boundary k.
  auto ref_cycles = [&](std::size_t k) {
    return f_ref_div * static_cast<double>(k) * dt + reference[k] / (kTwoPi * r_div) +
           floor[k] / (kTwoPi * modulus);
  };
  auto div_cycles = [&](std::size_t k, double laser_phase) {
    return f_div_nominal * static_cast<double>(k) * dt + (laser_phase - master[k]) / (kTwoPi * modulus);
  };

  SimRecord rec;
  rec.lock_frequency_hz = f_lock;
  rec.beat_phase.sample_rate = fs;
  rec.phase_error.sample_rate = fs;
  rec.beat_phase.samples.reserve(n);
  rec.phase_error.samples.reserve(n);
  rec.fast_drive.reserve(n);
  rec.slow_drive.reserve(n);
  rec.main_stage.reserve(n);

  LaserState ls;
  FilterChainState fstate;
  if (cfg.start_at_equilibrium) fstate.pi_integral = cfg.loop.locked_pi_voltage();
  // both counters start at the beginning of a divided period
  const double ref_origin = ref_cycles(0);
  const double div_origin = div_cycles(0, ls.phase);
  PfdState pfd;

  const double lock_window_s = cfg.lock_periods / cfg.comparison_frequency_hz();
  double window_start = 0.0;
  double window_center = 0.0;
  bool window_open = false;
  bool at_limit = false;

  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double rel = ls.phase - master[k];
    rec.phase_error.samples.push_back(rel + kTwoPi * (cfg.f_beat_target_hz - f_lock) * t);
    rec.beat_phase.samples.push_back(kTwoPi * cfg.f_beat_target_hz * t + rel + detector[k]);

    const double c_ref = ref_cycles(k) - ref_origin;
    const double c_div = div_cycles(k, ls.phase) - div_origin;
    double i_pump = 0.0;
    if (k > 0) {
      const PfdAdvance adv = pfd_advance(pfd, cfg.pfd, kTwoPi * c_ref, kTwoPi * c_div);
      pfd = adv.state;
      i_pump = adv.mean_current;
    }

    const FilterStepOutput fo = chain.step(fstate, i_pump);
    fstate = fo.state;
    rec.fast_drive.push_back(fo.fast_out);
    rec.slow_drive.push_back(fo.slow_out);
    rec.main_stage.push_back(fo.v3);

    const bool limit_now =
        cfg.loop.slow_enabled && std::abs(fstate.slow_integral) >= cfg.loop.slow_limit;
    if (limit_now && !at_limit) rec.overrun_events.push_back(t);
    at_limit = limit_now;

    // lock bookkeeping on the divided phase error
    const double err = kTwoPi * (c_ref - c_div);
    if (!window_open) {
      window_open = true;
      window_start = t;
      window_center = kTwoPi * std::round(err / kTwoPi);
    }
    if (std::abs(err - window_center) > cfg.lock_threshold_rad) {
      window_open = false;
      rec.locked = false;
    } else if (t - window_start >= lock_window_s) {
      if (!rec.lock_time_s) rec.lock_time_s = window_start;
      rec.locked = true;
    }

    if (at_limit && std::abs(err) > kTwoPi * cfg.divergence_cycles) {
      rec.failure = "diverged: divided phase error " + std::to_string(err / kTwoPi) +
                    " cycles with the slow integrator at its limit at t = " + std::to_string(t) +
                    " s";
      break;
    }

    laser.step(ls, fo.fast_out * cfg.loop.modulator_ma_per_v, fo.slow_out,
               (free_run[k + 1] - free_run[k]) / (kTwoPi * dt));
    if (std::abs(ls.current_shift_hz) > cfg.laser.mode_hop_limit_hz) {
      rec.failure = "mode hop: current-induced detuning " + std::to_string(ls.current_shift_hz) +
                    " Hz exceeds the limit at t = " + std::to_string(t) + " s";
      break;
    }
  }
  if (rec.aborted()) rec.locked = false;
  return rec;
}

TwoSlaveResult two_slave_experiment(const SimConfig& cfg_a, const SimConfig& cfg_b,
                                    const TwoSlaveSeeds& seeds) {
  if (cfg_a.fs_hz != cfg_b.fs_hz || cfg_a.duration_s != cfg_b.duration_s) {
    throw std::invalid_argument("two_slave_experiment: both loops must share fs and duration");
  }

  // one master for both loops
  SimConfig b = cfg_b;
  b.master_noise = cfg_a.master_noise;

  NoiseSeeds sa = NoiseSeeds::from(cfg_a.seed);
  NoiseSeeds sb = NoiseSeeds::from(cfg_b.seed);
  sa.master = sb.master = seeds.master;
  if (seeds.reference) sa.reference = sb.reference = *seeds.reference;

  TwoSlaveResult out;
  out.a = run_simulation(cfg_a, sa);
  out.b = run_simulation(b, sb);

  if (!out.a.locked) out.failed_loop = "a";
  if (!out.b.locked) out.failed_loop += out.failed_loop.empty() ? "b" : ",b";

  const std::size_t n = std::min(out.a.phase_error.size(), out.b.phase_error.size());
  const double fs = cfg_a.fs_hz;
  const double df = out.a.lock_frequency_hz - out.b.lock_frequency_hz;
  out.differential.sample_rate = fs;
  out.differential.samples.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / fs;
    out.differential.samples[k] =
        out.a.phase_error.samples[k] - out.b.phase_error.samples[k] + kTwoPi * df * t;
  }

  out.measured = out.differential;
  if (n >= 2 && !cfg_a.detector_floor.empty()) {
    const auto det = power_law_or_zero(cfg_a.detector_floor, n, fs, stream(seeds.master, 6));
    for (std::size_t k = 0; k < n; ++k) out.measured.samples[k] += det[k];
  }
  return out;
}

}  // namespace opll
