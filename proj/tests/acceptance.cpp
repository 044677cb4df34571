// End-to-end acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <span>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "opll/analysis.hpp"
#include "opll/cli/commands.hpp"
#include "opll/cli/config.hpp"
#include "opll/noise.hpp"
#include "opll/pfd.hpp"
#include "opll/simengine.hpp"
#include "support.hpp"

using namespace opll;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double mean_square(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s / static_cast<double>(v.size());
}

PhaseSeries noisy_carrier(double variance, double f0, double fs, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, std::sqrt(variance));
  PhaseSeries s;
  s.sample_rate = fs;
  s.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.samples[i] = test::kTwoPi * f0 * s.time(i) + g(rng);
  return s;
}

PhaseSeries settled(const PhaseSeries& p) {
  PhaseSeries e = p;
  e.samples.erase(e.samples.begin(), e.samples.begin() + static_cast<std::ptrdiff_t>(e.size() / 5));
  return e;
}

// 1
void carrier_round_trip(Outcome& o) {
  for (double v : {0.08, 0.19, 0.33}) {
    double est = 0.0;
    for (int seed = 1; seed <= 10; ++seed)
      est += carrier_phase_variance(noisy_carrier(v, 1e5, 1e6, 1 << 16, 500 + seed), 4096).phase_variance / 10.0;
    o.detail << v << "->" << est << " ";
    o.require(std::abs(est - v) <= 0.2 * v, "variance " + std::to_string(v));
  }
}

// 2
void mvar_slopes(Outcome& o) {
  struct Case {
    const char* name;
    PowerLawNoiseSpec spec;
    double expected;
    int seeds;
  };
  const std::vector<Case> cases = {{"white PM", PowerLawNoiseSpec::single(0, 1.0), -1.5, 2},
                                   {"white FM", PowerLawNoiseSpec::single(-2, 1.0), -0.5, 2},
                                   {"RW FM", PowerLawNoiseSpec::single(-4, 1.0), 0.5, 4}};
  const auto taus = log_spaced_taus(1.0, 8.0, 2000.0, 8);
  for (const auto& c : cases) {
    std::vector<double> var(taus.size(), 0.0), snapped;
    for (int seed = 1; seed <= c.seeds; ++seed) {
      const auto curve = mod_allan(synthesize_power_law(c.spec, 1 << 18, 1.0, 40 + seed), 1.0, taus);
      snapped = curve.taus;
      for (std::size_t i = 0; i < taus.size(); ++i) var[i] += curve.mdev[i] * curve.mdev[i] / c.seeds;
    }
    std::vector<double> dev(var.size());
    std::transform(var.begin(), var.end(), dev.begin(), [](double x) { return std::sqrt(x); });
    const double slope = fit_loglog_slope(snapped, dev, 8.0, 2000.0).slope;
    o.detail << c.name << " " << slope << " ";
    o.require(std::abs(slope - c.expected) <= 0.15, c.name);
  }
}

// 3: both inputs pass through their counters as phase ramps
void pfd_sign(Outcome& o) {
  PfdConfig cfg;
  cfg.n_div = 96;
  cfg.r_div = 3;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> f_ref(1e8, 3e8), rel(0.01, 0.5), phase0(0.0, test::kTwoPi);
  std::bernoulli_distribution faster(0.5);
  int correct = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double fr = f_ref(rng);
    const double fc = fr / static_cast<double>(cfg.r_div);
    const double fd = fc * (1.0 + (faster(rng) ? 1.0 : -1.0) * rel(rng));
    const double f_beat = fd * static_cast<double>(cfg.beat_modulus());
    const double t_end = std::max(100.0 / std::min(fc, fd), 20.0 / std::abs(fc - fd));
    auto ramp = [&](double f, double ph) {
      PhaseSeries s;
      s.samples.resize(2001);
      s.sample_rate = 2000.0 / t_end;
      for (std::size_t i = 0; i < s.size(); ++i) s.samples[i] = ph + test::kTwoPi * f * s.time(i);
      return s;
    };
    const auto ref = edges_from_phase(ramp(fr, phase0(rng)), cfg.r_div);
    const auto div = edges_from_phase(ramp(f_beat, phase0(rng)), cfg.beat_modulus());
    const double m = mean_pump_output(ref, div, cfg, 0.0, t_end);
    if (m != 0.0 && (m > 0.0) == (fc > fd)) ++correct;
  }
  o.detail << correct << "/100 ";
  o.require(correct == 100, "sign");
}

// 4
void lock_acquisition(Outcome& o) {
  auto c = test::quiet_config();
  c.laser.detuning0_hz = 2e6;
  c.duration_s = 10e-3;
  const auto r = run_simulation(c);
  const double f_err = test::fitted_slope(test::tail(r.phase_error.samples, 0.5), 1.0 / c.fs_hz) / test::kTwoPi;
  o.detail << "lock " << r.lock_time_s.value_or(-1.0) * 1e3 << " ms, f_err " << f_err << " Hz; ";
  o.require(r.locked && r.lock_time_s && *r.lock_time_s <= 10e-3, "2 MHz pull-in");
  o.require(std::abs(f_err) < 1.0, "mean frequency error");
  double bound = 0.0;
  for (double x : test::tail(r.phase_error.samples, 0.5)) bound = std::max(bound, std::abs(x));
  o.require(bound < c.lock_threshold_rad * static_cast<double>(c.pfd.beat_modulus()), "bounded phase");

  // piezo only, three times the default slow gain
  auto p = c;
  p.loop.fast_gain = 0.0;
  p.loop.slow_tau = 1e-3;
  const auto slow_only = run_simulation(p);
  const auto& e = slow_only.phase_error.samples;
  const std::size_t w = e.size() / 10;
  int pos = 0, neg = 0;
  double peak = 0.0;
  for (std::size_t j = 0; j < 10; ++j) {
    const double f = (e[(j + 1) * w - 1] - e[j * w]) / (test::kTwoPi * static_cast<double>(w - 1) / p.fs_hz);
    (f > 0.0 ? pos : neg) += 1;
    peak = std::max(peak, std::abs(f));
  }
  o.detail << "piezo only: locked " << slow_only.locked << ", window f_err signs +" << pos << "/-" << neg
           << ", peak " << peak << " Hz; ";
  o.require(!slow_only.locked && !slow_only.aborted(), "piezo-only run keeps going unlocked");
  o.require(pos >= 2 && neg >= 2 && peak > 1e5, "piezo-only oscillation about the target");

  p.loop.fast_gain = 1.0;
  const auto both = run_simulation(p);
  const double f_both =
      test::fitted_slope(test::tail(both.phase_error.samples, 0.5), 1.0 / p.fs_hz) / test::kTwoPi;
  o.detail << "with fast path: locked " << both.locked << ", f_err " << f_both << " Hz";
  o.require(both.locked && std::abs(f_both) < 1.0, "fast path stabilizes");
}

// 5
void table_ordering(Outcome& o) {
  const std::vector<std::pair<const char*, const char*>> rows = {
      {"N=96/R=3", "ref_216mhz_n96_r3.json"},
      {"N=384/R=1", "ref_18mhz_n384_r1.json"},
      {"N=96/R=1", "ref_72mhz_n96_r1.json"}};
  std::vector<double> v;
  for (const auto& [name, file] : rows) {
    const auto rc = cli::parse_config_text(cli::read_text_file(std::string(OPLL_CONFIG_DIR) + "/" + file));
    double acc = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto sim = rc.sim;
      sim.seed = seed;
      const auto r = run_simulation(sim);
      o.require(r.locked, std::string(name) + " locked");
      acc += cli::run_phase_variance(r, rc.analysis) / 3.0;
    }
    v.push_back(acc);
    o.detail << name << " " << acc << " ";
  }
  o.require(v[0] < v[1] && v[1] < v[2], "strict ordering");
}

// 6: N doubled together with the beat it divides, same comparison frequency
void floor_scaling(Outcome& o) {
  auto in_band = [](std::int64_t n_div, double f_beat, double& expected) {
    auto c = test::quiet_config();
    c.pfd_floor_enabled = true;
    c.pfd.n_div = n_div;
    c.f_beat_target_hz = f_beat;
    c.duration_s = 10e-3;
    c.seed = 11;
    const auto r = run_simulation(c);
    expected = 2.0 * std::pow(10.0, pfd_noise_floor_dbc(static_cast<double>(n_div), f_beat) / 10.0);
    const auto s = welch_psd(settled(r.phase_error), 1 << 16, 0.5, Detrend::linear);
    double acc = 0.0;
    int bins = 0;
    for (std::size_t k = 0; k < s.freqs.size(); ++k)
      if (s.freqs[k] >= 3e3 && s.freqs[k] <= 3e4) {
        acc += s.psd[k];
        ++bins;
      }
    return acc / bins;
  };
  double e1 = 0.0, e2 = 0.0;
  const double s1 = in_band(96, 6.912e9, e1);
  const double s2 = in_band(192, 13.824e9, e2);
  const double db = 10.0 * std::log10(s2 / s1);
  o.detail << "rise " << db << " dB (injected " << 10.0 * std::log10(e2 / e1) << " dB), level "
           << s1 / e1 << " of injected";
  o.require(std::abs(db - 6.02) <= 0.1, "6.02 dB");
  o.require(std::abs(s1 / e1 - 1.0) < 0.2, "in-band level matches the injected floor");
}

// 7
void two_slave(Outcome& o) {
  SimConfig b;
  b.duration_s = 0.02;
  b.seed = 2;
  SimConfig a = b;
  a.seed = 1;
  a.f_beat_target_hz += 3.84;
  a.f_ref_hz = a.f_beat_target_hz * static_cast<double>(a.pfd.r_div) / static_cast<double>(a.pfd.beat_modulus());
  const auto r = two_slave_experiment(a, b, {77, std::nullopt});
  o.require(r.ok(), "both loops locked");
  const auto m = settled(r.measured);
  const double f = test::fitted_slope(m.samples, m.dt()) / test::kTwoPi;
  o.detail << "slope " << f << " Hz; ";
  o.require(std::abs(f - 3.84) <= 0.01 * 3.84, "3.84 Hz slope");

  const double v1 = rms_phase_variance(m, 5e6);
  auto a10 = a, b10 = b;
  a10.master_noise = a.master_noise.scaled(10.0);
  b10.master_noise = b.master_noise.scaled(10.0);
  const auto r10 = two_slave_experiment(a10, b10, {77, std::nullopt});
  o.require(r10.ok(), "both loops locked under 10x master noise");
  const double v10 = rms_phase_variance(settled(r10.measured), 5e6);
  o.detail << "differential variance " << v1 << " -> " << v10;
  o.require(std::abs(v10 / v1 - 1.0) < 0.1, "common-mode rejection");
}

// time-domain side of Welch's identity: mean over segments of sum (w x)^2 / sum w^2, periodic Hann
double windowed_mean_square(const PhaseSeries& s, std::size_t seg_len) {
  std::vector<double> w(seg_len);
  double w2 = 0.0;
  for (std::size_t i = 0; i < seg_len; ++i) {
    w[i] = std::pow(std::sin(std::numbers::pi * static_cast<double>(i) / static_cast<double>(seg_len)), 2);
    w2 += w[i] * w[i];
  }
  const std::size_t step = seg_len / 2;
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t off = 0; off + seg_len <= s.size(); off += step, ++count) {
    const auto seg = std::span(s.samples).subspan(off, seg_len);
    const double m = test::mean(seg);
    double e = 0.0;
    for (std::size_t i = 0; i < seg_len; ++i) e += std::pow(w[i] * (seg[i] - m), 2);
    acc += e / w2;
  }
  return acc / static_cast<double>(count);
}

// 8
void invariants(Outcome& o) {
  // noise: mean square of the synthesized series against the requested PSD summed over its bins
  const PowerLawNoiseSpec spec{{{0, 1e-9}, {-1, 1e-5}, {-2, 1e-6}}};
  const double fs = 1e6;
  const std::size_t n = std::size_t{1} << 20;
  double want = 0.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double w = (k == n / 2) ? 0.5 : 1.0;
    want += w * spec.psd(static_cast<double>(k) * fs / static_cast<double>(n)) * fs / static_cast<double>(n);
  }
  double got = 0.0;
  for (int seed = 1; seed <= 10; ++seed) got += mean_square(synthesize_power_law(spec, n, fs, seed).samples) / 10.0;
  o.detail << "synth/PSD " << got / want << "; ";
  o.require(std::abs(got / want - 1.0) < 0.01, "noise Parseval");
  o.require(synthesize_power_law(spec, n, fs, 3).samples == synthesize_power_law(spec, n, fs, 3).samples,
            "noise determinism");

  // analysis: Welch integral against the windowed segment mean square, on every fixture used above
  SimConfig c;
  c.duration_s = 5e-3;
  c.seed = 4;
  const auto r1 = run_simulation(c);
  const auto r2 = run_simulation(c);
  const auto locked = detrend_linear(settled(r1.phase_error));
  const std::vector<PhaseSeries> fixtures = {
      detrend_linear(noisy_carrier(0.19, 1e5, 1e6, 1 << 16, 501)),
      synthesize_power_law(PowerLawNoiseSpec::single(0, 1.0), 1 << 18, 1.0, 41),
      synthesize_power_law(PowerLawNoiseSpec::single(-2, 1.0), 1 << 18, 1.0, 41),
      synthesize_power_law(PowerLawNoiseSpec::single(-4, 1.0), 1 << 18, 1.0, 41),
      synthesize_power_law(spec, n, fs, 1),
      locked};
  double worst = 0.0;
  for (const auto& f : fixtures) {
    const double ratio = welch_psd(f, 4096, 0.5, Detrend::mean).integral() / windowed_mean_square(f, 4096);
    worst = std::max(worst, std::abs(ratio - 1.0));
  }
  o.detail << "worst Welch deviation " << worst << "; ";
  o.require(worst < 0.02, "Welch Parseval");

  // simengine: locked phase variance in the time domain against the Welch integral
  const double ratio = welch_psd(locked, 4096, 0.5, Detrend::mean).integral() / mean_square(locked.samples);
  o.detail << "locked Welch/time " << ratio << "; ";
  o.require(std::abs(ratio - 1.0) < 0.02, "simulation Parseval");

  o.require(r1.beat_phase.samples == r2.beat_phase.samples && r1.fast_drive == r2.fast_drive &&
                r1.slow_drive == r2.slow_drive && r1.lock_time_s == r2.lock_time_s,
            "simulation determinism");
  o.require(welch_psd(fixtures[0], 4096, 0.5).psd == welch_psd(fixtures[0], 4096, 0.5).psd,
            "analysis determinism");
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<void(Outcome&)> run;
    double budget_s;
  };
  const std::vector<Criterion> criteria = {
      {"carrier-fraction round trip", carrier_round_trip, 30.0},
      {"MVAR slopes", mvar_slopes, 60.0},
      {"PFD frequency discrimination", pfd_sign, 10.0},
      {"lock acquisition", lock_acquisition, 60.0},
      {"reference/divider ordering", table_ordering, 300.0},
      {"discriminator floor scaling", floor_scaling, 10.0},
      {"two-slave beat", two_slave, 120.0},
      {"Parseval and determinism", invariants, 600.0},
  };
  const auto start = Clock::now();
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      criteria[i].run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double t = seconds_since(t0);
    o.require(t < criteria[i].budget_s, "runtime");
    if (i + 1 == criteria.size()) {
      const double total = seconds_since(start);
      o.detail << "total " << total << " s";
      o.require(total < 600.0, "total runtime");
    }
    if (!o.pass) ++failures;
    std::printf("%s %d %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", static_cast<int>(i + 1), criteria[i].name, t,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
