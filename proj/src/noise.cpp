#include "opll/noise.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

#include "fft.hpp"

namespace opll {

void PhaseSeries::validate() const {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw std::invalid_argument("PhaseSeries: sample_rate must be positive and finite");
  }
  if (samples.empty()) throw std::invalid_argument("PhaseSeries: empty series");
}

void PowerLawNoiseSpec::validate() const {
  std::set<int> seen;
  for (const auto& t : terms) {
    if (t.exponent > 0 || t.exponent < -4) {
      throw std::invalid_argument("PowerLawNoiseSpec: exponent " + std::to_string(t.exponent) +
                                  " outside {0,-1,-2,-3,-4}");
    }
    if (!std::isfinite(t.coefficient)) {
      throw std::invalid_argument("PowerLawNoiseSpec: non-finite coefficient");
    }
    if (t.coefficient < 0.0) {
      throw std::invalid_argument("PowerLawNoiseSpec: negative coefficient");
    }
    if (!seen.insert(t.exponent).second) {
      throw std::invalid_argument("PowerLawNoiseSpec: duplicate exponent " +
                                  std::to_string(t.exponent));
    }
  }
}

bool PowerLawNoiseSpec::empty() const {
  return std::all_of(terms.begin(), terms.end(),
                     [](const PowerLawTerm& t) { return t.coefficient == 0.0; });
}

double PowerLawNoiseSpec::psd(double f) const {
  double s = 0.0;
  for (const auto& t : terms) {
    if (t.coefficient == 0.0) continue;
    s += t.coefficient * std::pow(f, t.exponent);
  }
  return s;
}

PowerLawNoiseSpec PowerLawNoiseSpec::scaled(double factor) const {
  PowerLawNoiseSpec out = *this;
  for (auto& t : out.terms) t.coefficient *= factor;
  return out;
}

PowerLawNoiseSpec PowerLawNoiseSpec::single(int exponent, double coefficient) {
  PowerLawNoiseSpec spec{{{exponent, coefficient}}};
  spec.validate();
  return spec;
}

void DbcSpec::validate() const {
  if (points.empty()) throw std::invalid_argument("DbcSpec: at least one point required");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!(p.offset_hz > 0.0) || !std::isfinite(p.offset_hz)) {
      throw std::invalid_argument("DbcSpec: offsets must be positive and finite");
    }
    if (i > 0 && !(p.offset_hz > points[i - 1].offset_hz)) {
      throw std::invalid_argument("DbcSpec: offsets must be strictly increasing");
    }
    const double s = 2.0 * std::pow(10.0, p.dbc_per_hz / 10.0);
    if (!std::isfinite(p.dbc_per_hz) || !(s > 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument("DbcSpec: level does not map to a positive finite PSD");
    }
  }
}

DbcSpec DbcSpec::flat(double dbc_per_hz) { return DbcSpec{{{1.0, dbc_per_hz}}}; }

namespace {

// splitmix64 finalizer; decorrelates nearby integer seeds before they reach mt19937_64.
std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

PhaseSeries synthesize_phase_noise(const std::function<double(double)>& psd, std::size_t n,
                                   double fs, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("synthesize_phase_noise: n must be >= 2");
  if (!(fs > 0.0) || !std::isfinite(fs)) {
    throw std::invalid_argument("synthesize_phase_noise: fs must be positive");
  }

  PhaseSeries out;
  out.sample_rate = fs;
  out.samples.assign(n, 0.0);

  detail::RealInverseFft fft(n);
  auto bins = fft.input();
  std::fill(bins.begin(), bins.end(), std::complex<double>{});

  std::mt19937_64 rng(mix_seed(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double df = fs / static_cast<double>(n);
  const std::size_t half = n / 2;
  bool any = false;
  for (std::size_t k = 1; k <= half; ++k) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    const double s = psd(static_cast<double>(k) * df);
    if (!std::isfinite(s) || s < 0.0) {
      throw std::invalid_argument("synthesize_phase_noise: PSD must be finite and non-negative");
    }
    if (s == 0.0) continue;
    any = true;
    // E|X_k|^2 = S(f_k) fs n / 2 gives sum_k S(f_k) df for the time-domain variance.
    const double amp = std::sqrt(s * fs * static_cast<double>(n) / 2.0);
    if (n % 2 == 0 && k == half) {
      bins[k] = {amp * re, 0.0};  // Nyquist bin must be real
    } else {
      bins[k] = {amp * re / std::sqrt(2.0), amp * im / std::sqrt(2.0)};
    }
  }
  if (!any) return out;

  fft.execute();
  const auto x = fft.output();
  const double norm = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = x[i] * norm;
  return out;
}

PhaseSeries synthesize_power_law(const PowerLawNoiseSpec& spec, std::size_t n, double fs,
                                 std::uint64_t seed) {
  spec.validate();
  return synthesize_phase_noise([&spec](double f) { return spec.psd(f); }, n, fs, seed);
}

double dbc_to_phase_psd(const DbcSpec& spec, double f) {
  if (!(f > 0.0)) throw std::invalid_argument("dbc_to_phase_psd: f must be positive");
  spec.validate();
  const auto& p = spec.points;
  double level;
  if (f <= p.front().offset_hz) {
    level = p.front().dbc_per_hz;
  } else if (f >= p.back().offset_hz) {
    level = p.back().dbc_per_hz;
  } else {
    auto hi = std::upper_bound(p.begin(), p.end(), f,
                               [](double v, const DbcPoint& pt) { return v < pt.offset_hz; });
    auto lo = hi - 1;
    const double u = (std::log10(f) - std::log10(lo->offset_hz)) /
                     (std::log10(hi->offset_hz) - std::log10(lo->offset_hz));
    level = lo->dbc_per_hz + u * (hi->dbc_per_hz - lo->dbc_per_hz);
  }
  return 2.0 * std::pow(10.0, level / 10.0);
}

double pfd_noise_floor_dbc(double n_div, double f_beat_hz) {
  if (!(n_div >= 1.0) || !std::isfinite(n_div)) {
    throw std::invalid_argument("pfd_noise_floor_dbc: n_div must be >= 1");
  }
  if (!(f_beat_hz > 0.0) || !std::isfinite(f_beat_hz)) {
    throw std::invalid_argument("pfd_noise_floor_dbc: f_beat must be positive");
  }
  return kPfdFigureOfMerit + 10.0 * std::log10(n_div * f_beat_hz);
}

}  // namespace opll
