#include "opll/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "fft.hpp"

namespace opll {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n)));
  }
  return w;
}

struct Segmentation {
  std::size_t step;
  std::size_t count;
};

Segmentation segment(std::size_t n, std::size_t seg_len, double overlap) {
  if (seg_len < 2 || seg_len > n) {
    throw std::invalid_argument("welch: segment length must lie in [2, series length]");
  }
  if (!(overlap >= 0.0 && overlap < 1.0)) {
    throw std::invalid_argument("welch: overlap must lie in [0, 1)");
  }
  const auto step = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(static_cast<double>(seg_len) * (1.0 - overlap))));
  return {step, 1 + (n - seg_len) / step};
}

// Least-squares line through y over index 0..n-1, returned as (value at center, slope).
std::pair<double, double> fit_line(std::span<const double> y) {
  const std::size_t n = y.size();
  const double c = 0.5 * static_cast<double>(n - 1);
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - c;
    sxy += dx * (y[i] - mean);
    sxx += dx * dx;
  }
  return {mean, sxx > 0.0 ? sxy / sxx : 0.0};
}

void remove_line(std::span<double> y) {
  const auto [mean, slope] = fit_line(y);
  const double c = 0.5 * static_cast<double>(y.size() - 1);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= mean + slope * (static_cast<double>(i) - c);
}

CarrierEstimate from_fraction(double fraction) {
  CarrierEstimate est;
  est.carrier_fraction = std::min(fraction, 1.0);
  est.phase_variance = est.carrier_fraction > 0.0 ? std::max(0.0, -std::log(est.carrier_fraction))
                                                  : std::numeric_limits<double>::infinity();
  est.carrier_dominant = est.carrier_fraction >= 0.01;
  return est;
}
}  // namespace

void Spectrum::validate() const {
  if (freqs.size() != psd.size() || freqs.size() < 2) {
    throw std::invalid_argument("Spectrum: needs at least two bins and matching lengths");
  }
  const double df = bin_width();
  if (!(df > 0.0)) throw std::invalid_argument("Spectrum: frequencies must be ascending");
  for (std::size_t i = 1; i < freqs.size(); ++i) {
    if (std::abs((freqs[i] - freqs[i - 1]) - df) > 1e-6 * df) {
      throw std::invalid_argument("Spectrum: frequency grid is not uniform");
    }
  }
  for (double p : psd) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("Spectrum: psd must be finite and non-negative");
    }
  }
}

double Spectrum::bin_width() const {
  return (freqs.back() - freqs.front()) / static_cast<double>(freqs.size() - 1);
}

double Spectrum::integral() const {
  double s = 0.0;
  for (double p : psd) s += p;
  return s * bin_width();
}

Spectrum welch_psd(const PhaseSeries& series, std::size_t seg_len, double overlap,
                   Detrend detrend) {
  series.validate();
  const auto seg = segment(series.size(), seg_len, overlap);
  const auto w = hann(seg_len);
  double w2 = 0.0;
  double w1 = 0.0;
  for (double v : w) {
    w2 += v * v;
    w1 += v;
  }
  const double fs = series.sample_rate;

  detail::RealForwardFft fft(seg_len);
  const std::size_t bins = seg_len / 2 + 1;
  std::vector<double> acc(bins, 0.0);
  std::vector<double> buf(seg_len);
  for (std::size_t s = 0; s < seg.count; ++s) {
    const std::size_t off = s * seg.step;
    std::copy_n(series.samples.begin() + static_cast<std::ptrdiff_t>(off), seg_len, buf.begin());
    if (detrend == Detrend::mean) {
      double m = 0.0;
      for (double v : buf) m += v;
      m /= static_cast<double>(seg_len);
      for (double& v : buf) v -= m;
    } else if (detrend == Detrend::linear) {
      remove_line(buf);
    }
    auto in = fft.input();
    for (std::size_t i = 0; i < seg_len; ++i) in[i] = buf[i] * w[i];
    fft.execute();
    const auto out = fft.output();
    for (std::size_t k = 0; k < bins; ++k) acc[k] += std::norm(out[k]);
  }

  Spectrum sp;
  sp.units = PsdUnits::rad2_per_hz;
  sp.rbw_equivalent = fs * w2 / (w1 * w1);
  sp.freqs.resize(bins);
  sp.psd.resize(bins);
  const double scale = 1.0 / (fs * w2 * static_cast<double>(seg.count));
  for (std::size_t k = 0; k < bins; ++k) {
    sp.freqs[k] = static_cast<double>(k) * fs / static_cast<double>(seg_len);
    const bool edge = k == 0 || (seg_len % 2 == 0 && k == seg_len / 2);
    sp.psd[k] = acc[k] * scale * (edge ? 1.0 : 2.0);
  }
  return sp;
}

Spectrum welch_psd_complex(std::span<const std::complex<double>> x, double fs,
                           std::size_t seg_len, double overlap) {
  if (!(fs > 0.0)) throw std::invalid_argument("welch_psd_complex: fs must be positive");
  const auto seg = segment(x.size(), seg_len, overlap);
  const auto w = hann(seg_len);
  double w2 = 0.0;
  double w1 = 0.0;
  for (double v : w) {
    w2 += v * v;
    w1 += v;
  }

  detail::ComplexForwardFft fft(seg_len);
  std::vector<double> acc(seg_len, 0.0);
  for (std::size_t s = 0; s < seg.count; ++s) {
    const std::size_t off = s * seg.step;
    auto in = fft.input();
    for (std::size_t i = 0; i < seg_len; ++i) in[i] = x[off + i] * w[i];
    fft.execute();
    const auto out = fft.output();
    for (std::size_t k = 0; k < seg_len; ++k) acc[k] += std::norm(out[k]);
  }

  Spectrum sp;
  sp.units = PsdUnits::power_per_hz;
  sp.two_sided = true;
  sp.rbw_equivalent = fs * w2 / (w1 * w1);
  sp.freqs.resize(seg_len);
  sp.psd.resize(seg_len);
  const double scale = 1.0 / (fs * w2 * static_cast<double>(seg.count));
  const std::size_t shift = seg_len / 2;  // bin 0 of the output holds -shift * df
  for (std::size_t i = 0; i < seg_len; ++i) {
    const std::size_t k = (i + seg_len - shift) % seg_len;
    sp.freqs[i] = (static_cast<double>(i) - static_cast<double>(shift)) * fs /
                  static_cast<double>(seg_len);
    sp.psd[i] = acc[k] * scale;
  }
  return sp;
}

CarrierEstimate carrier_phase_variance(const Spectrum& spectrum, double carrier_bin_width_hz,
                                       std::optional<double> span_hz) {
  spectrum.validate();
  const auto& p = spectrum.psd;
  const double df = spectrum.bin_width();
  const auto m = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());

  std::size_t half = 1;
  if (carrier_bin_width_hz > 0.0) {
    half = static_cast<std::size_t>(std::llround(carrier_bin_width_hz / (2.0 * df)));
  }
  const std::size_t lo = m >= half ? m - half : 0;
  const std::size_t hi = std::min(p.size() - 1, m + half);

  double carrier = 0.0;
  for (std::size_t i = lo; i <= hi; ++i) carrier += p[i];
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (span_hz && std::abs(spectrum.freqs[i] - spectrum.freqs[m]) > *span_hz / 2.0) continue;
    total += p[i];
  }
  if (!(total > 0.0)) throw std::invalid_argument("carrier_phase_variance: spectrum has no power");
  return from_fraction(carrier / total);
}

CarrierEstimate carrier_phase_variance(const PhaseSeries& series, std::size_t seg_len,
                                       double carrier_bin_width_hz) {
  series.validate();
  PhaseSeries centered = detrend_linear(series);
  std::vector<std::complex<double>> field(centered.size());
  for (std::size_t i = 0; i < field.size(); ++i) field[i] = std::polar(1.0, centered.samples[i]);
  const std::size_t len = std::min(seg_len, field.size());
  const Spectrum sp = welch_psd_complex(field, series.sample_rate, len, 0.5);
  return carrier_phase_variance(sp, carrier_bin_width_hz);
}

double sa_noise_corrections(double reading_db, double rbw_hz) {
  if (!(rbw_hz > 0.0)) throw std::invalid_argument("sa_noise_corrections: rbw must be positive");
  return reading_db + kLogDetectorCorrectionDb - kRbwShapeCorrectionDb - 10.0 * std::log10(rbw_hz);
}

CarrierEstimate carrier_phase_variance_sa_trace(std::span<const double> freqs_hz,
                                                std::span<const double> readings_dbm,
                                                double rbw_hz) {
  if (freqs_hz.size() != readings_dbm.size() || freqs_hz.size() < 2) {
    throw std::invalid_argument("carrier_phase_variance_sa_trace: mismatched or short trace");
  }
  if (!(rbw_hz > 0.0)) throw std::invalid_argument("carrier_phase_variance_sa_trace: rbw");
  const double df = (freqs_hz.back() - freqs_hz.front()) / static_cast<double>(freqs_hz.size() - 1);
  if (!(df > 0.0)) throw std::invalid_argument("carrier_phase_variance_sa_trace: frequencies");
  const auto m = static_cast<std::size_t>(
      std::max_element(readings_dbm.begin(), readings_dbm.end()) - readings_dbm.begin());

  const double carrier_mw = std::pow(10.0, readings_dbm[m] / 10.0);
  double noise_mw = 0.0;
  for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
    if (std::abs(freqs_hz[i] - freqs_hz[m]) <= rbw_hz) continue;
    noise_mw += std::pow(10.0, sa_noise_corrections(readings_dbm[i], rbw_hz) / 10.0) * df;
  }
  return from_fraction(carrier_mw / (carrier_mw + noise_mw));
}

AllanCurve mod_allan(const PhaseSeries& series, double nu0_hz, std::span<const double> taus) {
  series.validate();
  if (!(nu0_hz > 0.0)) throw std::invalid_argument("mod_allan: nu0 must be positive");
  const double tau0 = series.dt();
  const std::size_t m = series.size();

  // time error in seconds; a linear trend does not change the statistic
  PhaseSeries x = detrend_linear(series);
  for (double& v : x.samples) v /= kTwoPi * nu0_hz;
  double x_max = 0.0;
  for (double v : series.samples) x_max = std::max(x_max, std::abs(v));
  x_max /= kTwoPi * nu0_hz;
  // worst-case rounding of one second difference, carried through the statistic
  const double roundoff = 8.0 * std::numeric_limits<double>::epsilon() * x_max;

  AllanCurve curve;
  std::vector<double> d;
  for (double tau : taus) {
    if (!(tau > 0.0)) throw std::invalid_argument("mod_allan: tau must be positive");
    std::size_t n = static_cast<std::size_t>(std::llround(tau / tau0));
    if (n < 1) n = 1;
    const double snapped = static_cast<double>(n) * tau0;
    if (std::abs(snapped - tau) > 1e-9 * tau) {
      curve.annotations.push_back("tau " + std::to_string(tau) + " s snapped to " +
                                  std::to_string(snapped) + " s");
    }
    if (m < 3 * n + 1) {
      throw std::invalid_argument("mod_allan: series too short for tau = " +
                                  std::to_string(snapped) + " s (needs 3n+1 samples)");
    }

    const std::size_t nd = m - 2 * n;
    d.resize(nd);
    for (std::size_t i = 0; i < nd; ++i) {
      d[i] = x.samples[i + 2 * n] - 2.0 * x.samples[i + n] + x.samples[i];
    }
    const std::size_t terms = m - 3 * n + 1;
    double window = 0.0;
    for (std::size_t i = 0; i < n; ++i) window += d[i];
    double acc = window * window;
    for (std::size_t j = 1; j < terms; ++j) {
      window += d[j + n - 1] - d[j - 1];
      acc += window * window;
    }
    const double nn = static_cast<double>(n);
    const double var = acc / (2.0 * nn * nn * snapped * snapped * static_cast<double>(terms));
    double mdev = std::sqrt(var);
    if (mdev <= roundoff / (std::numbers::sqrt2 * snapped)) mdev = 0.0;
    curve.taus.push_back(snapped);
    curve.mdev.push_back(mdev);
    curve.n_samples_per_tau.push_back(terms);
  }
  return curve;
}

std::vector<double> log_spaced_taus(double tau0, double lo, double hi, int per_decade) {
  if (!(tau0 > 0.0) || !(lo > 0.0) || !(hi >= lo) || per_decade < 1) {
    throw std::invalid_argument("log_spaced_taus: invalid range");
  }
  std::vector<double> out;
  const double decades = std::log10(hi / lo);
  const int count = static_cast<int>(std::floor(decades * per_decade + 1e-9)) + 1;
  long long last = 0;
  for (int i = 0; i < count; ++i) {
    const double tau = lo * std::pow(10.0, static_cast<double>(i) / per_decade);
    const long long n = std::max(1LL, std::llround(tau / tau0));
    if (n == last) continue;
    last = n;
    out.push_back(static_cast<double>(n) * tau0);
  }
  return out;
}

SlopeFit fit_loglog_slope(std::span<const double> x, std::span<const double> y, double lo,
                          double hi) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_loglog_slope: size mismatch");
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < lo || x[i] > hi) continue;
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw std::invalid_argument("fit_loglog_slope: non-positive value in fit range");
    }
    lx.push_back(std::log10(x[i]));
    ly.push_back(std::log10(y[i]));
  }
  const std::size_t k = lx.size();
  if (k < 5) throw std::invalid_argument("fit_loglog_slope: fewer than 5 points in range");

  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(k);
  my /= static_cast<double>(k);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  SlopeFit fit;
  fit.points = k;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
    rss += r * r;
  }
  // normal approximation to the t quantile
  fit.half_width = 1.96 * std::sqrt(rss / static_cast<double>(k - 2) / sxx);
  return fit;
}

SlopeFit fit_loglog_slope(const AllanCurve& curve, double lo, double hi) {
  return fit_loglog_slope(curve.taus, curve.mdev, lo, hi);
}

SlopeFit fit_loglog_slope(const Spectrum& spectrum, double lo, double hi) {
  return fit_loglog_slope(spectrum.freqs, spectrum.psd, lo, hi);
}

PhaseSeries detrend_linear(const PhaseSeries& series) {
  series.validate();
  PhaseSeries out = series;
  remove_line(out.samples);
  return out;
}

double rms_phase_variance(const PhaseSeries& series, double sample_rate_out) {
  series.validate();
  if (!(sample_rate_out > 0.0) || sample_rate_out > series.sample_rate * (1.0 + 1e-12)) {
    throw std::invalid_argument("rms_phase_variance: output rate must lie in (0, fs]");
  }
  const auto bin = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(series.sample_rate / sample_rate_out)));
  std::vector<double> dec;
  dec.reserve(series.size() / bin);
  for (std::size_t off = 0; off + bin <= series.size(); off += bin) {
    double s = 0.0;
    for (std::size_t i = 0; i < bin; ++i) s += series.samples[off + i];
    dec.push_back(s / static_cast<double>(bin));
  }
  if (dec.size() < 2) return 0.0;
  remove_line(dec);
  double v = 0.0;
  for (double e : dec) v += e * e;
  return v / static_cast<double>(dec.size());
}

PhaseSeries highpass_phase(const PhaseSeries& series, double corner_hz) {
  series.validate();
  if (!(corner_hz > 0.0) || !(corner_hz < series.sample_rate / 2.0)) {
    throw std::invalid_argument("highpass_phase: corner must lie in (0, fs/2)");
  }
  // prewarped so the -3 dB point lands exactly on the corner
  const double k = std::tan(std::numbers::pi * corner_hz / series.sample_rate);
  const double b = 1.0 / (1.0 + k);
  const double a1 = (1.0 - k) / (1.0 + k);
  PhaseSeries out = series;
  double x1 = series.samples.front();
  double y1 = 0.0;
  out.samples.front() = 0.0;
  for (std::size_t i = 1; i < series.size(); ++i) {
    const double x = series.samples[i];
    y1 = b * (x - x1) + a1 * y1;
    x1 = x;
    out.samples[i] = y1;
  }
  return out;
}

}  // namespace opll
