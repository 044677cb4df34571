#include "opll/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <thread>

#include "opll/analysis.hpp"
#include "opll/cli/csv.hpp"

namespace opll::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void RunManifest::set(const std::string& key, const std::string& value) {
  for (auto& kv : fields) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  fields.emplace_back(key, value);
}

std::string RunManifest::text() const {
  std::string s;
  s += "version=" + std::string(kVersion) + "\n";
  s += "command=" + command + "\n";
  if (!config_hash.empty()) s += "config_hash=" + config_hash + "\n";
  if (seed) s += "seed=" + std::to_string(*seed) + "\n";
  s += "wall_time_s=" + format_double(wall_time_s) + "\n";
  for (const auto& [k, v] : fields) s += k + "=" + v + "\n";
  s += "outputs=" + std::to_string(outputs.size()) + "\n";
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    s += "output." + std::to_string(i) + "=" + outputs[i] + "\n";
  }
  return s;
}

void RunManifest::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text();
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::string cur;
  auto flush = [&](bool last) {
    std::string t;
    for (char ch : cur) {
      if (ch != ' ' && ch != '\t') t += ch;
    }
    cur.clear();
    if (t.empty()) {
      if (last && out.empty()) return;
      throw std::invalid_argument("empty entry in value list");
    }
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v)) {
      throw std::invalid_argument("'" + t + "' is not a number");
    }
    out.push_back(v);
  };
  for (char ch : text) {
    if (ch == ',') {
      flush(false);
    } else {
      cur += ch;
    }
  }
  flush(true);
  return out;
}

double run_phase_variance(const SimRecord& record, const AnalysisSettings& settings) {
  if (record.aborted()) return std::numeric_limits<double>::quiet_NaN();
  const PhaseSeries& beat = record.beat_phase;
  const auto skip = static_cast<std::size_t>(settings.settle_fraction * static_cast<double>(beat.size()));
  PhaseSeries tail;
  tail.sample_rate = beat.sample_rate;
  tail.samples.assign(beat.samples.begin() + static_cast<std::ptrdiff_t>(skip), beat.samples.end());
  if (tail.size() < 16) return std::numeric_limits<double>::quiet_NaN();
  return carrier_phase_variance(tail, settings.seg_len).phase_variance;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void print_summary(std::ostream& out, const RunManifest& m) {
  std::string line;
  for (const auto& [k, v] : m.fields) {
    const bool quote = v.find_first_of(" \t") != std::string::npos;
    line += (line.empty() ? "" : " ") + k + "=" + (quote ? "\"" + v + "\"" : v);
  }
  out << line << "\n";
}

std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : "none"; }

struct LoadedRun {
  RunConfig run;
  std::string hash;
};

LoadedRun load_run(const std::string& path, const std::optional<std::uint64_t>& seed_override) {
  const std::string text = read_text_file(path);
  LoadedRun lr{parse_config_text(text), fnv1a64_hex(text)};
  if (seed_override) lr.run.sim.seed = *seed_override;
  return lr;
}

std::vector<double> every_nth(const std::vector<double>& v, std::size_t every) {
  if (every <= 1) return v;
  std::vector<double> out;
  out.reserve(v.size() / every + 1);
  for (std::size_t i = 0; i < v.size(); i += every) out.push_back(v[i]);
  return out;
}

std::vector<double> times(std::size_t n, double fs, std::size_t every) {
  std::vector<double> t;
  t.reserve(n / std::max<std::size_t>(every, 1) + 1);
  for (std::size_t i = 0; i < n; i += std::max<std::size_t>(every, 1)) {
    t.push_back(static_cast<double>(i) / fs);
  }
  return t;
}

}  // namespace

int cmd_simulate(const SimulateOptions& opt, std::ostream& out, std::ostream& err) {
  const auto t0 = Clock::now();
  LoadedRun lr;
  try {
    lr = load_run(opt.config_path, opt.seed_override);
    ensure_dir(opt.out_dir);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (opt.every < 1) {
    err << "error: --every must be at least 1\n";
    return kExitUsage;
  }

  const SimConfig& cfg = lr.run.sim;
  const SimRecord rec = run_simulation(cfg);

  RunManifest m;
  m.command = "simulate";
  m.config_hash = lr.hash;
  m.seed = cfg.seed;
  m.set("config_path", opt.config_path);
  m.set("f_ref_hz", format_double(cfg.f_ref_hz));
  m.set("locked", rec.locked ? "1" : "0");
  m.set("lock_flag_time_s", fmt_opt(rec.lock_time_s));
  m.set("overrun_events", std::to_string(rec.overrun_events.size()));
  m.set("phase_var_rad2", format_double(run_phase_variance(rec, lr.run.analysis)));
  if (rec.aborted()) m.set("failure", rec.failure);

  try {
    const std::size_t every = opt.every;
    const auto t = times(rec.beat_phase.size(), cfg.fs_hz, every);
    const auto beat = every_nth(rec.beat_phase.samples, every);
    const auto error = every_nth(rec.phase_error.samples, every);
    const auto fast = every_nth(rec.fast_drive, every);
    const auto slow = every_nth(rec.slow_drive, every);
    const std::string p_beat = join(opt.out_dir, "beat_phase.csv");
    const std::string p_err = join(opt.out_dir, "phase_error.csv");
    const std::string p_fast = join(opt.out_dir, "fast_drive.csv");
    const std::string p_slow = join(opt.out_dir, "slow_drive.csv");
    write_csv(p_beat, {"time_s", "phase_rad"}, {t, beat});
    write_csv(p_err, {"time_s", "phase_rad"}, {t, error});
    write_csv(p_fast, {"time_s", "drive_v"}, {t, fast});
    write_csv(p_slow, {"time_s", "drive_v"}, {t, slow});
    const std::string p_manifest = join(opt.out_dir, "manifest.txt");
    m.outputs = {p_beat, p_err, p_fast, p_slow, p_manifest};
    m.wall_time_s = seconds_since(t0);
    m.write(p_manifest);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  print_summary(out, m);
  if (rec.aborted()) err << "run aborted: " << rec.failure << "\n";
  return rec.locked ? kExitLocked : kExitNotLocked;
}

namespace {

int analyze_psd(const AnalyzeOptions& opt, RunManifest& m) {
  const PhaseSeries s = read_phase_csv(opt.input);
  Detrend d = Detrend::mean;
  if (opt.detrend == "none") {
    d = Detrend::none;
  } else if (opt.detrend == "linear") {
    d = Detrend::linear;
  } else if (opt.detrend != "mean") {
    throw std::invalid_argument("--detrend must be none, mean or linear");
  }
  const Spectrum sp = welch_psd(s, std::min(opt.seg_len, s.size()), opt.overlap, d);
  const auto peak = std::max_element(sp.psd.begin() + 1, sp.psd.end()) - sp.psd.begin();
  const std::string path = join(opt.out_dir, "psd.csv");
  write_csv(path, {"freq_hz", "psd"}, {sp.freqs, sp.psd});
  m.outputs.push_back(path);
  m.set("bins", std::to_string(sp.freqs.size()));
  m.set("peak_hz", format_double(sp.freqs[static_cast<std::size_t>(peak)]));
  m.set("integral_rad2", format_double(sp.integral()));
  m.set("rbw_hz", format_double(sp.rbw_equivalent));
  return kExitLocked;
}

void set_carrier(RunManifest& m, const CarrierEstimate& est) {
  m.set("phase_var", format_double(est.phase_variance));
  m.set("carrier_fraction", format_double(est.carrier_fraction));
  m.set("carrier_dominant", est.carrier_dominant ? "1" : "0");
}

int analyze_eq1(const AnalyzeOptions& opt, RunManifest& m, std::ostream& err) {
  const CsvTable t = read_csv(opt.input);
  const std::string path = join(opt.out_dir, "eq1_spectrum.csv");
  CarrierEstimate est;
  if (t.header == std::vector<std::string>{"time_s", "phase_rad"}) {
    const PhaseSeries s = read_phase_csv(opt.input);
    const PhaseSeries c = detrend_linear(s);
    std::vector<std::complex<double>> field(c.size());
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = std::polar(1.0, c.samples[i]);
    const Spectrum sp =
        welch_psd_complex(field, s.sample_rate, std::min(opt.seg_len, field.size()), 0.5);
    est = carrier_phase_variance(sp, opt.carrier_width_hz, opt.span_hz);
    write_csv(path, {"freq_hz", "psd"}, {sp.freqs, sp.psd});
    m.set("source", "phase");
  } else if (t.header == std::vector<std::string>{"freq_hz", "psd"}) {
    Spectrum sp;
    sp.freqs = t.columns[0];
    sp.psd = t.columns[1];
    sp.units = PsdUnits::power_per_hz;
    est = carrier_phase_variance(sp, opt.carrier_width_hz, opt.span_hz);
    write_csv(path, {"freq_hz", "psd"}, {sp.freqs, sp.psd});
    m.set("source", "spectrum");
  } else if (t.header == std::vector<std::string>{"freq_hz", "power_dbm"}) {
    if (!opt.rbw_hz) throw SchemaError("analyzer traces (freq_hz,power_dbm) need --rbw");
    est = carrier_phase_variance_sa_trace(t.columns[0], t.columns[1], *opt.rbw_hz);
    std::vector<double> density(t.rows());
    for (std::size_t i = 0; i < density.size(); ++i) {
      density[i] = std::pow(10.0, sa_noise_corrections(t.columns[1][i], *opt.rbw_hz) / 10.0);
    }
    write_csv(path, {"freq_hz", "psd"}, {t.columns[0], density});
    m.set("source", "analyzer_trace");
  } else {
    require_header(t, {"time_s", "phase_rad"}, opt.input);
  }
  m.outputs.push_back(path);
  set_carrier(m, est);
  if (!est.carrier_dominant) {
    err << "warning: carrier holds less than 1% of the power; the estimate is unreliable\n";
  }
  return kExitLocked;
}

int analyze_mvar(const AnalyzeOptions& opt, RunManifest& m) {
  if (!opt.nu0_hz) throw std::invalid_argument("mvar needs --nu0 (carrier frequency in Hz)");
  const PhaseSeries s = read_phase_csv(opt.input);
  const double tau0 = s.dt();
  const double n_max = std::floor(static_cast<double>(s.size() - 1) / 3.0);
  if (n_max < 1.0) throw SchemaError(opt.input + ": too few samples for any tau");
  const double lo = opt.tau_min_s.value_or(tau0);
  const double hi = std::min(opt.tau_max_s.value_or(n_max * tau0), n_max * tau0);
  const auto taus = log_spaced_taus(tau0, lo, hi, opt.per_decade);
  const AllanCurve c = mod_allan(s, *opt.nu0_hz, taus);
  const std::string path = join(opt.out_dir, "mvar.csv");
  write_csv(path, {"tau_s", "mdev"}, {c.taus, c.mdev});
  m.outputs.push_back(path);
  m.set("points", std::to_string(c.taus.size()));
  m.set("max_mdev", format_double(*std::max_element(c.mdev.begin(), c.mdev.end())));
  const bool positive = std::all_of(c.mdev.begin(), c.mdev.end(), [](double v) { return v > 0.0; });
  if (positive && c.taus.size() >= 5) {
    const SlopeFit f = fit_loglog_slope(c, c.taus.front(), c.taus.back());
    m.set("slope", format_double(f.slope));
    m.set("slope_half_width", format_double(f.half_width));
  }
  m.set("snapped_taus", std::to_string(c.annotations.size()));
  return kExitLocked;
}

int analyze_rms(const AnalyzeOptions& opt, RunManifest& m) {
  const PhaseSeries s = read_phase_csv(opt.input);
  const double v = rms_phase_variance(s, opt.rate_hz);
  const std::string path = join(opt.out_dir, "rms.csv");
  const std::vector<double> rate{opt.rate_hz};
  const std::vector<double> var{v};
  write_csv(path, {"rate_hz", "phase_var_rad2"}, {rate, var});
  m.outputs.push_back(path);
  m.set("phase_var", format_double(v));
  return kExitLocked;
}

}  // namespace

int cmd_analyze(const AnalyzeOptions& opt, std::ostream& out, std::ostream& err) {
  const auto t0 = Clock::now();
  RunManifest m;
  m.command = "analyze";
  m.set("mode", opt.mode);
  m.set("input", opt.input);
  try {
    ensure_dir(opt.out_dir);
    if (opt.mode == "psd") {
      analyze_psd(opt, m);
    } else if (opt.mode == "eq1") {
      analyze_eq1(opt, m, err);
    } else if (opt.mode == "mvar") {
      analyze_mvar(opt, m);
    } else if (opt.mode == "rms") {
      analyze_rms(opt, m);
    } else {
      err << "error: unknown mode '" << opt.mode << "' (psd, eq1, mvar, rms)\n";
      return kExitUsage;
    }
    const std::string p_manifest = join(opt.out_dir, "manifest.txt");
    m.outputs.push_back(p_manifest);
    m.wall_time_s = seconds_since(t0);
    m.write(p_manifest);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  print_summary(out, m);
  return kExitLocked;
}

namespace {

json* resolve(json& doc, const std::string& dotted) {
  json* node = &doc;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty() || !node->is_object() || !node->contains(key)) return nullptr;
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return node;
}

unsigned thread_count(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("OPLL_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

struct SweepRow {
  double value = 0.0;
  double phase_var = 0.0;
  bool locked = false;
};

}  // namespace

int cmd_sweep(const SweepOptions& opt, std::ostream& out, std::ostream& err) {
  const auto t0 = Clock::now();
  std::string text;
  std::vector<RunConfig> runs;
  json merged;
  try {
    text = read_text_file(opt.config_path);
    json user;
    try {
      user = json::parse(text);
    } catch (const json::parse_error&) {
      // reuse the line reporting of the regular loader
      parse_config_text(text);
      throw;
    }
    merged = merged_config_json(user);
    // the file itself must be a valid configuration
    parse_config_text(text);

    json* target = resolve(merged, opt.axis);
    const bool reference_axis = opt.axis == "noise.reference_dbc";
    if (!target || (!reference_axis && (!target->is_number() || target->is_boolean()))) {
      throw ConfigError("sweep axis '" + opt.axis + "' does not name a numeric config field",
                        opt.axis, std::nullopt);
    }
    for (double v : opt.values) {
      json doc = merged;
      *resolve(doc, opt.axis) = v;
      RunConfig rc = config_from_json(doc);
      if (opt.seed_override) rc.sim.seed = *opt.seed_override;
      try {
        rc.sim.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError("sweep value " + format_double(v) + " rejected: " + e.what(), opt.axis,
                          std::nullopt);
      }
      runs.push_back(rc);
    }
    ensure_dir(opt.out_dir);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  std::vector<SweepRow> rows(runs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      const SimRecord rec = run_simulation(runs[i].sim);
      rows[i] = {opt.values[i], run_phase_variance(rec, runs[i].analysis), rec.locked};
    }
  };
  const unsigned n_threads = std::min<unsigned>(thread_count(opt.threads),
                                                static_cast<unsigned>(std::max<std::size_t>(runs.size(), 1)));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::stable_sort(rows.begin(), rows.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.value < b.value; });

  RunManifest m;
  m.command = "sweep";
  m.config_hash = fnv1a64_hex(text);
  if (!runs.empty()) m.seed = runs.front().sim.seed;
  m.set("config_path", opt.config_path);
  m.set("axis", opt.axis);
  m.set("runs", std::to_string(rows.size()));
  bool all_locked = true;
  for (const auto& r : rows) all_locked = all_locked && r.locked;
  m.set("all_locked", all_locked ? "1" : "0");

  try {
    const std::string p_summary = join(opt.out_dir, "sweep_summary.csv");
    std::vector<double> value;
    std::vector<double> var;
    std::vector<double> locked;
    for (const auto& r : rows) {
      value.push_back(r.value);
      var.push_back(r.phase_var);
      locked.push_back(r.locked ? 1.0 : 0.0);
    }
    write_csv(p_summary, {"value", "phase_var", "locked"}, {value, var, locked});
    const std::string p_manifest = join(opt.out_dir, "manifest.txt");
    m.outputs = {p_summary, p_manifest};
    m.wall_time_s = seconds_since(t0);
    m.write(p_manifest);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  print_summary(out, m);
  return all_locked ? kExitLocked : kExitNotLocked;
}

int cmd_selftest(std::ostream& out, std::ostream&) {
  int failures = 0;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    out << "selftest " << name << ": " << (ok ? "PASS" : "FAIL") << " (" << detail << ")\n";
    if (!ok) ++failures;
  };

  {
    // white Gaussian phase noise of known variance around a carrier
    const double target = 0.08;
    const std::size_t n = 1 << 16;
    PhaseSeries s = synthesize_power_law(PowerLawNoiseSpec::single(0, 2.0 * target / 1.0e6), n,
                                         1.0e6, 7);
    const double est = carrier_phase_variance(s, 1024).phase_variance;
    report("carrier_fraction", std::abs(est - target) < 0.2 * target,
           "estimate " + format_double(est) + " rad^2 for " + format_double(target));
  }
  {
    PfdConfig cfg;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> off(0.01, 0.5);
    std::bernoulli_distribution sign;
    int correct = 0;
    const int trials = 20;
    for (int k = 0; k < trials; ++k) {
      const double f_ref = 1.0e6;
      const double f_div = f_ref * (1.0 + (sign(rng) ? 1.0 : -1.0) * off(rng));
      const double t_end = std::max(100.0 / std::min(f_ref, f_div), 20.0 / std::abs(f_ref - f_div));
      std::vector<double> re;
      std::vector<double> de;
      for (double t = 1.0 / f_ref; t < t_end; t += 1.0 / f_ref) re.push_back(t);
      for (double t = 1.0 / f_div; t < t_end; t += 1.0 / f_div) de.push_back(t);
      const double mean = mean_pump_output(re, de, cfg, 0.0, t_end);
      if ((mean > 0.0) == (f_ref > f_div)) ++correct;
    }
    report("pfd_discrimination", correct == trials,
           std::to_string(correct) + "/" + std::to_string(trials) + " signs correct");
  }
  {
    SimConfig c;
    c.ref_noise.reset();
    c.master_noise = {};
    c.laser.free_run_noise = {};
    c.pfd_floor_enabled = false;
    c.detector_floor = {};
    c.laser.detuning0_hz = 2.0e6;
    c.duration_s = 2.0e-3;
    const SimRecord r = run_simulation(c);
    report("noiseless_lock", r.locked && r.lock_time_s.has_value(),
           "lock at " + fmt_opt(r.lock_time_s) + " s");
  }
  {
    // same reference and R: doubling N doubles the beat frequency as well
    const double d = pfd_noise_floor_dbc(192, 2.0 * 6.912e9) - pfd_noise_floor_dbc(96, 6.912e9);
    report("floor_scaling", std::abs(d - 20.0 * std::log10(2.0)) < 1e-9,
           "doubling N adds " + format_double(d) + " dB");
  }
  out << "selftest " << (failures == 0 ? "PASS" : "FAIL") << "\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace opll::cli
