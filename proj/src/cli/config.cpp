#include "opll/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace opll::cli {

using nlohmann::json;

ConfigError::ConfigError(const std::string& message, std::string field, std::optional<int> line)
    : std::runtime_error(message), field_(std::move(field)), line_(line) {}

namespace {

// Line of the first occurrence of "key" in the source text, 1-based.
std::optional<int> line_of_key(const std::string& text, const std::string& path) {
  const auto dot = path.find_last_of('.');
  std::string key = dot == std::string::npos ? path : path.substr(dot + 1);
  const auto bracket = key.find('[');
  if (bracket != std::string::npos) key = key.substr(0, bracket);
  if (key.empty() || text.empty()) return std::nullopt;
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return std::nullopt;
  int line = 1;
  for (std::size_t i = 0; i < pos; ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

class Section {
 public:
  Section(const json& obj, std::string path, const std::string& text)
      : obj_(obj), path_(std::move(path)), text_(text) {
    if (!obj_.is_object()) fail(path_.empty() ? "<root>" : path_, "must be an object");
  }

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    const auto line = line_of_key(text_, field);
    std::string msg = "config field '" + field + "' " + what;
    if (line) msg += " (line " + std::to_string(*line) + ")";
    throw ConfigError(msg, field, line);
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number()) fail(field(key), "must be a number");
    out = v->get<double>();
    if (!std::isfinite(out)) fail(field(key), "must be finite");
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number()) fail(field(key), "must be an integer");
    const double d = v->get<double>();
    if (v->is_number_unsigned()) {
      out = static_cast<Int>(v->get<std::uint64_t>());
    } else if (v->is_number_integer()) {
      out = static_cast<Int>(v->get<std::int64_t>());
    } else if (std::isfinite(d) && std::floor(d) == d && std::abs(d) < 9.0e15) {
      out = static_cast<Int>(d);
    } else {
      fail(field(key), "must be an integer");
    }
    if constexpr (std::is_unsigned_v<Int>) {
      if (d < 0.0) fail(field(key), "must be non-negative");
    }
  }

  void boolean(const std::string& key, bool& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_boolean()) fail(field(key), "must be true or false");
    out = v->get<bool>();
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) fail(field(key), "is not a recognised key");
    }
  }

  const std::string& text() const { return text_; }

 private:
  const json& obj_;
  std::string path_;
  const std::string& text_;
  std::set<std::string> seen_;
};

PowerLawNoiseSpec read_power_law(const json& v, const std::string& path, const std::string& text) {
  PowerLawNoiseSpec spec;
  if (v.is_null()) return spec;
  if (!v.is_array()) {
    Section(json::object(), path, text).fail(path, "must be a list of {exponent, coefficient}");
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    Section s(v[i], path + "[" + std::to_string(i) + "]", text);
    PowerLawTerm t;
    double exponent = 1.0;
    s.number("exponent", exponent);
    s.number("coefficient", t.coefficient);
    s.finish();
    if (std::floor(exponent) != exponent) s.fail(path, "exponents must be integers");
    t.exponent = static_cast<int>(exponent);
    spec.terms.push_back(t);
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    Section(json::object(), path, text).fail(path, std::string("is invalid: ") + e.what());
  }
  return spec;
}

std::optional<DbcSpec> read_dbc(const json& v, const std::string& path, const std::string& text) {
  if (v.is_null()) return std::nullopt;
  if (v.is_number()) return DbcSpec::flat(v.get<double>());
  if (!v.is_array()) {
    Section(json::object(), path, text)
        .fail(path, "must be null, a flat level in dBc/Hz or a list of {offset_hz, dbc_per_hz}");
  }
  DbcSpec spec;
  for (std::size_t i = 0; i < v.size(); ++i) {
    Section s(v[i], path + "[" + std::to_string(i) + "]", text);
    DbcPoint p;
    s.number("offset_hz", p.offset_hz);
    s.number("dbc_per_hz", p.dbc_per_hz);
    s.finish();
    spec.points.push_back(p);
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    Section(json::object(), path, text).fail(path, std::string("is invalid: ") + e.what());
  }
  return spec;
}

json power_law_json(const PowerLawNoiseSpec& spec) {
  json a = json::array();
  for (const auto& t : spec.terms) a.push_back({{"exponent", t.exponent}, {"coefficient", t.coefficient}});
  return a;
}

}  // namespace

RunConfig config_from_json(const json& doc, const std::string& text) {
  RunConfig rc;
  SimConfig& c = rc.sim;
  Section top(doc, "", text);

  top.number("f_beat_hz", c.f_beat_target_hz);
  const bool has_ref = top.find("f_ref_hz") != nullptr && !doc.at("f_ref_hz").is_null();
  if (has_ref) top.number("f_ref_hz", c.f_ref_hz);
  top.number("fs_hz", c.fs_hz);
  top.number("duration_s", c.duration_s);
  top.integer("seed", c.seed);

  if (const json* v = top.find("laser")) {
    Section s(*v, "laser", text);
    LaserParams& l = c.laser;
    s.number("k_thermal_hz_per_ma", l.k_thermal_hz_per_ma);
    s.number("f_thermal_hz", l.f_thermal_hz);
    s.number("k_carrier_hz_per_ma", l.k_carrier_hz_per_ma);
    s.number("k_piezo_hz_per_v", l.k_piezo_hz_per_v);
    s.number("f_piezo_hz", l.f_piezo_hz);
    s.number("q_piezo", l.q_piezo);
    s.number("detuning0_hz", l.detuning0_hz);
    s.number("mode_hop_limit_hz", l.mode_hop_limit_hz);
    if (const json* n = s.find("free_run_noise")) {
      l.free_run_noise = read_power_law(*n, "laser.free_run_noise", text);
    }
    s.finish();
  }

  if (const json* v = top.find("pfd")) {
    Section s(*v, "pfd", text);
    s.integer("prescaler", c.pfd.prescaler_p);
    s.integer("n_div", c.pfd.n_div);
    s.integer("r_div", c.pfd.r_div);
    s.number("i_cp", c.pfd.i_cp);
    s.boolean("floor_enabled", c.pfd_floor_enabled);
    s.finish();
  }

  if (const json* v = top.find("loop")) {
    Section s(*v, "loop", text);
    LoopConfig& l = c.loop;
    s.number("pi_proportional_v", l.pi_proportional);
    s.number("pi_integral_tau_s", l.pi_integral_tau);
    s.number("rail_lo_v", l.rail_lo);
    s.number("rail_hi_v", l.rail_hi);
    s.number("pre_gain", l.pre_gain);
    s.number("bias_v", l.bias);
    s.number("main_gain", l.main_gain);
    s.number("main_rail_v", l.main_rail);
    s.number("lead_tau1_s", l.lead_tau1);
    s.number("lead_tau2_s", l.lead_tau2);
    s.number("fast_gain", l.fast_gain);
    s.number("modulator_ma_per_v", l.modulator_ma_per_v);
    s.number("slow_tau_s", l.slow_tau);
    s.number("slow_limit_v", l.slow_limit);
    s.boolean("slow_enabled", l.slow_enabled);
    s.boolean("clamps_enabled", l.clamps_enabled);
    s.finish();
  }

  if (const json* v = top.find("noise")) {
    Section s(*v, "noise", text);
    if (const json* n = s.find("reference_dbc")) c.ref_noise = read_dbc(*n, "noise.reference_dbc", text);
    if (const json* n = s.find("master")) c.master_noise = read_power_law(*n, "noise.master", text);
    if (const json* n = s.find("detector_floor")) {
      c.detector_floor = read_power_law(*n, "noise.detector_floor", text);
    }
    s.finish();
  }

  if (const json* v = top.find("lock")) {
    Section s(*v, "lock", text);
    s.number("threshold_rad", c.lock_threshold_rad);
    s.number("periods", c.lock_periods);
    s.number("divergence_cycles", c.divergence_cycles);
    s.integer("max_samples", c.max_samples);
    s.boolean("start_at_equilibrium", c.start_at_equilibrium);
    s.finish();
  }

  if (const json* v = top.find("analysis")) {
    Section s(*v, "analysis", text);
    s.number("settle_fraction", rc.analysis.settle_fraction);
    s.integer("seg_len", rc.analysis.seg_len);
    s.finish();
    if (!(rc.analysis.settle_fraction >= 0.0 && rc.analysis.settle_fraction < 1.0)) {
      s.fail("analysis.settle_fraction", "must lie in [0, 1)");
    }
    if (rc.analysis.seg_len < 16) s.fail("analysis.seg_len", "must be at least 16");
  }
  top.finish();

  if (!has_ref) {
    if (c.pfd.prescaler_p < 1 || c.pfd.n_div < 1) {
      top.fail("pfd.n_div", "must be positive to derive f_ref_hz");
    }
    c.f_ref_hz = c.f_beat_target_hz * static_cast<double>(c.pfd.r_div) /
                 static_cast<double>(c.pfd.beat_modulus());
    rc.f_ref_derived = true;
  }
  return rc;
}

RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    int line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') ++line;
    }
    throw ConfigError("config is not valid JSON at line " + std::to_string(line) + ": " + e.what(),
                      "", line);
  }
  RunConfig rc = config_from_json(doc, text);
  try {
    rc.sim.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config rejected: ") + e.what(), "", std::nullopt);
  }
  return rc;
}

json default_config_json() {
  const SimConfig c;
  const AnalysisSettings a;
  json ref = nullptr;
  if (c.ref_noise) {
    ref = json::array();
    for (const auto& p : c.ref_noise->points) {
      ref.push_back({{"offset_hz", p.offset_hz}, {"dbc_per_hz", p.dbc_per_hz}});
    }
  }
  return {
      {"f_beat_hz", c.f_beat_target_hz},
      {"fs_hz", c.fs_hz},
      {"duration_s", c.duration_s},
      {"seed", c.seed},
      {"laser",
       {{"k_thermal_hz_per_ma", c.laser.k_thermal_hz_per_ma},
        {"f_thermal_hz", c.laser.f_thermal_hz},
        {"k_carrier_hz_per_ma", c.laser.k_carrier_hz_per_ma},
        {"k_piezo_hz_per_v", c.laser.k_piezo_hz_per_v},
        {"f_piezo_hz", c.laser.f_piezo_hz},
        {"q_piezo", c.laser.q_piezo},
        {"detuning0_hz", c.laser.detuning0_hz},
        {"mode_hop_limit_hz", c.laser.mode_hop_limit_hz},
        {"free_run_noise", power_law_json(c.laser.free_run_noise)}}},
      {"pfd",
       {{"prescaler", c.pfd.prescaler_p},
        {"n_div", c.pfd.n_div},
        {"r_div", c.pfd.r_div},
        {"i_cp", c.pfd.i_cp},
        {"floor_enabled", c.pfd_floor_enabled}}},
      {"loop",
       {{"pi_proportional_v", c.loop.pi_proportional},
        {"pi_integral_tau_s", c.loop.pi_integral_tau},
        {"rail_lo_v", c.loop.rail_lo},
        {"rail_hi_v", c.loop.rail_hi},
        {"pre_gain", c.loop.pre_gain},
        {"bias_v", c.loop.bias},
        {"main_gain", c.loop.main_gain},
        {"main_rail_v", c.loop.main_rail},
        {"lead_tau1_s", c.loop.lead_tau1},
        {"lead_tau2_s", c.loop.lead_tau2},
        {"fast_gain", c.loop.fast_gain},
        {"modulator_ma_per_v", c.loop.modulator_ma_per_v},
        {"slow_tau_s", c.loop.slow_tau},
        {"slow_limit_v", c.loop.slow_limit},
        {"slow_enabled", c.loop.slow_enabled},
        {"clamps_enabled", c.loop.clamps_enabled}}},
      {"noise",
       {{"reference_dbc", ref},
        {"master", power_law_json(c.master_noise)},
        {"detector_floor", power_law_json(c.detector_floor)}}},
      {"lock",
       {{"threshold_rad", c.lock_threshold_rad},
        {"periods", c.lock_periods},
        {"divergence_cycles", c.divergence_cycles},
        {"max_samples", c.max_samples},
        {"start_at_equilibrium", c.start_at_equilibrium}}},
      {"analysis", {{"settle_fraction", a.settle_fraction}, {"seg_len", a.seg_len}}},
  };
}

json merged_config_json(const json& user) {
  json out = default_config_json();
  // null has its own meaning for reference_dbc (noise off), which a merge patch would drop
  json patch = user;
  std::optional<bool> ref_off;
  if (patch.contains("noise") && patch["noise"].is_object() &&
      patch["noise"].contains("reference_dbc") && patch["noise"]["reference_dbc"].is_null()) {
    ref_off = true;
    patch["noise"].erase("reference_dbc");
  }
  out.merge_patch(patch);
  if (ref_off) out["noise"]["reference_dbc"] = nullptr;
  return out;
}

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'", "", std::nullopt);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace opll::cli
