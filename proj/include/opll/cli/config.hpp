#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "opll/simengine.hpp"

namespace opll::cli {

/// Config problem with the offending JSON path and, when known, its line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, std::string field, std::optional<int> line);

  const std::string& field() const { return field_; }
  std::optional<int> line() const { return line_; }

 private:
  std::string field_;
  std::optional<int> line_;
};

/// Post-processing knobs that live next to the simulation settings.
struct AnalysisSettings {
  double settle_fraction = 0.2;  // leading part of a run excluded from statistics
  std::size_t seg_len = 4096;    // Welch segment for the carrier-fraction estimate
};

struct RunConfig {
  SimConfig sim;
  AnalysisSettings analysis;
  /// f_ref_hz was absent and derived from the lock condition.
  bool f_ref_derived = false;
};

/// Builds a run configuration from JSON. Every key carries its unit in its
/// name; unknown keys are errors. When f_ref_hz is absent it is set to
/// f_beat_hz * R / (P * N). `source_text` is only used to attach line numbers.
RunConfig config_from_json(const nlohmann::json& doc, const std::string& source_text = {});

/// Parses and validates config text; the SimConfig invariants are checked too.
RunConfig parse_config_text(const std::string& text);

/// JSON for the built-in defaults, without f_ref_hz (derived on load).
nlohmann::json default_config_json();

/// Defaults overlaid with the user document (RFC 7386 merge patch).
nlohmann::json merged_config_json(const nlohmann::json& user);

/// 64-bit FNV-1a of the bytes, as 16 lowercase hex digits.
std::string fnv1a64_hex(const std::string& bytes);

std::string read_text_file(const std::string& path);

}  // namespace opll::cli
