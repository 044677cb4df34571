#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "opll/noise.hpp"

namespace opll::cli {

/// Input file does not match the expected column layout.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest round-tripping decimal form, independent of the C locale.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
};

/// Writes a header row and equally long numeric columns.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::span<const double>>& columns);

/// Reads a numeric CSV with one header row. Throws SchemaError on ragged rows
/// or unparsable numbers, std::runtime_error if the file cannot be opened.
CsvTable read_csv(const std::string& path);

/// Throws SchemaError unless the header is exactly `expected`.
void require_header(const CsvTable& table, const std::vector<std::string>& expected,
                    const std::string& path);

/// time_s,phase_rad file as a series. The time column must be uniform.
PhaseSeries read_phase_csv(const std::string& path);
void write_phase_csv(const std::string& path, const PhaseSeries& series);

}  // namespace opll::cli
