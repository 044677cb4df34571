#include "opll/cli/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace opll::cli {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::span<const double>>& columns) {
  if (header.size() != columns.size()) throw std::invalid_argument("write_csv: header/column count");
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns) {
    if (c.size() != rows) throw std::invalid_argument("write_csv: ragged columns");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  std::string line;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) line += ',';
    line += header[j];
  }
  line += '\n';
  out << line;
  for (std::size_t i = 0; i < rows; ++i) {
    line.clear();
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (j) line += ',';
      line += format_double(columns[j][i]);
    }
    line += '\n';
    out << line;
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

namespace {
std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r' && ch != ' ' && ch != '\t') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}
}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path + ": empty file, expected a header row");
  t.header = split(line);
  t.columns.resize(t.header.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size()) {
      throw SchemaError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " columns, found " +
                        std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      double v = 0.0;
      const char* b = cells[j].data();
      const char* e = b + cells[j].size();
      const auto res = std::from_chars(b, e, v);
      if (res.ec != std::errc() || res.ptr != e) {
        throw SchemaError(path + ":" + std::to_string(lineno) + ": '" + cells[j] +
                          "' is not a number");
      }
      t.columns[j].push_back(v);
    }
  }
  return t;
}

void require_header(const CsvTable& table, const std::vector<std::string>& expected,
                    const std::string& path) {
  if (table.header == expected) return;
  std::string want;
  for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
  std::string got;
  for (const auto& h : table.header) got += (got.empty() ? "" : ",") + h;
  throw SchemaError(path + ": expected columns '" + want + "', found '" + got + "'");
}

PhaseSeries read_phase_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  require_header(t, {"time_s", "phase_rad"}, path);
  const auto& time = t.columns[0];
  if (time.size() < 2) throw SchemaError(path + ": need at least two samples");
  const double dt = (time.back() - time.front()) / static_cast<double>(time.size() - 1);
  if (!(dt > 0.0)) throw SchemaError(path + ": time_s must increase");
  for (std::size_t i = 1; i < time.size(); ++i) {
    if (std::abs(time[i] - time[i - 1] - dt) > 1e-6 * dt + 1e-12 * std::abs(time[i])) {
      throw SchemaError(path + ": time_s is not uniformly sampled near row " +
                        std::to_string(i + 2));
    }
  }
  PhaseSeries s;
  s.samples = t.columns[1];
  s.sample_rate = 1.0 / dt;
  s.t0 = time.front();
  return s;
}

void write_phase_csv(const std::string& path, const PhaseSeries& series) {
  std::vector<double> time(series.size());
  for (std::size_t i = 0; i < time.size(); ++i) time[i] = series.time(i);
  write_csv(path, {"time_s", "phase_rad"}, {time, series.samples});
}

}  // namespace opll::cli
