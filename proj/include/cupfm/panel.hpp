#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cupfm/errors.hpp"
#include "cupfm/linalg.hpp"

namespace cupfm {

// Balanced panel: n units observed over the same T periods, one scalar
// outcome and k regressors per cell.  Immutable after construction.
struct PanelDataset {
  int n = 0;
  int T = 0;
  int k = 0;
  Matrix y;               // T x n, one column per unit
  std::vector<Matrix> x;  // n matrices, each T x k
  std::vector<std::string> unit_ids;  // ascending
  std::vector<std::string> time_ids;  // ascending
};

enum class DetrendMode { None, Demean, DemeanAndTrend };

struct DetrendSpec {
  DetrendMode mode = DetrendMode::None;
};

// First differences of a T x m series.  Row t holds the change into original
// period t+2 (1-based); the first period is dropped.
struct DifferencedSeries {
  Matrix values;          // (T-1) x m
  int origin_offset = 2;  // first retained original period, 1-based
};

struct PanelRecord {
  std::string unit;
  std::string time;
  double y = 0.0;
  std::vector<double> x;
};

namespace detail {

inline std::optional<double> parse_double(const std::string& text) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

// Labels sort numerically when every label parses as a number, otherwise
// lexicographically.  Keeps time ordering sane for integer periods while
// still accepting arbitrary string ids.
inline std::vector<std::string> sorted_labels(std::vector<std::string> labels) {
  bool all_numeric = true;
  std::vector<double> parsed(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto v = parse_double(labels[i]);
    if (!v) {
      all_numeric = false;
      break;
    }
    parsed[i] = *v;
  }
  if (all_numeric) {
    std::vector<std::size_t> order(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (parsed[a] != parsed[b]) return parsed[a] < parsed[b];
      return labels[a] < labels[b];
    });
    std::vector<std::string> out(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) out[i] = labels[order[i]];
    return out;
  }
  std::sort(labels.begin(), labels.end());
  return labels;
}

inline std::string shortest_repr(double value) {
  char buffer[32];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  (void)ec;
  return std::string(buffer, ptr);
}

}  // namespace detail

inline PanelDataset load_panel(const std::vector<PanelRecord>& records) {
  if (records.empty())
    fail(ErrorCode::UnbalancedPanel, "no records supplied");
  const std::size_t k = records.front().x.size();
  if (k < 1) fail(ErrorCode::InvalidArgument, "need at least one regressor");
  for (const auto& rec : records)
    if (rec.x.size() != k)
      fail(ErrorCode::DimensionMismatch,
           "record (" + rec.unit + "," + rec.time + ") has " +
               std::to_string(rec.x.size()) + " regressors, expected " +
               std::to_string(k));

  std::vector<std::string> units, times;
  for (const auto& rec : records) units.push_back(rec.unit);
  for (const auto& rec : records) times.push_back(rec.time);
  std::sort(units.begin(), units.end());
  units.erase(std::unique(units.begin(), units.end()), units.end());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  units = detail::sorted_labels(std::move(units));
  times = detail::sorted_labels(std::move(times));

  const std::size_t n = units.size();
  const std::size_t T = times.size();
  if (n < 2) fail(ErrorCode::UnbalancedPanel, "panel needs at least 2 units");
  if (T < 4)
    fail(ErrorCode::UnbalancedPanel,
         "panel needs at least 4 periods (differencing plus kernel lags)");

  std::map<std::string, int> unit_index, time_index;
  for (std::size_t i = 0; i < n; ++i) unit_index[units[i]] = static_cast<int>(i);
  for (std::size_t t = 0; t < T; ++t) time_index[times[t]] = static_cast<int>(t);

  PanelDataset panel;
  panel.n = static_cast<int>(n);
  panel.T = static_cast<int>(T);
  panel.k = static_cast<int>(k);
  panel.y.resize(panel.T, panel.n);
  panel.x.assign(n, Matrix(panel.T, panel.k));
  panel.unit_ids = units;
  panel.time_ids = times;

  std::vector<char> seen(n * T, 0);
  for (const auto& rec : records) {
    const int i = unit_index.at(rec.unit);
    const int t = time_index.at(rec.time);
    char& cell = seen[static_cast<std::size_t>(i) * T + t];
    if (cell)
      fail(ErrorCode::DuplicateCell,
           "duplicate cell unit=" + rec.unit + " time=" + rec.time);
    cell = 1;
    panel.y(t, i) = rec.y;
    for (std::size_t j = 0; j < k; ++j) panel.x[i](t, static_cast<int>(j)) = rec.x[j];
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < T; ++t)
      if (!seen[i * T + t])
        fail(ErrorCode::UnbalancedPanel,
             "missing cell unit=" + units[i] + " time=" + times[t]);
  return panel;
}

// Residuals from projecting each unit's series on {1} or {1, t}.  Mode None
// returns the input unchanged.
inline PanelDataset project_deterministics(const PanelDataset& panel,
                                           const DetrendSpec& spec) {
  if (spec.mode == DetrendMode::None) return panel;
  const int T = panel.T;
  if (spec.mode == DetrendMode::Demean && T < 2)
    fail(ErrorCode::DegenerateProjection, "demeaning needs T > 1");
  if (spec.mode == DetrendMode::DemeanAndTrend && T < 3)
    fail(ErrorCode::DegenerateProjection, "detrending needs T > 2");

  auto project_column = [&](Vector column) -> Vector {
    const double mean = column.mean();
    if (spec.mode == DetrendMode::Demean) return column.array() - mean;
    // Closed-form OLS on (1, t) with t = 1..T.
    const double t_mean = 0.5 * (T + 1);
    double stt = 0.0, stz = 0.0;
    for (int t = 0; t < T; ++t) {
      const double dt = (t + 1) - t_mean;
      stt += dt * dt;
      stz += dt * (column[t] - mean);
    }
    const double slope = stz / stt;
    Vector out(T);
    for (int t = 0; t < T; ++t)
      out[t] = column[t] - mean - slope * ((t + 1) - t_mean);
    return out;
  };

  PanelDataset out = panel;
  for (int i = 0; i < panel.n; ++i) {
    out.y.col(i) = project_column(panel.y.col(i));
    for (int j = 0; j < panel.k; ++j)
      out.x[i].col(j) = project_column(panel.x[i].col(j));
  }
  return out;
}

inline DifferencedSeries first_difference(const Matrix& series) {
  if (series.rows() < 2)
    fail(ErrorCode::TooShort, "need at least 2 rows to difference");
  DifferencedSeries out;
  out.values = series.bottomRows(series.rows() - 1) -
               series.topRows(series.rows() - 1);
  return out;
}

// ---------------------------------------------------------------------------
// CSV interface: long format `unit,time,y,x1,...,xk`, '.' decimal separator.

inline std::vector<PanelRecord> read_panel_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    fail(ErrorCode::NonNumericField, "empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const std::vector<std::string> required = {"unit", "time", "y"};
  for (std::size_t j = 0; j < required.size(); ++j)
    if (j >= header.size() || header[j] != required[j])
      fail(ErrorCode::InvalidArgument,
           "missing required column '" + required[j] +
               "' (header must be unit,time,y,x1,...,xk)");
  const std::size_t k = header.size() - 3;
  if (k < 1)
    fail(ErrorCode::InvalidArgument, "missing required column 'x1'");
  for (std::size_t j = 0; j < k; ++j)
    if (header[3 + j] != "x" + std::to_string(j + 1))
      fail(ErrorCode::InvalidArgument,
           "missing required column 'x" + std::to_string(j + 1) + "'");

  std::vector<PanelRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size())
      fail(ErrorCode::DimensionMismatch,
           "line " + std::to_string(line_no) + " has " +
               std::to_string(cells.size()) + " fields, expected " +
               std::to_string(header.size()));
    PanelRecord rec;
    rec.unit = cells[0];
    rec.time = cells[1];
    auto parse_field = [&](const std::string& text, const std::string& column) {
      auto v = detail::parse_double(text);
      if (!v)
        fail(ErrorCode::NonNumericField,
             "non-numeric value '" + text + "' in column " + column +
                 " at line " + std::to_string(line_no));
      return *v;
    };
    rec.y = parse_field(cells[2], "y");
    rec.x.resize(k);
    for (std::size_t j = 0; j < k; ++j)
      rec.x[j] = parse_field(cells[3 + j], "x" + std::to_string(j + 1));
    records.push_back(std::move(rec));
  }
  return records;
}

inline PanelDataset read_panel_csv(std::istream& in) {
  return load_panel(read_panel_records_csv(in));
}

inline PanelDataset read_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    fail(ErrorCode::InvalidArgument, "cannot open input file '" + path + "'");
  return read_panel_csv(in);
}

// Values are written in shortest round-trip decimal form, so
// load_panel(read(write(panel))) reproduces the panel exactly.
inline void write_panel_csv(const PanelDataset& panel, std::ostream& out) {
  out << "unit,time,y";
  for (int j = 1; j <= panel.k; ++j) out << ",x" << j;
  out << "\n";
  for (int i = 0; i < panel.n; ++i)
    for (int t = 0; t < panel.T; ++t) {
      out << panel.unit_ids[i] << "," << panel.time_ids[t] << ","
          << detail::shortest_repr(panel.y(t, i));
      for (int j = 0; j < panel.k; ++j)
        out << "," << detail::shortest_repr(panel.x[i](t, j));
      out << "\n";
    }
}

inline std::string panel_to_csv(const PanelDataset& panel) {
  std::ostringstream out;
  write_panel_csv(panel, out);
  return out.str();
}

}  // namespace cupfm
