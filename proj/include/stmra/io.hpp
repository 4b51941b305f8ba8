/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#ifndef STMRA_IO_HPP
#define STMRA_IO_HPP

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "stmra/types.hpp"

namespace stmra {

namespace detail {

/// Shortest decimal form that round-trips a double exactly.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view token, const std::string& name,
                           std::size_t line) {
  const std::string_view t = trim(token);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || end != t.data() + t.size() || !std::isfinite(v))
    throw format_error(name + " line " + std::to_string(line) +
                       ": expected a finite number, got '" +
                       std::string(token) + "'");
  return v;
}

inline std::vector<std::string_view> split_fields(std::string_view row) {
  std::vector<std::string_view> fields;
  std::size_t begin = 0;
  for (std::size_t i = 0; i <= row.size(); ++i) {
    if (i == row.size() || row[i] == ',') {
      fields.push_back(row.substr(begin, i - begin));
      begin = i + 1;
    }
  }
  return fields;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path + " for reading");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open " + path + " for writing");
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Point CSV: header `x,y,t,value`, one row per point, empty value = missing
// ---------------------------------------------------------------------------

/// Writes `x,y,t,value` CSV rows in dataset order; missing values become
/// empty fields. Numbers carry 17 significant digits, so finite values
/// round-trip bit-exactly.
inline void write_points(const PointDataset& data, std::ostream& out) {
  out << "x,y,t,value\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Location& p = data.location(i);
    out << detail::format_number(p.x) << ',' << detail::format_number(p.y)
        << ',' << detail::format_number(p.t) << ',';
    if (data.value(i)) out << detail::format_number(*data.value(i));
    out << '\n';
  }
}

/// Reads `x,y,t,value` CSV; `name` labels parse errors. Row order is
/// preserved.
inline PointDataset read_points(std::istream& in,
                                const std::string& name = "<points>") {
  std::string line;
  if (!std::getline(in, line))
    throw format_error(name + ": empty file, expected an x,y,t,value header");
  if (detail::trim(line) != "x,y,t,value")
    throw format_error(name + " line 1: expected header x,y,t,value, got '" +
                       line + "'");

  std::vector<Location> locs;
  std::vector<MaybeValue> vals;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = detail::trim(line);
    if (row.empty()) continue;

    const std::vector<std::string_view> fields = detail::split_fields(row);
    if (fields.size() != 4)
      throw format_error(name + " line " + std::to_string(line_no) +
                         ": expected 4 fields, got " +
                         std::to_string(fields.size()));

    Location p;
    p.x = detail::parse_number(fields[0], name, line_no);
    p.y = detail::parse_number(fields[1], name, line_no);
    p.t = detail::parse_number(fields[2], name, line_no);
    locs.push_back(p);
    const std::string_view value = detail::trim(fields[3]);
    if (value.empty())
      vals.push_back(std::nullopt);
    else
      vals.push_back(detail::parse_number(value, name, line_no));
  }
  return PointDataset(std::move(locs), std::move(vals));
}

inline void write_points_file(const PointDataset& data,
                              const std::string& path) {
  auto out = detail::open_output(path);
  write_points(data, out);
}

inline PointDataset read_points_file(const std::string& path) {
  auto in = detail::open_input(path);
  return read_points(in, path);
}

// ---------------------------------------------------------------------------
// Raster text format
// ---------------------------------------------------------------------------
//
// Line 1: `nx ny nt`; line 2: the extent as `lo.x lo.y lo.t hi.x hi.y hi.t`;
// then nx*ny*nt whitespace-separated cells in x-fastest order, `NA` for
// missing. Cells are the values at the grid's cell centers.

inline void write_raster(const RasterStack& raster, std::ostream& out) {
  out << raster.nx << ' ' << raster.ny << ' ' << raster.nt << '\n';
  out << detail::format_number(raster.extent.lo.x) << ' '
      << detail::format_number(raster.extent.lo.y) << ' '
      << detail::format_number(raster.extent.lo.t) << ' '
      << detail::format_number(raster.extent.hi.x) << ' '
      << detail::format_number(raster.extent.hi.y) << ' '
      << detail::format_number(raster.extent.hi.t) << '\n';
  for (std::size_t i = 0; i < raster.cells.size(); ++i) {
    if (raster.cells[i])
      out << detail::format_number(*raster.cells[i]);
    else
      out << "NA";
    // one line per x-row keeps the file diffable
    out << ((i + 1) % static_cast<std::size_t>(raster.nx) == 0 ? '\n' : ' ');
  }
}

inline RasterStack read_raster(std::istream& in,
                               const std::string& name = "<raster>") {
  int nx = 0, ny = 0, nt = 0;
  if (!(in >> nx >> ny >> nt))
    throw format_error(name + ": expected a header of nx ny nt");
  if (nx <= 0 || ny <= 0 || nt <= 0)
    throw format_error(name + ": raster dimensions must be positive");

  SpaceTimeExtent extent;
  std::string token;
  for (double* c : {&extent.lo.x, &extent.lo.y, &extent.lo.t, &extent.hi.x,
                    &extent.hi.y, &extent.hi.t}) {
    if (!(in >> token))
      throw format_error(name + ": expected 6 extent numbers");
    *c = detail::parse_number(token, name, 2);
  }

  RasterStack raster(nx, ny, nt, extent);
  for (std::size_t i = 0; i < raster.cells.size(); ++i) {
    if (!(in >> token))
      throw format_error(name + ": expected " +
                         std::to_string(raster.cells.size()) +
                         " cells, got " + std::to_string(i));
    if (token == "NA")
      raster.cells[i] = std::nullopt;
    else
      raster.cells[i] = detail::parse_number(token, name, 3);
  }
  if (in >> token)
    throw format_error(name + ": trailing data after " +
                       std::to_string(raster.cells.size()) + " cells");
  return raster;
}

inline void write_raster_file(const RasterStack& raster,
                              const std::string& path) {
  auto out = detail::open_output(path);
  write_raster(raster, out);
}

inline RasterStack read_raster_file(const std::string& path) {
  auto in = detail::open_input(path);
  return read_raster(in, path);
}

// ---------------------------------------------------------------------------
// Prediction CSV
// ---------------------------------------------------------------------------

/// Writes `x,y,t,mean,variance` rows in field order.
inline void write_predictions(const PredictionField& field,
                              std::ostream& out) {
  out << "x,y,t,mean,variance\n";
  for (std::size_t i = 0; i < field.size(); ++i) {
    const Location& p = field.locations[i];
    out << detail::format_number(p.x) << ',' << detail::format_number(p.y)
        << ',' << detail::format_number(p.t) << ','
        << detail::format_number(field.mean[i]) << ','
        << detail::format_number(field.variance[i]) << '\n';
  }
}

inline void write_predictions_file(const PredictionField& field,
                                   const std::string& path) {
  auto out = detail::open_output(path);
  write_predictions(field, out);
}

/// Reads `x,y,t,mean,variance` CSV as written by write_predictions.
inline PredictionField read_predictions(
    std::istream& in, const std::string& name = "<predictions>") {
  std::string line;
  if (!std::getline(in, line))
    throw format_error(name +
                       ": empty file, expected an x,y,t,mean,variance header");
  if (detail::trim(line) != "x,y,t,mean,variance")
    throw format_error(name +
                       " line 1: expected header x,y,t,mean,variance, got '" +
                       line + "'");
  PredictionField out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = detail::trim(line);
    if (row.empty()) continue;
    const std::vector<std::string_view> fields = detail::split_fields(row);
    if (fields.size() != 5)
      throw format_error(name + " line " + std::to_string(line_no) +
                         ": expected 5 fields, got " +
                         std::to_string(fields.size()));
    Location p;
    p.x = detail::parse_number(fields[0], name, line_no);
    p.y = detail::parse_number(fields[1], name, line_no);
    p.t = detail::parse_number(fields[2], name, line_no);
    out.locations.push_back(p);
    out.mean.push_back(detail::parse_number(fields[3], name, line_no));
    out.variance.push_back(detail::parse_number(fields[4], name, line_no));
  }
  return out;
}

inline PredictionField read_predictions_file(const std::string& path) {
  auto in = detail::open_input(path);
  return read_predictions(in, path);
}

// ---------------------------------------------------------------------------
// Key-value run configuration
// ---------------------------------------------------------------------------

/// Parses `key = value` lines; '#' starts a comment, blank lines are skipped,
/// and a repeated key overrides its earlier value. Values keep any '='
/// characters after the first.
inline std::map<std::string, std::string> read_config(
    std::istream& in, const std::string& name = "<config>") {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = detail::trim(line);
    if (const auto hash = s.find('#'); hash != std::string_view::npos)
      s = detail::trim(s.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw format_error(name + " line " + std::to_string(line_no) +
                         ": expected key = value, got '" + std::string(s) +
                         "'");
    const std::string key(detail::trim(s.substr(0, eq)));
    const std::string value(detail::trim(s.substr(eq + 1)));
    if (key.empty())
      throw format_error(name + " line " + std::to_string(line_no) +
                         ": empty key");
    out[key] = value;
  }
  return out;
}

inline std::map<std::string, std::string> read_config_file(
    const std::string& path) {
  auto in = detail::open_input(path);
  return read_config(in, path);
}

}  // namespace stmra

#endif  // STMRA_IO_HPP
