/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#ifndef STMRA_TYPES_HPP
#define STMRA_TYPES_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace stmra {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for all stmra errors.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid data: out-of-domain observations, duplicate locations, empty input.
class data_error : public error {
 public:
  using error::error;
};

/// Malformed file contents (CSV/raster parsing).
class format_error : public error {
 public:
  using error::error;
};

/// Inconsistent configuration (degenerate splits, unrepresentable knot grids).
class config_error : public error {
 public:
  using error::error;
};

/// Covariance parameters outside their validity region.
class parameter_error : public error {
 public:
  using error::error;
};

/// Numerical failure (factorization breakdown), labelled with the region path
/// where applicable.
class numeric_error : public error {
 public:
  explicit numeric_error(const std::string& what, std::string region_path = "")
      : error(region_path.empty() ? what : what + " [region " + region_path + "]"),
        region_path_(std::move(region_path)) {}

  const std::string& region_path() const { return region_path_; }

 private:
  std::string region_path_;
};

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// A point in space-time: two spatial coordinates and one temporal coordinate.
/// For spherical models x is degrees longitude in [-180, 180] and y is degrees
/// latitude in [-90, 90]; otherwise the units are abstract lengths.
struct Location {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;

  double coord(int axis) const { return axis == 0 ? x : (axis == 1 ? y : t); }
  double& coord(int axis) { return axis == 0 ? x : (axis == 1 ? y : t); }

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(t);
  }

  friend bool operator==(const Location& a, const Location& b) {
    return a.x == b.x && a.y == b.y && a.t == b.t;
  }
};

/// Axis-aligned space-time box. Degenerate (zero-width) axes are permitted.
struct SpaceTimeExtent {
  Location lo;
  Location hi;

  double size(int axis) const { return hi.coord(axis) - lo.coord(axis); }
  double volume() const { return size(0) * size(1) * size(2); }

  /// Closed-box membership (lo <= c <= hi on every axis).
  bool contains_closed(const Location& p) const {
    for (int a = 0; a < 3; ++a) {
      if (p.coord(a) < lo.coord(a) || p.coord(a) > hi.coord(a)) return false;
    }
    return true;
  }

  void validate() const {
    if (!lo.finite() || !hi.finite())
      throw data_error("extent coordinates must be finite");
    for (int a = 0; a < 3; ++a) {
      if (lo.coord(a) > hi.coord(a))
        throw data_error("extent has lo > hi on axis " + std::to_string(a));
    }
  }
};

namespace detail {

struct LocationHash {
  std::size_t operator()(const Location& p) const {
    auto mix = [](std::uint64_t h, double v) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(bits));
      h ^= bits + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      return h;
    };
    std::uint64_t h = 0x2545f4914f6cdd1dULL;
    h = mix(h, p.x);
    h = mix(h, p.y);
    h = mix(h, p.t);
    return static_cast<std::size_t>(h);
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Value carried by a dataset entry; disengaged = missing measurement.
using MaybeValue = std::optional<double>;

/// A set of space-time locations with (possibly missing) measured values.
/// Prediction targets are represented as a PointDataset with all-missing
/// values. Locations must be pairwise distinct.
class PointDataset {
 public:
  PointDataset() = default;

  PointDataset(std::vector<Location> locations, std::vector<MaybeValue> values)
      : locations_(std::move(locations)), values_(std::move(values)) {
    validate();
  }

  /// All-missing dataset (prediction targets).
  static PointDataset targets(std::vector<Location> locations) {
    std::vector<MaybeValue> vals(locations.size(), std::nullopt);
    return PointDataset(std::move(locations), std::move(vals));
  }

  std::size_t size() const { return locations_.size(); }
  bool empty() const { return locations_.empty(); }

  const std::vector<Location>& locations() const { return locations_; }
  const std::vector<MaybeValue>& values() const { return values_; }

  const Location& location(std::size_t i) const { return locations_[i]; }
  const MaybeValue& value(std::size_t i) const { return values_[i]; }

  std::size_t count_non_missing() const {
    std::size_t n = 0;
    for (const auto& v : values_)
      if (v) ++n;
    return n;
  }

  /// Sub-dataset of the rows with a value present.
  PointDataset non_missing() const {
    std::vector<Location> locs;
    std::vector<MaybeValue> vals;
    locs.reserve(size());
    vals.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) {
      if (values_[i]) {
        locs.push_back(locations_[i]);
        vals.push_back(values_[i]);
      }
    }
    PointDataset out;
    out.locations_ = std::move(locs);
    out.values_ = std::move(vals);
    return out;
  }

  /// Replaces the value column; same length required.
  PointDataset with_values(std::vector<MaybeValue> values) const {
    if (values.size() != locations_.size())
      throw data_error("value column length mismatch");
    PointDataset out;
    out.locations_ = locations_;
    out.values_ = std::move(values);
    return out;
  }

 private:
  void validate() const {
    if (locations_.size() != values_.size())
      throw data_error("locations and values must have the same length");
    std::unordered_set<Location, detail::LocationHash> seen;
    seen.reserve(locations_.size());
    for (const auto& p : locations_) {
      if (!p.finite()) throw data_error("non-finite location coordinate");
      if (!seen.insert(p).second)
        throw data_error("duplicate observation location");
    }
    for (const auto& v : values_) {
      if (v && !std::isfinite(*v))
        throw data_error("non-missing values must be finite");
    }
  }

  std::vector<Location> locations_;
  std::vector<MaybeValue> values_;
};

/// Dense gridded data: nx*ny*nt cells over an extent, x-fastest ordering.
/// Cell centers define the Locations of the grid.
struct RasterStack {
  int nx = 0;
  int ny = 0;
  int nt = 0;
  SpaceTimeExtent extent;
  std::vector<MaybeValue> cells;  // size nx*ny*nt, index = ix + nx*(iy + ny*it)

  RasterStack() = default;

  RasterStack(int nx_, int ny_, int nt_, SpaceTimeExtent extent_)
      : nx(nx_), ny(ny_), nt(nt_), extent(extent_) {
    if (nx <= 0 || ny <= 0 || nt <= 0)
      throw config_error("raster dimensions must be positive");
    extent.validate();
    cells.assign(static_cast<std::size_t>(nx) * ny * nt, std::nullopt);
  }

  std::size_t size() const { return cells.size(); }

  std::size_t index(int ix, int iy, int it) const {
    return static_cast<std::size_t>(ix) +
           static_cast<std::size_t>(nx) *
               (static_cast<std::size_t>(iy) +
                static_cast<std::size_t>(ny) * static_cast<std::size_t>(it));
  }

  double cell_width(int axis) const {
    const int n = axis == 0 ? nx : (axis == 1 ? ny : nt);
    return extent.size(axis) / n;
  }

  Location cell_center(int ix, int iy, int it) const {
    return Location{extent.lo.x + (ix + 0.5) * cell_width(0),
                    extent.lo.y + (iy + 0.5) * cell_width(1),
                    extent.lo.t + (it + 0.5) * cell_width(2)};
  }

  Location cell_center(std::size_t flat) const {
    const int ix = static_cast<int>(flat % nx);
    const int iy = static_cast<int>((flat / nx) % ny);
    const int it = static_cast<int>(flat / (static_cast<std::size_t>(nx) * ny));
    return cell_center(ix, iy, it);
  }

  /// Flat cell index of the cell whose center is `p`; throws if `p` is not a
  /// cell center of this grid.
  std::size_t cell_of(const Location& p) const {
    auto axis_index = [&](double c, int axis, int n) {
      const double w = cell_width(axis);
      const double f = (c - extent.lo.coord(axis)) / w - 0.5;
      const long i = std::lround(f);
      if (i < 0 || i >= n || std::abs(f - static_cast<double>(i)) > 1e-9)
        throw data_error("location is not a cell center of this raster");
      return static_cast<int>(i);
    };
    return index(axis_index(p.x, 0, nx), axis_index(p.y, 1, ny),
                 axis_index(p.t, 2, nt));
  }

  /// Flattens to points; optionally drops missing cells.
  PointDataset to_points(bool drop_missing = true) const {
    std::vector<Location> locs;
    std::vector<MaybeValue> vals;
    locs.reserve(cells.size());
    vals.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (drop_missing && !cells[i]) continue;
      locs.push_back(cell_center(i));
      vals.push_back(cells[i]);
    }
    return PointDataset(std::move(locs), std::move(vals));
  }

  /// Writes point values back into their grid cells (inverse of to_points).
  void fill_from(const PointDataset& points) {
    for (std::size_t i = 0; i < points.size(); ++i)
      cells[cell_of(points.location(i))] = points.value(i);
  }
};

/// Quadratic-in-latitude trend: value ~ c0 + c1*y + c2*y^2.
struct TrendModel {
  std::array<double, 3> coefficients{0.0, 0.0, 0.0};

  double evaluate(double latitude) const {
    return coefficients[0] + coefficients[1] * latitude +
           coefficients[2] * latitude * latitude;
  }
};

// ---------------------------------------------------------------------------
// Prediction output
// ---------------------------------------------------------------------------

/// Per-location posterior mean and variance.
struct PredictionField {
  std::vector<Location> locations;
  std::vector<double> mean;
  std::vector<double> variance;

  std::size_t size() const { return locations.size(); }
};

/// Prediction diagnostics: errors, 2-sigma coverage, fit, and timing.
struct ScoreReport {
  double rmse = 0.0;
  double mae = 0.0;
  double cov2sd = 0.0;   // fraction of truths inside mean +/- 2*sd
  double r2 = 0.0;
  double seconds = 0.0;  // wall time of the scored prediction run
  double r2_per_second = 0.0;
};

}  // namespace stmra

#endif  // STMRA_TYPES_HPP
