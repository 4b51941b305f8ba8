/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#ifndef STMRA_TRANSFORMS_HPP
#define STMRA_TRANSFORMS_HPP

#include <Eigen/Dense>
#include <cmath>

#include "stmra/types.hpp"

namespace stmra {

// ---------------------------------------------------------------------------
// Box-Cox
// ---------------------------------------------------------------------------

/// Two-parameter Box-Cox: ((v + shift)^power - 1) / power. Requires power != 0
/// and v + shift > 0 for every transformed value.
inline double box_cox(double v, double power, double shift) {
  if (power == 0.0) throw parameter_error("box_cox power must be nonzero");
  const double base = v + shift;
  if (base <= 0.0)
    throw data_error("box_cox requires value + shift > 0");
  return (std::pow(base, power) - 1.0) / power;
}

inline double inverse_box_cox(double w, double power, double shift) {
  if (power == 0.0) throw parameter_error("box_cox power must be nonzero");
  const double base = w * power + 1.0;
  if (base <= 0.0)
    throw data_error("inverse_box_cox argument outside transform range");
  return std::pow(base, 1.0 / power) - shift;
}

/// Applies box_cox to every non-missing value.
inline PointDataset box_cox(const PointDataset& data, double power,
                            double shift) {
  std::vector<MaybeValue> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.value(i)) out[i] = box_cox(*data.value(i), power, shift);
  return data.with_values(std::move(out));
}

inline PointDataset inverse_box_cox(const PointDataset& data, double power,
                                    double shift) {
  std::vector<MaybeValue> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.value(i)) out[i] = inverse_box_cox(*data.value(i), power, shift);
  return data.with_values(std::move(out));
}

// ---------------------------------------------------------------------------
// Centering
// ---------------------------------------------------------------------------

/// Mean of the non-missing values; throws if there are none.
inline double mean_value(const PointDataset& data) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.value(i)) {
      sum += *data.value(i);
      ++n;
    }
  }
  if (n == 0) throw data_error("cannot center: no non-missing values");
  return sum / static_cast<double>(n);
}

/// Subtracts `offset` from every non-missing value.
inline PointDataset shift_values(const PointDataset& data, double offset) {
  std::vector<MaybeValue> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.value(i)) out[i] = *data.value(i) - offset;
  return data.with_values(std::move(out));
}

// ---------------------------------------------------------------------------
// Latitude trend
// ---------------------------------------------------------------------------

/// Least-squares fit of value ~ 1 + y + y^2 over the non-missing rows.
/// Throws data_error when the design is rank deficient (fewer than three
/// distinct latitudes among the fitted rows).
inline TrendModel fit_quadratic_latitude(const PointDataset& data) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.value(i)) rows.push_back(i);
  if (rows.size() < 3)
    throw data_error("latitude trend needs at least three observed values");

  Eigen::MatrixXd X(rows.size(), 3);
  Eigen::VectorXd y(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double lat = data.location(rows[r]).y;
    X(r, 0) = 1.0;
    X(r, 1) = lat;
    X(r, 2) = lat * lat;
    y(r) = *data.value(rows[r]);
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < 3)
    throw data_error("latitude trend design is rank deficient");
  const Eigen::Vector3d beta = qr.solve(y);

  TrendModel trend;
  trend.coefficients = {beta(0), beta(1), beta(2)};
  return trend;
}

/// Subtracts trend(y) from every non-missing value.
inline PointDataset detrend(const PointDataset& data, const TrendModel& trend) {
  std::vector<MaybeValue> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.value(i))
      out[i] = *data.value(i) - trend.evaluate(data.location(i).y);
  return data.with_values(std::move(out));
}

/// Adds trend(y) back to every non-missing value.
inline PointDataset retrend(const PointDataset& data, const TrendModel& trend) {
  std::vector<MaybeValue> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.value(i))
      out[i] = *data.value(i) + trend.evaluate(data.location(i).y);
  return data.with_values(std::move(out));
}

}  // namespace stmra

#endif  // STMRA_TRANSFORMS_HPP
