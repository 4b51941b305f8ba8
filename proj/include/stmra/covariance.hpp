/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#ifndef STMRA_COVARIANCE_HPP
#define STMRA_COVARIANCE_HPP

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "stmra/types.hpp"

namespace stmra {

// ---------------------------------------------------------------------------
// Distances
// ---------------------------------------------------------------------------

inline constexpr double kEarthRadiusKm = 6371.0;

namespace detail {

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

/// Haversine term: sin^2(dphi/2) + cos(phi1) cos(phi2) sin^2(dlambda/2).
inline double haversine_term(const Location& p1, const Location& p2) {
  const double phi1 = deg2rad(p1.y);
  const double phi2 = deg2rad(p2.y);
  const double dphi = 0.5 * (phi2 - phi1);
  const double dlam = 0.5 * deg2rad(p2.x - p1.x);
  const double s1 = std::sin(dphi);
  const double s2 = std::sin(dlam);
  return s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
}

}  // namespace detail

/// Great-circle distance in km between (longitude, latitude) pairs in
/// degrees; time coordinates are ignored.
inline double great_circle(const Location& p1, const Location& p2) {
  const double a = detail::haversine_term(p1, p2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

/// Straight-line distance in km through the sphere between two
/// (longitude, latitude) pairs in degrees.
inline double chordal(const Location& p1, const Location& p2) {
  const double a = detail::haversine_term(p1, p2);
  return 2.0 * kEarthRadiusKm * std::sqrt(std::min(1.0, a));
}

/// Planar spatial distance over (x, y).
inline double euclidean(const Location& p1, const Location& p2) {
  const double dx = p1.x - p2.x;
  const double dy = p1.y - p2.y;
  return std::sqrt(dx * dx + dy * dy);
}

// ---------------------------------------------------------------------------
// Parameter vectors
// ---------------------------------------------------------------------------

/// Positive parameter vector with box bounds, in the fixed per-family order.
struct ThetaVector {
  std::vector<double> values;
  std::vector<double> lower;
  std::vector<double> upper;

  ThetaVector() = default;

  explicit ThetaVector(std::vector<double> v) : values(std::move(v)) {
    lower.assign(values.size(), 1e-10);
    upper.assign(values.size(), 1e10);
  }

  ThetaVector(std::vector<double> v, std::vector<double> lo,
              std::vector<double> up)
      : values(std::move(v)), lower(std::move(lo)), upper(std::move(up)) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }

  void validate() const {
    if (lower.size() != values.size() || upper.size() != values.size())
      throw parameter_error("theta bounds must match the parameter count");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i]) || values[i] <= 0.0)
        throw parameter_error("theta[" + std::to_string(i) +
                              "] must be positive and finite");
      if (!(lower[i] > 0.0) || !(lower[i] <= upper[i]))
        throw parameter_error("theta bounds must satisfy 0 < lower <= upper");
      if (values[i] < lower[i] || values[i] > upper[i])
        throw parameter_error("theta[" + std::to_string(i) +
                              "] violates its bounds");
    }
  }
};

// ---------------------------------------------------------------------------
// Radial basis process (latitude-dependent model parameters)
// ---------------------------------------------------------------------------

/// Fixed Gaussian radial basis comb over (pseudo) latitudes.
struct RadialBasisSpec {
  static constexpr std::array<double, 9> centers{-110.0, -82.5, -55.0, -27.5,
                                                 0.0,    27.5,  55.0,  82.5,
                                                 110.0};
  static constexpr double scale = 20.0;
  std::array<double, 9> weights{};
};

/// Evaluates the radial basis expansion at one latitude.
inline double rb_process(double latitude, const RadialBasisSpec& spec) {
  double sum = 0.0;
  for (int i = 0; i < 9; ++i) {
    const double z = (latitude - RadialBasisSpec::centers[i]) /
                     RadialBasisSpec::scale;
    sum += spec.weights[i] * std::exp(-z * z);
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Kernel families
// ---------------------------------------------------------------------------

enum class Family {
  metric_exponential,
  separable_exp,         // M1
  nonseparable_sphere,   // M2
  nonstationary_kernelconv,  // M3
};

enum class SpatialMetric { euclidean, great_circle, chordal };

inline int parameter_count(Family family) {
  switch (family) {
    case Family::metric_exponential: return 4;
    case Family::separable_exp: return 5;
    case Family::nonseparable_sphere: return 4;
    case Family::nonstationary_kernelconv: return 31;
  }
  return 0;
}

inline std::string family_name(Family family) {
  switch (family) {
    case Family::metric_exponential: return "metric_exponential";
    case Family::separable_exp: return "separable_exp";
    case Family::nonseparable_sphere: return "nonseparable_sphere";
    case Family::nonstationary_kernelconv: return "nonstationary_kernelconv";
  }
  return "unknown";
}

inline Family family_from_name(const std::string& name) {
  if (name == "metric_exponential" || name == "metric")
    return Family::metric_exponential;
  if (name == "separable_exp" || name == "m1") return Family::separable_exp;
  if (name == "nonseparable_sphere" || name == "m2")
    return Family::nonseparable_sphere;
  if (name == "nonstationary_kernelconv" || name == "m3")
    return Family::nonstationary_kernelconv;
  throw config_error("unknown covariance family: " + name);
}

inline std::string metric_name(SpatialMetric metric) {
  switch (metric) {
    case SpatialMetric::euclidean: return "euclidean";
    case SpatialMetric::great_circle: return "great_circle";
    case SpatialMetric::chordal: return "chordal";
  }
  return "unknown";
}

inline SpatialMetric metric_from_name(const std::string& name) {
  if (name == "euclidean") return SpatialMetric::euclidean;
  if (name == "great_circle") return SpatialMetric::great_circle;
  if (name == "chordal") return SpatialMetric::chordal;
  throw config_error("unknown spatial metric: " + name);
}

/// Exponential covariance in the anisotropic space-time metric
/// d = ||(dx, dy, s*dt)||: sigma2 * exp(-d/rho) + tau2 * 1(d = 0).
/// theta = (rho, sigma2, tau2, s).
inline double cov_metric(const ThetaVector& theta, const Location& p1,
                         const Location& p2) {
  const double dx = p1.x - p2.x;
  const double dy = p1.y - p2.y;
  const double dt = theta[3] * (p1.t - p2.t);
  const double d = std::sqrt(dx * dx + dy * dy + dt * dt);
  double c = theta[1] * std::exp(-d / theta[0]);
  if (d == 0.0) c += theta[2];
  return c;
}

/// Separable exponential product (M1) on precomputed lags.
/// theta = (sill, spatial range, temporal range, spatial nugget weight,
/// temporal nugget weight); the nugget weights reassign a share of each
/// factor to zero lag.
inline double cov_m1(const ThetaVector& theta, double ds, double dt) {
  const double covs =
      (1.0 - theta[3] + theta[3] * (ds == 0.0)) * std::exp(-ds / theta[1]);
  const double covt =
      (1.0 - theta[4] + theta[4] * (dt == 0.0)) * std::exp(-dt / theta[2]);
  return theta[0] * covs * covt;
}

inline double cov_m1(const ThetaVector& theta, const Location& p1,
                     const Location& p2) {
  return cov_m1(theta, euclidean(p1, p2), std::abs(p1.t - p2.t));
}

/// Stationary nonseparable spherical-distance model (M2).
/// theta = (sill, spatial scale, temporal scale, nugget); ds in great-circle
/// km, dt in time units.
inline double cov_m2(const ThetaVector& theta, double ds, double dt) {
  const double u = 1.0 + ds / theta[1];
  const double sill =
      theta[0] + theta[3] * (ds == 0.0 && dt == 0.0 ? 1.0 : 0.0);
  return sill / u * std::exp(-dt / (theta[2] * std::pow(u, 0.25)));
}

inline double cov_m2(const ThetaVector& theta, const Location& p1,
                     const Location& p2) {
  return cov_m2(theta, great_circle(p1, p2), std::abs(p1.t - p2.t));
}

namespace detail {

/// Latitude-dependent kernel state of one point under M3.
struct M3Point {
  double sigma;  // standard deviation process
  double sxx;    // east-west kernel axis
  double syy;    // south-north kernel axis
};

inline M3Point m3_point(const ThetaVector& theta, double latitude) {
  RadialBasisSpec sig, sxx, syy;
  for (int i = 0; i < 9; ++i) {
    sig.weights[i] = theta[4 + i];
    sxx.weights[i] = theta[13 + i];
    syy.weights[i] = theta[22 + i];
  }
  return {rb_process(latitude, sig), rb_process(latitude, sxx),
          rb_process(latitude, syy)};
}

/// Spatial kernel-convolution factor between two prepared points.
inline double m3_spatial(const M3Point& a, const M3Point& b, double dx,
                         double dy) {
  const double mxx = 0.5 * (a.sxx + b.sxx);
  const double myy = 0.5 * (a.syy + b.syy);
  const double q = dx * dx / mxx + dy * dy / myy;
  return a.sigma * b.sigma / std::sqrt(mxx * myy) * std::exp(-std::sqrt(q));
}

inline double cov_m3_prepared(const ThetaVector& theta, const M3Point& a,
                              const M3Point& b, const Location& p1,
                              const Location& p2) {
  const double dt = std::abs(p1.t - p2.t);
  const double covt =
      (1.0 - theta[1] + theta[1] * (dt == 0.0)) * std::exp(-dt / theta[2]);
  const bool same_site = p1.x == p2.x && p1.y == p2.y;
  const double spatial_weight = 1.0 - theta[3] + theta[3] * same_site;
  const double covs =
      spatial_weight * m3_spatial(a, b, p1.x - p2.x, p1.y - p2.y);
  return theta[0] * covs * covt;
}

}  // namespace detail

/// Nonstationary kernel-convolution model (M3). theta packs (sill, temporal
/// nugget weight, temporal range, spatial nugget weight, 9 sigma weights,
/// 9 east-west axis weights, 9 south-north axis weights); x is longitude and
/// y latitude in degrees, with all latitude processes radial-basis expansions.
inline double cov_m3(const ThetaVector& theta, const Location& p1,
                     const Location& p2) {
  return detail::cov_m3_prepared(theta, detail::m3_point(theta, p1.y),
                                 detail::m3_point(theta, p2.y), p1, p2);
}

// ---------------------------------------------------------------------------
// Model wrapper
// ---------------------------------------------------------------------------

/// One kernel family bound to parameters and a spatial metric.
class CovarianceModel {
 public:
  CovarianceModel() = default;

  CovarianceModel(Family family, ThetaVector theta,
                  SpatialMetric metric = SpatialMetric::euclidean)
      : family_(family), theta_(std::move(theta)), metric_(metric) {
    validate();
  }

  Family family() const { return family_; }
  const ThetaVector& theta() const { return theta_; }
  SpatialMetric metric() const { return metric_; }

  /// Same family, metric, and bounds with new parameter values.
  CovarianceModel with_values(std::vector<double> values) const {
    ThetaVector t = theta_;
    t.values = std::move(values);
    return CovarianceModel(family_, std::move(t), metric_);
  }

  void validate() const {
    theta_.validate();
    const auto count = static_cast<std::size_t>(parameter_count(family_));
    if (theta_.size() != count)
      throw parameter_error(family_name(family_) + " requires " +
                            std::to_string(count) + " parameters, got " +
                            std::to_string(theta_.size()));
    if (family_ == Family::nonseparable_sphere &&
        metric_ != SpatialMetric::great_circle)
      throw config_error("nonseparable_sphere requires the great_circle metric");

    if (family_ == Family::separable_exp) {
      for (int i : {3, 4})
        if (theta_[i] >= 1.0)
          throw parameter_error("nugget weights must lie in (0, 1)");
    }
    if (family_ == Family::nonstationary_kernelconv) {
      for (int i : {1, 3})
        if (theta_[i] >= 1.0)
          throw parameter_error("nugget weights must lie in (0, 1)");
      // Latitude processes must stay positive across the globe; checked on a
      // one-degree grid.
      for (int lat = -90; lat <= 90; ++lat) {
        const auto p = detail::m3_point(theta_, static_cast<double>(lat));
        if (!(p.sigma > 0.0) || !(p.sxx > 0.0) || !(p.syy > 0.0))
          throw parameter_error(
              "radial basis processes must be positive over [-90, 90]");
      }
    }
  }

  double spatial_distance(const Location& p1, const Location& p2) const {
    switch (metric_) {
      case SpatialMetric::euclidean: return euclidean(p1, p2);
      case SpatialMetric::great_circle: return great_circle(p1, p2);
      case SpatialMetric::chordal: return chordal(p1, p2);
    }
    return 0.0;
  }

  double operator()(const Location& p1, const Location& p2) const {
    switch (family_) {
      case Family::metric_exponential:
        return cov_metric(theta_, p1, p2);
      case Family::separable_exp:
        return cov_m1(theta_, spatial_distance(p1, p2),
                      std::abs(p1.t - p2.t));
      case Family::nonseparable_sphere:
        return cov_m2(theta_, great_circle(p1, p2), std::abs(p1.t - p2.t));
      case Family::nonstationary_kernelconv:
        return cov_m3(theta_, p1, p2);
    }
    return 0.0;
  }

 private:
  Family family_ = Family::metric_exponential;
  ThetaVector theta_;
  SpatialMetric metric_ = SpatialMetric::euclidean;
};

// ---------------------------------------------------------------------------
// Matrix assembly
// ---------------------------------------------------------------------------

/// Cross-covariance matrix between two location sets; symmetric PSD when the
/// sets coincide. M3's per-point latitude processes are evaluated once per
/// location rather than once per pair.
inline Eigen::MatrixXd cov_matrix(const CovarianceModel& model,
                                  const std::vector<Location>& A,
                                  const std::vector<Location>& B) {
  Eigen::MatrixXd out(A.size(), B.size());
  if (A.empty() || B.empty()) return out;

  if (model.family() == Family::nonstationary_kernelconv) {
    const ThetaVector& theta = model.theta();
    std::vector<detail::M3Point> pa(A.size()), pb(B.size());
    for (std::size_t i = 0; i < A.size(); ++i)
      pa[i] = detail::m3_point(theta, A[i].y);
    for (std::size_t j = 0; j < B.size(); ++j)
      pb[j] = detail::m3_point(theta, B[j].y);
    for (std::size_t i = 0; i < A.size(); ++i)
      for (std::size_t j = 0; j < B.size(); ++j)
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            detail::cov_m3_prepared(theta, pa[i], pb[j], A[i], B[j]);
    return out;
  }

  for (std::size_t i = 0; i < A.size(); ++i)
    for (std::size_t j = 0; j < B.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          model(A[i], B[j]);
  return out;
}

}  // namespace stmra

#endif  // STMRA_COVARIANCE_HPP
