/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#ifndef STMRA_DENSE_HPP
#define STMRA_DENSE_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "stmra/covariance.hpp"
#include "stmra/linalg.hpp"
#include "stmra/rng.hpp"
#include "stmra/types.hpp"

namespace stmra {

/// Largest point count the dense reference implementations accept. They form
/// full n x n Grams and exist as ground truth for the tree algorithms, not
/// for production-size problems.
inline constexpr std::size_t kDenseLimit = 20000;

namespace detail {

inline void check_dense_limit(std::size_t n, std::size_t limit) {
  if (n > limit)
    throw config_error("dense oracle limited to " + std::to_string(limit) +
                       " points, got " + std::to_string(n));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Exact zero-mean GP draw at arbitrary locations: factorizes the full Gram
/// (nuggets included by the kernels) and colors a seeded standard-normal
/// vector. Deterministic given the seed.
inline std::vector<double> simulate_values(const CovarianceModel& model,
                                           const std::vector<Location>& locs,
                                           std::uint64_t seed,
                                           std::size_t dense_limit = kDenseLimit) {
  detail::check_dense_limit(locs.size(), dense_limit);
  if (locs.empty()) return {};
  const Eigen::MatrixXd K = cov_matrix(model, locs, locs);
  const auto llt = detail::jittered_llt(K, "simulation Gram");

  KeyedRng rng = KeyedRng(seed).stream(7);
  Eigen::VectorXd z(locs.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  const Eigen::VectorXd y = llt.matrixL() * z;
  return std::vector<double>(y.data(), y.data() + y.size());
}

struct SimulationSpec {
  int nx = 1;
  int ny = 1;
  int nt = 1;
  SpaceTimeExtent extent;
  CovarianceModel model;
  std::uint64_t seed = 0;
  std::size_t dense_limit = kDenseLimit;
};

/// Simulates one exact draw over a full space-time grid.
inline RasterStack simulate_gp(const SimulationSpec& spec) {
  RasterStack raster(spec.nx, spec.ny, spec.nt, spec.extent);
  detail::check_dense_limit(raster.size(), spec.dense_limit);
  std::vector<Location> locs;
  locs.reserve(raster.size());
  for (std::size_t i = 0; i < raster.size(); ++i)
    locs.push_back(raster.cell_center(i));
  const std::vector<double> values =
      simulate_values(spec.model, locs, spec.seed, spec.dense_limit);
  for (std::size_t i = 0; i < raster.size(); ++i) raster.cells[i] = values[i];
  return raster;
}

// ---------------------------------------------------------------------------
// Exact likelihood and kriging
// ---------------------------------------------------------------------------

/// Dense Gaussian log-likelihood of the non-missing observations.
inline double exact_loglik(const CovarianceModel& model,
                           const PointDataset& data,
                           std::size_t dense_limit = kDenseLimit) {
  const PointDataset obs = data.non_missing();
  if (obs.empty()) throw data_error("exact_loglik requires observations");
  detail::check_dense_limit(obs.size(), dense_limit);

  const auto n = static_cast<Eigen::Index>(obs.size());
  const Eigen::MatrixXd K = cov_matrix(model, obs.locations(), obs.locations());
  const auto llt = detail::jittered_llt(K, "observation Gram");

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = *obs.value(i);

  const Eigen::VectorXd e = llt.matrixL().solve(y);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + logdet +
                 e.squaredNorm());
}

/// Dense conditional (kriging) mean and variance at the target locations.
/// The predictive variance includes the kernel's nugget, i.e. it targets new
/// noisy observations at the location.
inline PredictionField exact_krige(const CovarianceModel& model,
                                   const PointDataset& data,
                                   const std::vector<Location>& targets,
                                   std::size_t dense_limit = kDenseLimit) {
  const PointDataset obs = data.non_missing();
  if (obs.empty()) throw data_error("exact_krige requires observations");
  detail::check_dense_limit(obs.size(), dense_limit);

  const auto n = static_cast<Eigen::Index>(obs.size());
  const Eigen::MatrixXd K = cov_matrix(model, obs.locations(), obs.locations());
  const auto llt = detail::jittered_llt(K, "observation Gram");

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = *obs.value(i);
  const Eigen::VectorXd alpha = llt.solve(y);

  const Eigen::MatrixXd Kop = cov_matrix(model, obs.locations(), targets);
  const Eigen::MatrixXd W = llt.matrixL().solve(Kop);

  PredictionField out;
  out.locations = targets;
  out.mean.resize(targets.size());
  out.variance.resize(targets.size());
  for (std::size_t p = 0; p < targets.size(); ++p) {
    const auto j = static_cast<Eigen::Index>(p);
    out.mean[p] = Kop.col(j).dot(alpha);
    const double prior = model(targets[p], targets[p]);
    out.variance[p] = std::max(0.0, prior - W.col(j).squaredNorm());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

/// Prediction scores against the ground truth; `seconds` is the wall time of
/// the scored prediction run (0 when timing is not of interest).
inline ScoreReport score(const PredictionField& pred,
                         const std::vector<double>& truth,
                         double seconds = 0.0) {
  if (pred.size() != truth.size() || pred.mean.size() != truth.size() ||
      pred.variance.size() != truth.size())
    throw data_error("score requires aligned prediction and truth lengths");
  if (truth.empty()) throw data_error("score requires at least one value");

  const auto n = static_cast<double>(truth.size());
  double se = 0.0, ae = 0.0, covered = 0.0, mean_truth = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = truth[i] - pred.mean[i];
    se += e * e;
    ae += std::abs(e);
    if (std::abs(e) <= 2.0 * std::sqrt(pred.variance[i])) covered += 1.0;
    mean_truth += truth[i];
  }
  mean_truth /= n;
  double ss_tot = 0.0;
  for (double t : truth) ss_tot += (t - mean_truth) * (t - mean_truth);

  ScoreReport r;
  r.rmse = std::sqrt(se / n);
  r.mae = ae / n;
  r.cov2sd = covered / n;
  r.r2 = ss_tot > 0.0 ? 1.0 - se / ss_tot : (se == 0.0 ? 1.0 : 0.0);
  r.seconds = seconds;
  r.r2_per_second = seconds > 0.0 ? r.r2 / seconds : 0.0;
  return r;
}

}  // namespace stmra

#endif  // STMRA_DENSE_HPP
