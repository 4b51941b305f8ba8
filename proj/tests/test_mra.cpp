/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <numbers>
#include <numeric>

#include "stmra/dense.hpp"
#include "stmra/mra.hpp"

using namespace stmra;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ThetaVector wide(std::vector<double> v) {
  std::vector<double> lo(v.size(), 1e-15), up(v.size(), 1e15);
  return ThetaVector(std::move(v), std::move(lo), std::move(up));
}

CovarianceModel metric_model(double rho, double sill, double nugget,
                             double aniso) {
  return CovarianceModel(Family::metric_exponential,
                         wide({rho, sill, nugget, aniso}));
}

CovarianceModel m2_model() {
  return CovarianceModel(Family::nonseparable_sphere,
                         wide({1.2, 2000.0, 4.0, 0.15}),
                         SpatialMetric::great_circle);
}

CovarianceModel m3_model() {
  std::vector<double> v{1.3, 0.2, 5.0, 0.15};
  for (int i = 0; i < 9; ++i) v.push_back(0.6 + 0.05 * i);
  for (int i = 0; i < 18; ++i) v.push_back(120.0 + 5.0 * i);
  return CovarianceModel(Family::nonstationary_kernelconv, wide(std::move(v)));
}

std::vector<Location> random_locations(std::size_t n, std::uint64_t seed,
                                       const SpaceTimeExtent& box) {
  KeyedRng rng(seed);
  std::vector<Location> locs;
  locs.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    locs.push_back({rng.uniform(box.lo.x, box.hi.x),
                    rng.uniform(box.lo.y, box.hi.y),
                    rng.uniform(box.lo.t, box.hi.t)});
  return locs;
}

const SpaceTimeExtent kCube{{0, 0, 0}, {1, 1, 1}};

PointDataset observed(const std::vector<Location>& locs,
                      const std::vector<double>& values) {
  std::vector<MaybeValue> v(values.begin(), values.end());
  return PointDataset(locs, std::move(v));
}

/// Log-density of y under an explicit covariance matrix.
double dense_loglik(const Eigen::MatrixXd& K, const Eigen::VectorXd& y) {
  const Eigen::LLT<Eigen::MatrixXd> llt(K);
  REQUIRE(llt.info() == Eigen::Success);
  const double logdet =
      2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double quad = y.dot(llt.solve(y));
  return -0.5 * (static_cast<double>(y.size()) *
                     std::log(2.0 * std::numbers::pi) +
                 logdet + quad);
}

struct DenseKrige {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Conditioning oracle with all blocks taken from one explicit covariance
/// matrix over observations followed by targets.
DenseKrige dense_condition(const Eigen::MatrixXd& K, const Eigen::VectorXd& y) {
  const Eigen::Index n = y.size();
  const Eigen::Index p = K.rows() - n;
  const Eigen::LLT<Eigen::MatrixXd> llt(K.topLeftCorner(n, n));
  REQUIRE(llt.info() == Eigen::Success);
  const Eigen::MatrixXd cop = K.topRightCorner(n, p);
  const Eigen::MatrixXd solved = llt.solve(cop);
  DenseKrige out;
  out.mean = cop.transpose() * llt.solve(y);
  out.variance = K.bottomRightCorner(p, p).diagonal() -
                 (cop.array() * solved.array()).colwise().sum().transpose().matrix();
  return out;
}

PartitionConfig config(int levels, int knots, std::uint64_t seed) {
  PartitionConfig cfg;
  cfg.levels = levels;
  cfg.knots_per_region = knots;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// Remainder covariance
// ---------------------------------------------------------------------------

TEST_CASE("remainder covariance matches one-shot dense conditioning",
          "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.1, 0.5);
  const auto q0 = random_locations(12, 11, kCube);
  const auto q1 = random_locations(9, 12, kCube);
  const auto a = random_locations(6, 13, kCube);
  const auto b = random_locations(7, 14, kCube);

  const Eigen::MatrixXd v = remainder_cov(cov, {q0, q1}, a, b);

  std::vector<Location> stacked = q0;
  stacked.insert(stacked.end(), q1.begin(), q1.end());
  const Eigen::MatrixXd kss = cov_matrix(cov, stacked, stacked);
  const Eigen::MatrixXd kas = cov_matrix(cov, a, stacked);
  const Eigen::MatrixXd kbs = cov_matrix(cov, b, stacked);
  const Eigen::LLT<Eigen::MatrixXd> llt(kss);
  REQUIRE(llt.info() == Eigen::Success);
  const Eigen::MatrixXd expected =
      cov_matrix(cov, a, b) - kas * llt.solve(kbs.transpose());

  CHECK((v - expected).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("remainder covariance with no anchors is the plain covariance",
          "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.1, 0.5);
  const auto a = random_locations(5, 21, kCube);
  const auto b = random_locations(4, 22, kCube);
  const Eigen::MatrixXd v = remainder_cov(cov, {}, a, b);
  const Eigen::MatrixXd expected = cov_matrix(cov, a, b);
  CHECK(v == expected);
}

TEST_CASE("remainder vanishes at the conditioning knots", "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.1, 0.5);
  const auto q0 = random_locations(12, 31, kCube);
  const auto q1 = random_locations(9, 32, kCube);
  const std::vector<Location> a(q1.begin(), q1.begin() + 4);
  const auto b = random_locations(6, 33, kCube);
  const Eigen::MatrixXd v = remainder_cov(cov, {q0, q1}, a, b);
  CHECK(v.cwiseAbs().maxCoeff() < 1e-8);
}

// ---------------------------------------------------------------------------
// Dense multi-resolution covariance
// ---------------------------------------------------------------------------

TEST_CASE("dense multi-resolution covariance is exact at depth zero",
          "[mra]") {
  const CovarianceModel cov = metric_model(0.25, 0.8, 0.05, 1.0);
  const auto locs = random_locations(50, 41, kCube);
  const auto y = simulate_values(cov, locs, 5);
  const MraModel model(partition(kCube, observed(locs, y), config(0, 8, 3)),
                       cov);

  const Eigen::MatrixXd cm = mra_cov_dense(model, locs);
  const Eigen::MatrixXd exact = cov_matrix(cov, locs, locs);
  CHECK((cm - exact).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dense multi-resolution covariance keeps only shared levels",
          "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.1, 0.5);
  const auto locs = random_locations(40, 51, kCube);
  const auto y = simulate_values(cov, locs, 6);
  const MraModel model(partition(kCube, observed(locs, y), config(1, 12, 3)),
                       cov);
  const auto& q0 = model.tree().region(0).knots;

  const Location s1{0.1, 0.1, 0.1};
  const Location s2{0.9, 0.9, 0.9};
  const Location s3{0.12, 0.12, 0.12};
  REQUIRE(model.tree().locate(s1, 1) != model.tree().locate(s2, 1));
  REQUIRE(model.tree().locate(s1, 1) == model.tree().locate(s3, 1));

  const Eigen::MatrixXd cm = mra_cov_dense(model, {s1, s2, s3});

  const Eigen::MatrixXd k0 = cov_matrix(cov, q0, q0);
  const Eigen::LLT<Eigen::MatrixXd> llt(k0);
  const Eigen::MatrixXd c1 = cov_matrix(cov, {s1}, q0);
  const Eigen::MatrixXd c2 = cov_matrix(cov, {s2}, q0);
  const double level0 = (c1 * llt.solve(c2.transpose()))(0, 0);

  CHECK_THAT(cm(0, 1), WithinRel(level0, 1e-8));
  CHECK(cm(0, 2) == cov(s1, s3));
  CHECK(cm(0, 0) == cov(s1, s1));
}

TEST_CASE("dense multi-resolution covariance is positive semidefinite",
          "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.05, 0.5);
  const auto locs = random_locations(60, 61, kCube);
  const auto y = simulate_values(cov, locs, 7);

  for (int levels : {1, 2}) {
    const MraModel model(
        partition(kCube, observed(locs, y), config(levels, 4, 9)), cov);
    const Eigen::MatrixXd cm = mra_cov_dense(model, locs);
    CHECK((cm - cm.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cm);
    CHECK(eig.eigenvalues().minCoeff() >=
          -1e-8 * cm.trace() / static_cast<double>(locs.size()));
  }
}

// ---------------------------------------------------------------------------
// Equivalence of the tree algorithms with the dense oracle
// ---------------------------------------------------------------------------

namespace {

void check_equivalence(const CovarianceModel& cov, const SpaceTimeExtent& box,
                       int levels, int knots, std::size_t n_obs,
                       std::size_t n_pred, std::uint64_t seed, double tol) {
  const auto obs_locs = random_locations(n_obs, seed, box);
  const auto pred_locs = random_locations(n_pred, seed + 1000, box);
  const auto y = simulate_values(cov, obs_locs, seed + 2000);

  const PartitionTree tree =
      partition(box, observed(obs_locs, y),
                PointDataset::targets(pred_locs), config(levels, knots, seed));
  const MraModel model(tree, cov);

  std::vector<Location> all = obs_locs;
  all.insert(all.end(), pred_locs.begin(), pred_locs.end());
  const Eigen::MatrixXd cm = mra_cov_dense(model, all);
  const Eigen::VectorXd yv =
      Eigen::Map<const Eigen::VectorXd>(y.data(),
                                        static_cast<Eigen::Index>(y.size()));

  const double ll_tree = mra_loglik(model, y);
  const double ll_dense = dense_loglik(
      cm.topLeftCorner(static_cast<Eigen::Index>(n_obs),
                       static_cast<Eigen::Index>(n_obs)),
      yv);
  CHECK(std::abs(ll_tree - ll_dense) <= tol * std::max(1.0, std::abs(ll_dense)));

  const PredictionField field = mra_predict(model, y);
  const DenseKrige oracle = dense_condition(cm, yv);
  REQUIRE(field.size() == n_pred);
  for (std::size_t i = 0; i < n_pred; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    CHECK(std::abs(field.mean[i] - oracle.mean[k]) <=
          tol * (1.0 + std::abs(oracle.mean[k])));
    CHECK(std::abs(field.variance[i] - oracle.variance[k]) <=
          tol * (1.0 + std::abs(oracle.variance[k])));
  }
}

}  // namespace

TEST_CASE("tree likelihood and prediction match the dense oracle", "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.1, 0.5);
  for (int levels : {1, 2})
    for (int knots : {4, 8})
      for (std::uint64_t seed : {1u, 2u})
        check_equivalence(cov, kCube, levels, knots, 120, 40, seed, 1e-6);
}

TEST_CASE("tree algorithms match the dense oracle for every family", "[mra]") {
  check_equivalence(metric_model(0.3, 1.0, 0.1, 0.5), kCube, 2, 8, 100, 30, 5,
                    1e-6);
  const CovarianceModel m1(Family::separable_exp,
                           wide({1.5, 0.4, 0.6, 0.2, 0.3}));
  check_equivalence(m1, kCube, 1, 8, 100, 30, 6, 1e-6);

  const SpaceTimeExtent sphere_box{{0, -30, 0}, {40, 30, 10}};
  check_equivalence(m2_model(), sphere_box, 1, 8, 100, 30, 7, 1e-6);

  const SpaceTimeExtent lat_box{{0, -60, 0}, {50, 60, 10}};
  check_equivalence(m3_model(), lat_box, 1, 8, 100, 30, 8, 1e-6);
}

TEST_CASE("depth zero reproduces the exact dense answers", "[mra]") {
  const CovarianceModel cov = metric_model(0.25, 0.9, 0.08, 0.7);
  const auto obs_locs = random_locations(80, 71, kCube);
  const auto pred_locs = random_locations(20, 72, kCube);
  const auto y = simulate_values(cov, obs_locs, 73);
  const PointDataset data = observed(obs_locs, y);

  const MraModel model(
      partition(kCube, data, PointDataset::targets(pred_locs),
                config(0, 16, 4)),
      cov);

  const double ll = mra_loglik(model, y);
  const double exact = exact_loglik(cov, data);
  CHECK_THAT(ll, WithinRel(exact, 1e-8));

  const PredictionField field = mra_predict(model, y);
  const PredictionField oracle = exact_krige(cov, data, pred_locs);
  REQUIRE(field.size() == oracle.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    CHECK(std::abs(field.mean[i] - oracle.mean[i]) <=
          1e-8 * (1.0 + std::abs(oracle.mean[i])));
    CHECK(std::abs(field.variance[i] - oracle.variance[i]) <=
          1e-8 * (1.0 + oracle.variance[i]));
  }
}

TEST_CASE("scalar likelihood matches the closed form", "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 0.7, 0.2, 1.0);
  const std::vector<Location> loc{{0.4, 0.5, 0.6}};
  const std::vector<double> y{1.3};
  const MraModel model(partition(kCube, observed(loc, y), config(0, 4, 1)),
                       cov);
  const double c = cov(loc[0], loc[0]);
  const double expected =
      -0.5 * std::log(2.0 * std::numbers::pi * c) - y[0] * y[0] / (2.0 * c);
  CHECK_THAT(mra_loglik(model, y), WithinRel(expected, 1e-12));
}

// ---------------------------------------------------------------------------
// Structural properties
// ---------------------------------------------------------------------------

TEST_CASE("likelihood is invariant under observation order and threads",
          "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.1, 0.5);
  const auto locs = random_locations(150, 81, kCube);
  const auto y = simulate_values(cov, locs, 82);

  const MraModel model(partition(kCube, observed(locs, y), config(2, 8, 5)),
                       cov);
  const double base = mra_loglik(model, y);

  std::vector<std::size_t> perm(locs.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  KeyedRng rng(99);
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<Location> plocs(locs.size());
  std::vector<double> py(locs.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    plocs[i] = locs[perm[i]];
    py[i] = y[perm[i]];
  }
  const MraModel shuffled(
      partition(kCube, observed(plocs, py), config(2, 8, 5)), cov);
  CHECK_THAT(mra_loglik(shuffled, py), WithinRel(base, 1e-10));

  CHECK(mra_loglik(model, y, 1) == base);
}

TEST_CASE("more knots sharpen the likelihood approximation", "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.1, 0.5);
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto locs = random_locations(300, 100 + seed, kCube);
    const auto y = simulate_values(cov, locs, 200 + seed);
    const PointDataset data = observed(locs, y);
    const double exact = exact_loglik(cov, data);

    auto error_at = [&](int knots) {
      const MraModel model(
          partition(kCube, data, config(2, knots, seed)), cov);
      return std::abs(mra_loglik(model, y) - exact);
    };
    if (error_at(32) <= error_at(4) + 1e-9) ++improved;
  }
  CHECK(improved >= 8);
}

TEST_CASE("interpolation and no-signal limits", "[mra]") {
  SECTION("tiny nugget reproduces observed values at observed sites") {
    const CovarianceModel cov = metric_model(0.4, 1.0, 1e-12, 1.0);
    const auto locs = random_locations(50, 91, kCube);
    const auto y = simulate_values(cov, locs, 92);
    const std::vector<Location> targets(locs.begin(), locs.begin() + 10);

    const MraModel model(
        partition(kCube, observed(locs, y), PointDataset::targets(targets),
                  config(1, 8, 2)),
        cov);
    const PredictionField field = mra_predict(model, y);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      CHECK_THAT(field.mean[i], WithinAbs(y[i], 1e-4));
      CHECK(field.variance[i] < 1e-4);
    }
  }

  SECTION("vanishing sill pulls predictions to the process mean") {
    const CovarianceModel cov = metric_model(0.4, 1e-12, 0.3, 1.0);
    const auto locs = random_locations(60, 93, kCube);
    const auto y = simulate_values(cov, locs, 94);
    const auto targets = random_locations(15, 95, kCube);

    const MraModel model(
        partition(kCube, observed(locs, y), PointDataset::targets(targets),
                  config(1, 8, 2)),
        cov);
    const PredictionField field = mra_predict(model, y);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      CHECK_THAT(field.mean[i], WithinAbs(0.0, 1e-5));
      CHECK_THAT(field.variance[i], WithinAbs(0.3, 1e-4));
    }
  }
}

TEST_CASE("re-observed sites price a fresh measurement", "[mra]") {
  // A target on an observed site asks for a new measurement there, so the
  // posterior variance keeps a full nugget floor instead of collapsing to 0.
  const double tau2 = 0.1;
  const CovarianceModel cov = metric_model(0.3, 1.0, tau2, 0.5);
  const auto locs = random_locations(40, 111, kCube);
  const auto y = simulate_values(cov, locs, 112);
  const Location near0{locs[0].x, locs[0].y + 2e-10, locs[0].t};
  const std::vector<Location> targets = {locs[0], near0, locs[7]};

  const MraModel model(
      partition(kCube, observed(locs, y), PointDataset::targets(targets),
                config(0, 4, 3)),
      cov);
  const PredictionField field = mra_predict(model, y);

  for (std::size_t i = 0; i < targets.size(); ++i) {
    CHECK(field.locations[i] == targets[i]);
    CHECK(field.variance[i] >= tau2 * (1.0 - 1e-6));
    CHECK(field.variance[i] <= 2.0 * tau2 + 1e-6);
  }
  // duplicate targets agree up to the nudge scale
  CHECK_THAT(field.mean[1], WithinAbs(field.mean[0], 1e-6));
  CHECK_THAT(field.variance[1], WithinAbs(field.variance[0], 1e-6));
}

TEST_CASE("prediction variance at observed sites stays below the zero-lag",
          "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.1, 0.5);
  const auto locs = random_locations(150, 101, kCube);
  const auto y = simulate_values(cov, locs, 102);
  const std::vector<Location> targets(locs.begin(), locs.begin() + 40);

  const MraModel model(
      partition(kCube, observed(locs, y), PointDataset::targets(targets),
                config(2, 8, 6)),
      cov);
  const PredictionField field = mra_predict(model, y);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    CHECK(field.variance[i] >= 0.0);
    CHECK(field.variance[i] <= cov(targets[i], targets[i]) + 1e-8);
  }
}

TEST_CASE("leaves without observations still serve predictions", "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.1, 0.5);
  const SpaceTimeExtent corner{{0, 0, 0}, {0.2, 0.2, 1}};
  const auto obs_locs = random_locations(60, 111, corner);
  const auto pred_locs = random_locations(50, 112, kCube);
  const auto y = simulate_values(cov, obs_locs, 113);

  const PartitionTree tree =
      partition(kCube, observed(obs_locs, y), PointDataset::targets(pred_locs),
                config(2, 8, 7));
  std::size_t empty_with_preds = 0;
  const auto [b, e] = tree.level_range(tree.levels());
  for (std::size_t i = b; i < e; ++i) {
    const Region& r = tree.region(i);
    if (r.obs_rows.empty() && !r.pred_rows.empty()) ++empty_with_preds;
  }
  REQUIRE(empty_with_preds > 0);

  const MraModel model(tree, cov);
  std::vector<Location> all = obs_locs;
  all.insert(all.end(), pred_locs.begin(), pred_locs.end());
  const Eigen::MatrixXd cm = mra_cov_dense(model, all);
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(
      y.data(), static_cast<Eigen::Index>(y.size()));
  const DenseKrige oracle = dense_condition(cm, yv);

  const PredictionField field = mra_predict(model, y);
  for (std::size_t i = 0; i < pred_locs.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    CHECK(std::abs(field.mean[i] - oracle.mean[k]) <=
          1e-6 * (1.0 + std::abs(oracle.mean[k])));
    CHECK(std::abs(field.variance[i] - oracle.variance[k]) <=
          1e-6 * (1.0 + oracle.variance[k]));
  }
}

// ---------------------------------------------------------------------------
// Averaged prediction
// ---------------------------------------------------------------------------

TEST_CASE("averaged prediction with zero shift equals a single partition",
          "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.1, 0.5);
  const auto locs = random_locations(80, 121, kCube);
  const auto pred_locs = random_locations(25, 122, kCube);
  const auto y = simulate_values(cov, locs, 123);
  const PointDataset data = observed(locs, y);
  const PointDataset targets = PointDataset::targets(pred_locs);

  PartitionConfig cfg = config(2, 8, 9);
  cfg.shift_fraction = 0.0;
  const PredictionField averaged =
      averaged_predict(cfg, kCube, data, targets, cov);

  const MraModel single(partition(kCube, data, targets, cfg), cov);
  const PredictionField base = mra_predict(single, y);
  REQUIRE(averaged.size() == base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK_THAT(averaged.mean[i], WithinRel(base.mean[i], 1e-12));
    CHECK_THAT(averaged.variance[i], WithinRel(base.variance[i], 1e-12));
  }
}

TEST_CASE("averaged prediction covers every target under active shifts",
          "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.1, 0.5);
  const auto locs = random_locations(80, 131, kCube);
  const auto pred_locs = random_locations(30, 132, kCube);
  const auto y = simulate_values(cov, locs, 133);

  const PredictionField field =
      averaged_predict(config(2, 8, 10), kCube, observed(locs, y),
                       PointDataset::targets(pred_locs), cov);
  REQUIRE(field.size() == pred_locs.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    CHECK(std::isfinite(field.mean[i]));
    CHECK(field.variance[i] >= 0.0);
    CHECK(field.variance[i] <= cov(pred_locs[i], pred_locs[i]) + 1e-8);
  }
}

// ---------------------------------------------------------------------------
// Resource and error behaviour
// ---------------------------------------------------------------------------

TEST_CASE("no dense block exceeds the largest region", "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.1, 0.5);
  const auto locs = random_locations(1200, 141, kCube);
  const auto pred_locs = random_locations(150, 142, kCube);
  const auto y = simulate_values(cov, locs, 143);

  const PartitionTree tree =
      partition(kCube, observed(locs, y), PointDataset::targets(pred_locs),
                config(3, 8, 11));
  std::size_t largest = 0;
  for (std::size_t i = 0; i < tree.size(); ++i)
    largest = std::max(largest, tree.region(i).knots.size());

  detail::BlockBudget::reset();
  const MraModel model(tree, cov);
  mra_loglik(model, y);
  mra_predict(model, y);
  const std::size_t peak = detail::BlockBudget::peak_elements();
  CHECK(peak > 0);
  CHECK(peak <= largest * largest);
  CHECK(largest * largest < locs.size() * locs.size() / 100);
}

TEST_CASE("data errors are reported before any factorization", "[mra]") {
  const CovarianceModel cov = metric_model(0.3, 1.0, 0.1, 0.5);
  const auto locs = random_locations(30, 151, kCube);
  const auto y = simulate_values(cov, locs, 152);
  const MraModel model(partition(kCube, observed(locs, y), config(1, 4, 12)),
                       cov);

  std::vector<double> short_y(y.begin(), y.end() - 1);
  CHECK_THROWS_AS(mra_loglik(model, short_y), data_error);

  std::vector<double> bad_y = y;
  bad_y[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(mra_loglik(model, bad_y), data_error);

  CHECK_THROWS_AS(
      MraModel(partition(kCube, PointDataset{}, config(1, 4, 13)), cov),
      data_error);
}
