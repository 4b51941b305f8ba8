/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

// End-to-end library walkthrough: simulate a space-time field, hold out half
// of it, re-estimate the covariance parameters on the training part, predict
// the held-out part (plain and partition-averaged), and score the results.
//
//   ./workflow [seed]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "stmra/stmra.hpp"

using namespace stmra;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

std::vector<double> values_of(const PointDataset& data) {
  std::vector<double> y;
  y.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) y.push_back(*data.value(i));
  return y;
}

}  // namespace

int main(int argc, char** argv) {
  const std::uint64_t seed =
      argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 42;
  const SpaceTimeExtent cube{{0, 0, 0}, {1, 1, 1}};
  const CovarianceModel truth(Family::metric_exponential,
                              ThetaVector({0.2, 1.0, 0.05, 0.5}));

  // One exact draw over a 16x16x8 grid, then a 50/50 hold-out split.
  SimulationSpec sim;
  sim.nx = 16;
  sim.ny = 16;
  sim.nt = 8;
  sim.extent = cube;
  sim.model = truth;
  sim.seed = seed;
  const PointDataset all = simulate_gp(sim).to_points();
  const auto [train, test] = random_split(all, 0.5, seed + 1);
  const std::vector<double> y = values_of(train);
  const std::vector<double> held_out = values_of(test);
  std::printf("simulated %zu cells, training on %zu, predicting %zu\n",
              all.size(), train.size(), test.size());

  // A partition sized by the occupancy heuristic, deepened knots for
  // prediction quality.
  PartitionConfig cfg = suggest_config(train.size(), cube);
  cfg.knots_per_region = 32;
  cfg.seed = seed + 2;
  std::printf("partition: M=%d, r=%d\n", cfg.levels, cfg.knots_per_region);
  const PartitionTree tree =
      partition(cube, train, PointDataset::targets(test.locations()), cfg);

  // Maximum likelihood on the frozen partition, starting well away from the
  // values that generated the data.
  FitSpec spec;
  spec.theta0 = {0.5, 0.5, 0.1, 1.0};
  spec.lower = {0.01, 0.01, 0.001, 0.01};
  spec.upper = {2.0, 5.0, 1.0, 10.0};
  spec.max_evaluations = 200;
  spec.seed = seed + 3;
  auto t0 = std::chrono::steady_clock::now();
  const FitResult fitted = fit(tree, truth, y, spec);
  std::printf("fit: loglik %.3f after %d evaluations (%.1f s), theta =",
              fitted.loglik, fitted.evaluations, seconds_since(t0));
  for (double v : fitted.theta) std::printf(" %.4g", v);
  std::printf("  (true: 0.2 1 0.05 0.5)\n");

  // Predict the held-out cells with the fitted parameters, once with the
  // single partition and once averaged over the nine shifted partitions.
  const CovarianceModel model = truth.with_values(fitted.theta);
  t0 = std::chrono::steady_clock::now();
  const MraModel mra(tree, model);
  const PredictionField single = mra_predict(mra, y);
  const double t_single = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const PredictionField averaged = averaged_predict(
      cfg, cube, train, PointDataset::targets(test.locations()), model);
  const double t_avg = seconds_since(t0);

  const ScoreReport ss = score(single, held_out, t_single);
  const ScoreReport sa = score(averaged, held_out, t_avg);
  std::printf("%-10s %8s %8s %8s %8s %9s\n", "predictor", "rmse", "mae",
              "cov2sd", "r2", "seconds");
  std::printf("%-10s %8.4f %8.4f %8.3f %8.3f %9.2f\n", "single", ss.rmse,
              ss.mae, ss.cov2sd, ss.r2, ss.seconds);
  std::printf("%-10s %8.4f %8.4f %8.3f %8.3f %9.2f\n", "averaged", sa.rmse,
              sa.mae, sa.cov2sd, sa.r2, sa.seconds);
  return 0;
}
