/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#ifndef STMRA_HARNESS_HPP
#define STMRA_HARNESS_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "stmra/dense.hpp"
#include "stmra/fit.hpp"
#include "stmra/mra.hpp"
#include "stmra/parallel.hpp"
#include "stmra/partition.hpp"
#include "stmra/rng.hpp"
#include "stmra/types.hpp"

namespace stmra {

// ---------------------------------------------------------------------------
// Experiment specification
// ---------------------------------------------------------------------------

/// One model-resolution configuration in a sweep.
struct SweepCell {
  int levels = 1;
  int knots = 16;
};

/// A validation experiment: a dataset, a covariance model, a grid of
/// (levels, knots) cells, and a hold-out protocol. Each cell is evaluated
/// `repetitions` times; within one repetition every cell sees the same split,
/// so sweeps are paired across cells.
struct ExperimentSpec {
  PointDataset data;
  SpaceTimeExtent domain;
  CovarianceModel model;
  std::vector<SweepCell> cells;

  /// When set, parameters are re-estimated on each training split (the fit
  /// partition is frozen per cell); otherwise `model`'s values are used as-is.
  std::optional<FitSpec> fit;

  double holdout_fraction = 0.9;        // random mode: share of points predicted
  std::vector<SpaceTimeExtent> blocks;  // block mode: regions left out

  /// Template for per-cell partitions; levels, knots_per_region, and seed are
  /// overwritten for every cell.
  PartitionConfig partition;

  bool averaged = false;  // average predictions over shifted partitions
  int repetitions = 3;
  std::uint64_t seed = 0;
  unsigned max_threads = 0;  // parallelism across experiment cells
};

/// One score-table row: a (levels, knots, repetition) cell.
struct ExperimentRow {
  int levels = 0;
  int knots = 0;
  int repetition = 0;
  std::uint64_t seed = 0;  // split and knot seed of this repetition
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::vector<double> theta;  // parameters the predictions used
  double fit_loglik = std::numeric_limits<double>::quiet_NaN();  // NaN: fixed
  int fit_evaluations = 0;
  ScoreReport scores;
};

using ExperimentTable = std::vector<ExperimentRow>;

// ---------------------------------------------------------------------------
// Hold-out splits
// ---------------------------------------------------------------------------

/// Splits the non-missing rows into (train, test) by drawing the requested
/// fraction of rows, without replacement, as the test set. Row order is
/// preserved within both parts; the same seed always yields the same split.
inline std::pair<PointDataset, PointDataset> random_split(
    const PointDataset& data, double predicted_fraction, std::uint64_t seed) {
  if (!(predicted_fraction > 0.0) || !(predicted_fraction < 1.0))
    throw config_error("hold-out fraction must lie in (0, 1)");
  const PointDataset all = data.non_missing();
  const std::size_t n = all.size();
  const auto k = static_cast<std::size_t>(
      std::llround(predicted_fraction * static_cast<double>(n)));
  if (k == 0 || k >= n)
    throw config_error("hold-out split would leave an empty train or test set");

  KeyedRng rng = KeyedRng(seed).stream(13);
  std::vector<char> in_test(n, 0);
  for (std::size_t i : rng.sample_without_replacement(n, k)) in_test[i] = 1;

  std::vector<Location> train_locs, test_locs;
  std::vector<MaybeValue> train_vals, test_vals;
  for (std::size_t i = 0; i < n; ++i) {
    if (in_test[i]) {
      test_locs.push_back(all.location(i));
      test_vals.push_back(all.value(i));
    } else {
      train_locs.push_back(all.location(i));
      train_vals.push_back(all.value(i));
    }
  }
  return {PointDataset(std::move(train_locs), std::move(train_vals)),
          PointDataset(std::move(test_locs), std::move(test_vals))};
}

/// Splits the non-missing rows into (train, test) by removing every point
/// that lies inside any of the boxes. Boxes must lie within the domain.
inline std::pair<PointDataset, PointDataset> block_split(
    const PointDataset& data, const SpaceTimeExtent& domain,
    const std::vector<SpaceTimeExtent>& blocks) {
  if (blocks.empty())
    throw config_error("block validation requires at least one block");
  domain.validate();
  for (const SpaceTimeExtent& b : blocks) {
    b.validate();
    for (int a = 0; a < 3; ++a) {
      if (b.lo.coord(a) < domain.lo.coord(a) ||
          b.hi.coord(a) > domain.hi.coord(a))
        throw config_error("validation block extends outside the domain");
    }
  }

  const PointDataset all = data.non_missing();
  std::vector<Location> train_locs, test_locs;
  std::vector<MaybeValue> train_vals, test_vals;
  for (std::size_t i = 0; i < all.size(); ++i) {
    bool held_out = false;
    for (const SpaceTimeExtent& b : blocks)
      if (b.contains_closed(all.location(i))) {
        held_out = true;
        break;
      }
    if (held_out) {
      test_locs.push_back(all.location(i));
      test_vals.push_back(all.value(i));
    } else {
      train_locs.push_back(all.location(i));
      train_vals.push_back(all.value(i));
    }
  }
  if (test_locs.empty())
    throw config_error("validation blocks contain no observations");
  if (train_locs.empty())
    throw config_error("validation blocks cover all observations");
  return {PointDataset(std::move(train_locs), std::move(train_vals)),
          PointDataset(std::move(test_locs), std::move(test_vals))};
}

/// Splits the time axis into equal slabs and leaves out the left spatial half
/// on even slabs and the right half on odd slabs.
inline std::vector<SpaceTimeExtent> alternating_half_blocks(
    const SpaceTimeExtent& domain, int time_slices) {
  if (time_slices < 1)
    throw config_error("alternating blocks require at least one time slice");
  domain.validate();
  const double mid = domain.lo.x + 0.5 * (domain.hi.x - domain.lo.x);
  const double slab = (domain.hi.t - domain.lo.t) / time_slices;
  std::vector<SpaceTimeExtent> out;
  out.reserve(static_cast<std::size_t>(time_slices));
  for (int i = 0; i < time_slices; ++i) {
    SpaceTimeExtent b = domain;
    b.lo.t = domain.lo.t + i * slab;
    b.hi.t = i + 1 == time_slices ? domain.hi.t : domain.lo.t + (i + 1) * slab;
    if (i % 2 == 0)
      b.hi.x = mid;
    else
      b.lo.x = mid;
    out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment execution
// ---------------------------------------------------------------------------

namespace detail {

inline void validate_experiment(const ExperimentSpec& spec) {
  if (spec.cells.empty())
    throw config_error("experiment requires at least one (levels, knots) cell");
  if (spec.repetitions < 1)
    throw config_error("repetitions must be at least 1");
  spec.domain.validate();
}

inline std::uint64_t repetition_seed(std::uint64_t seed, int repetition) {
  return KeyedRng(seed).stream(29).child(static_cast<std::uint64_t>(repetition))
      .next_u64();
}

inline ExperimentRow run_cell(const ExperimentSpec& spec, const SweepCell& cell,
                              int repetition, std::uint64_t seed,
                              const PointDataset& train,
                              const PointDataset& test, unsigned threads) {
  ExperimentRow row;
  row.levels = cell.levels;
  row.knots = cell.knots;
  row.repetition = repetition;
  row.seed = seed;
  row.train_count = train.size();
  row.test_count = test.size();

  std::vector<double> y;
  y.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) y.push_back(*train.value(i));
  std::vector<double> truth;
  truth.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) truth.push_back(*test.value(i));

  PartitionConfig cfg = spec.partition;
  cfg.levels = cell.levels;
  cfg.knots_per_region = cell.knots;
  cfg.seed = seed;

  CovarianceModel model = spec.model;
  row.theta = model.theta().values;
  if (spec.fit) {
    const PartitionTree fit_tree = partition(spec.domain, train, cfg);
    const FitResult fitted = fit(fit_tree, model, y, *spec.fit, threads);
    model = model.with_values(fitted.theta);
    row.theta = fitted.theta;
    row.fit_loglik = fitted.loglik;
    row.fit_evaluations = fitted.evaluations;
  }

  const PointDataset targets = PointDataset::targets(test.locations());
  const auto t0 = std::chrono::steady_clock::now();
  PredictionField pred;
  if (spec.averaged) {
    pred = averaged_predict(cfg, spec.domain, train, targets, model, threads);
  } else {
    const PartitionTree tree = partition(spec.domain, train, targets, cfg);
    const MraModel mra(tree, model, threads);
    pred = mra_predict(mra, y, threads);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  row.scores = score(pred, truth, seconds);
  return row;
}

/// Evaluates all (cell, repetition) jobs against precomputed per-repetition
/// splits. Cells run in parallel; row order is cell-major and deterministic.
inline ExperimentTable run_table(
    const ExperimentSpec& spec,
    const std::vector<std::pair<PointDataset, PointDataset>>& splits,
    const std::vector<std::uint64_t>& seeds) {
  const std::size_t reps = splits.size();
  const std::size_t jobs = spec.cells.size() * reps;
  ExperimentTable table(jobs);
  const unsigned inner = jobs == 1 ? spec.max_threads : 1;
  parallel_for(
      jobs,
      [&](std::size_t j) {
        const std::size_t c = j / reps;
        const auto rep = static_cast<int>(j % reps);
        table[j] = run_cell(spec, spec.cells[c], rep, seeds[j % reps],
                            splits[j % reps].first, splits[j % reps].second,
                            inner);
      },
      spec.max_threads);
  return table;
}

}  // namespace detail

/// Random hold-out validation: per repetition, a seeded fraction of the
/// non-missing points is predicted from the rest. One row per
/// (levels, knots, repetition).
inline ExperimentTable run_random_validation(const ExperimentSpec& spec) {
  detail::validate_experiment(spec);
  std::vector<std::pair<PointDataset, PointDataset>> splits;
  std::vector<std::uint64_t> seeds;
  for (int rep = 0; rep < spec.repetitions; ++rep) {
    seeds.push_back(detail::repetition_seed(spec.seed, rep));
    splits.push_back(
        random_split(spec.data, spec.holdout_fraction, seeds.back()));
  }
  return detail::run_table(spec, splits, seeds);
}

/// Block hold-out validation: every observation inside the spec's boxes is
/// predicted from the points outside them. The split is the same for all
/// repetitions; repetitions differ in their partition knots.
inline ExperimentTable run_block_validation(const ExperimentSpec& spec) {
  detail::validate_experiment(spec);
  const auto split = block_split(spec.data, spec.domain, spec.blocks);
  std::vector<std::pair<PointDataset, PointDataset>> splits;
  std::vector<std::uint64_t> seeds;
  for (int rep = 0; rep < spec.repetitions; ++rep) {
    seeds.push_back(detail::repetition_seed(spec.seed, rep));
    splits.push_back(split);
  }
  return detail::run_table(spec, splits, seeds);
}

// ---------------------------------------------------------------------------
// Table output
// ---------------------------------------------------------------------------

/// Long-format CSV, one row per experiment cell. The fit_loglik field is
/// empty when the parameters were fixed.
inline void write_scores_csv(const ExperimentTable& table, std::ostream& out) {
  out << "levels,knots,repetition,seed,train,test,rmse,mae,cov2sd,r2,seconds,"
         "fit_loglik,fit_evaluations";
  const std::size_t k = table.empty() ? 0 : table.front().theta.size();
  for (std::size_t i = 0; i < k; ++i) out << ",theta_" << i;
  out << '\n';
  out.precision(17);
  for (const ExperimentRow& row : table) {
    out << row.levels << ',' << row.knots << ',' << row.repetition << ','
        << row.seed << ',' << row.train_count << ',' << row.test_count << ','
        << row.scores.rmse << ',' << row.scores.mae << ',' << row.scores.cov2sd
        << ',' << row.scores.r2 << ',' << row.scores.seconds << ',';
    if (std::isfinite(row.fit_loglik)) out << row.fit_loglik;
    out << ',' << row.fit_evaluations;
    for (double v : row.theta) out << ',' << v;
    out << '\n';
  }
}

/// JSON summary: per (levels, knots) cell, score means over its repetitions.
inline void write_scores_json(const ExperimentTable& table, std::ostream& out) {
  struct Group {
    int levels, knots;
    int count = 0;
    double rmse = 0, mae = 0, cov2sd = 0, r2 = 0, seconds = 0;
  };
  std::vector<Group> groups;
  for (const ExperimentRow& row : table) {
    Group* g = nullptr;
    for (Group& have : groups)
      if (have.levels == row.levels && have.knots == row.knots) g = &have;
    if (!g) {
      groups.push_back({row.levels, row.knots});
      g = &groups.back();
    }
    ++g->count;
    g->rmse += row.scores.rmse;
    g->mae += row.scores.mae;
    g->cov2sd += row.scores.cov2sd;
    g->r2 += row.scores.r2;
    g->seconds += row.scores.seconds;
  }

  out.precision(17);
  auto number = [&out](double v) {
    if (std::isfinite(v))
      out << v;
    else
      out << "null";
  };
  out << "{\n  \"rows\": " << table.size() << ",\n  \"cells\": [";
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const Group& g = groups[i];
    const double n = g.count;
    out << (i ? "," : "") << "\n    {\"levels\": " << g.levels
        << ", \"knots\": " << g.knots << ", \"repetitions\": " << g.count
        << ", \"rmse\": ";
    number(g.rmse / n);
    out << ", \"mae\": ";
    number(g.mae / n);
    out << ", \"cov2sd\": ";
    number(g.cov2sd / n);
    out << ", \"r2\": ";
    number(g.r2 / n);
    out << ", \"seconds\": ";
    number(g.seconds);
    out << "}";
  }
  out << "\n  ]\n}\n";
}

}  // namespace stmra

#endif  // STMRA_HARNESS_HPP
