/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

// Command-line front end. Subcommands cover the full workflow: simulate a
// field, inspect a partition, fit parameters, predict, validate, suggest a
// partition depth, and score predictions against held-back truth.
//
// Exit codes: 0 success, 1 usage/configuration, 2 data/format, 3 numerics.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stmra/stmra.hpp"

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

unsigned worker_threads() {
  const char* env = std::getenv("STMRA_THREADS");
  if (!env || !*env) return 0;  // 0: let the engine use all logical cores
  char* end = nullptr;
  const unsigned long v = std::strtoul(env, &end, 10);
  if (end == env || *end != '\0')
    throw stmra::config_error("STMRA_THREADS must be a nonnegative integer");
  return static_cast<unsigned>(v);
}

void add_config_option(CLI::App& cmd) {
  cmd.add_option("--config",
                 "Read key = value defaults from a file; keys are the long "
                 "option names and explicit flags win");
}

// Folds `--config FILE` entries into the raw argument list as `--key=value`
// tokens so CLI11 applies its usual conversions and validation. Only keys
// absent from the command line are appended, which gives flags precedence.
std::vector<std::string> expand_config_args(CLI::App& app,
                                            std::vector<std::string> args) {
  std::size_t sub_index = args.size();
  CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (!args[i].empty() && args[i][0] == '-') continue;
    sub = app.get_subcommand_no_throw(args[i]);
    if (sub != nullptr) sub_index = i;
    break;
  }
  if (sub == nullptr) return args;

  std::string config_path;
  for (std::size_t i = sub_index + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size())
      config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0)
      config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;

  std::set<std::string> given;
  for (std::size_t i = sub_index + 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    const std::size_t eq = a.find('=');
    given.insert(eq == std::string::npos ? a.substr(2) : a.substr(2, eq - 2));
  }

  for (const auto& [key, value] : stmra::read_config_file(config_path)) {
    if (key == "config")
      throw stmra::config_error(config_path + ": config files cannot nest");
    if (sub->get_option_no_throw("--" + key) == nullptr)
      throw stmra::config_error(config_path + ": unknown option '" + key +
                                "' for subcommand '" + sub->get_name() + "'");
    if (given.count(key) == 0) args.push_back("--" + key + "=" + value);
  }
  return args;
}

stmra::SpaceTimeExtent parse_extent(const std::vector<double>& v) {
  if (v.size() != 6)
    throw stmra::config_error(
        "--extent needs 6 numbers: lo_x,lo_y,lo_t,hi_x,hi_y,hi_t");
  const stmra::SpaceTimeExtent e{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
  try {
    e.validate();
  } catch (const stmra::data_error& err) {
    throw stmra::config_error(std::string("--extent: ") + err.what());
  }
  return e;
}

/// Bounding box of one or two location lists (used when --extent is omitted).
stmra::SpaceTimeExtent bounding_extent(
    const std::vector<stmra::Location>& a,
    const std::vector<stmra::Location>& b = {}) {
  if (a.empty() && b.empty())
    throw stmra::data_error("cannot infer an extent from an empty dataset");
  stmra::SpaceTimeExtent e;
  bool first = true;
  for (const auto* part : {&a, &b}) {
    for (const stmra::Location& p : *part) {
      for (int axis = 0; axis < 3; ++axis) {
        if (first || p.coord(axis) < e.lo.coord(axis))
          e.lo.coord(axis) = p.coord(axis);
        if (first || p.coord(axis) > e.hi.coord(axis))
          e.hi.coord(axis) = p.coord(axis);
      }
      first = false;
    }
  }
  return e;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  auto out = stmra::detail::open_output(path);
  out << text;
}

struct ModelOptions {
  std::string family = "metric_exponential";
  std::string metric = "euclidean";
  std::vector<double> theta;
};

void add_family_metric(CLI::App& cmd, ModelOptions& o) {
  cmd.add_option("--family", o.family,
                 "Covariance family: metric_exponential|separable_exp|"
                 "nonseparable_sphere|nonstationary_kernelconv")
      ->capture_default_str();
  cmd.add_option("--metric", o.metric,
                 "Spatial metric: euclidean|great_circle|chordal")
      ->capture_default_str();
}

CLI::Option* add_theta(CLI::App& cmd, ModelOptions& o, bool required = true) {
  CLI::Option* opt =
      cmd.add_option("--theta", o.theta,
                     "Covariance parameters, comma separated")
          ->delimiter(',');
  if (required) opt->required();
  return opt;
}

stmra::CovarianceModel build_model(const ModelOptions& o,
                                   const std::vector<double>& theta) {
  return stmra::CovarianceModel(stmra::family_from_name(o.family),
                                stmra::ThetaVector(theta),
                                stmra::metric_from_name(o.metric));
}

struct PartitionOptions {
  int levels = 1;
  int knots = 16;
  std::vector<double> lower_bounds = {0, 0, 0};
  int spatial_offset = 0;
  int temporal_offset = 0;
};

void add_partition_options(CLI::App& cmd, PartitionOptions& o,
                           bool with_offsets = true) {
  cmd.add_option("--levels", o.levels, "Partition depth M")
      ->capture_default_str();
  cmd.add_option("--knots", o.knots, "Knots per non-leaf region r")
      ->capture_default_str();
  cmd.add_option("--lower-bounds", o.lower_bounds,
                 "Minimum region size per axis (x,y,t)")
      ->delimiter(',');
  if (with_offsets) {
    cmd.add_option("--spatial-offset", o.spatial_offset,
                   "Shift split planes in x and y: -1, 0, or +1")
        ->capture_default_str();
    cmd.add_option("--temporal-offset", o.temporal_offset,
                   "Shift split planes in t: -1, 0, or +1")
        ->capture_default_str();
  }
}

stmra::PartitionConfig build_partition_config(const PartitionOptions& o,
                                              std::uint64_t seed) {
  if (o.lower_bounds.size() != 3)
    throw stmra::config_error("--lower-bounds needs 3 numbers: x,y,t");
  stmra::PartitionConfig cfg;
  cfg.levels = o.levels;
  cfg.knots_per_region = o.knots;
  cfg.lower_bounds = {o.lower_bounds[0], o.lower_bounds[1], o.lower_bounds[2]};
  cfg.spatial_offset = o.spatial_offset;
  cfg.temporal_offset = o.temporal_offset;
  cfg.seed = seed;
  return cfg;
}

struct FitOptions {
  std::vector<double> theta0;
  std::vector<double> lower;
  std::vector<double> upper;
  int maxeval = 500;
  double ftol = 1.0;
  std::string optimizer = "derivative_free";
  int restarts = 0;
};

void add_fit_options(CLI::App& cmd, FitOptions& o, bool required) {
  auto* theta0 = cmd.add_option("--theta0", o.theta0,
                                "Initial parameter values, comma separated")
                     ->delimiter(',');
  auto* lower =
      cmd.add_option("--lower", o.lower, "Per-parameter lower bounds")
          ->delimiter(',');
  auto* upper =
      cmd.add_option("--upper", o.upper, "Per-parameter upper bounds")
          ->delimiter(',');
  if (required) {
    theta0->required();
    lower->required();
    upper->required();
  }
  cmd.add_option("--maxeval", o.maxeval, "Evaluation budget")
      ->capture_default_str();
  cmd.add_option("--ftol", o.ftol, "Absolute log-likelihood tolerance")
      ->capture_default_str();
  cmd.add_option("--optimizer", o.optimizer,
                 "Optimizer: derivative_free|quasi_newton")
      ->capture_default_str();
  cmd.add_option("--restarts", o.restarts,
                 "Extra seeded restarts from random points")
      ->capture_default_str();
}

stmra::FitSpec build_fit_spec(const FitOptions& o, std::uint64_t seed) {
  stmra::FitSpec fs;
  fs.theta0 = o.theta0;
  fs.lower = o.lower;
  fs.upper = o.upper;
  fs.max_evaluations = o.maxeval;
  fs.ftol_abs = o.ftol;
  fs.restarts = o.restarts;
  fs.seed = seed;
  if (o.optimizer == "derivative_free")
    fs.optimizer = stmra::Optimizer::derivative_free;
  else if (o.optimizer == "quasi_newton")
    fs.optimizer = stmra::Optimizer::quasi_newton;
  else
    throw stmra::config_error("unknown optimizer '" + o.optimizer +
                              "' (use derivative_free or quasi_newton)");
  return fs;
}

/// Blocks file: one box per line as 6 whitespace-separated numbers
/// (lo_x lo_y lo_t hi_x hi_y hi_t); '#' starts a comment.
std::vector<stmra::SpaceTimeExtent> read_blocks_file(const std::string& path) {
  auto in = stmra::detail::open_input(path);
  std::vector<stmra::SpaceTimeExtent> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = stmra::detail::trim(line);
    if (const auto hash = s.find('#'); hash != std::string_view::npos)
      s = stmra::detail::trim(s.substr(0, hash));
    if (s.empty()) continue;
    std::istringstream row{std::string(s)};
    std::array<double, 6> v{};
    for (double& c : v) {
      if (!(row >> c))
        throw stmra::format_error(path + " line " + std::to_string(line_no) +
                                  ": expected 6 numbers per block");
    }
    std::string extra;
    if (row >> extra)
      throw stmra::format_error(path + " line " + std::to_string(line_no) +
                                ": trailing data after 6 numbers");
    out.push_back({{v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
  }
  if (out.empty()) throw stmra::format_error(path + ": no blocks found");
  return out;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateOptions {
  int nx = 10, ny = 10, nt = 5;
  std::vector<double> extent = {0, 0, 0, 1, 1, 1};
  ModelOptions model;
  std::uint64_t seed = 0;
  double missing_fraction = 0.0;
  std::string output;
  std::string points;
};

void run_simulate(const SimulateOptions& o) {
  stmra::SimulationSpec spec;
  spec.nx = o.nx;
  spec.ny = o.ny;
  spec.nt = o.nt;
  spec.extent = parse_extent(o.extent);
  spec.model = build_model(o.model, o.model.theta);
  spec.seed = o.seed;
  stmra::RasterStack raster = stmra::simulate_gp(spec);

  if (o.missing_fraction != 0.0) {
    if (!(o.missing_fraction > 0.0) || !(o.missing_fraction < 1.0))
      throw stmra::config_error("--missing-fraction must lie in (0, 1)");
    const auto k = static_cast<std::size_t>(
        std::llround(o.missing_fraction * static_cast<double>(raster.size())));
    stmra::KeyedRng rng = stmra::KeyedRng(o.seed).stream(41);
    for (std::size_t i : rng.sample_without_replacement(raster.size(), k))
      raster.cells[i] = std::nullopt;
  }

  stmra::write_raster_file(raster, o.output);
  std::size_t observed = 0;
  for (const auto& c : raster.cells)
    if (c) ++observed;
  if (!o.points.empty())
    stmra::write_points_file(raster.to_points(false), o.points);
  std::cout << "wrote " << raster.size() << " cells (" << observed
            << " observed) to " << o.output << "\n";
}

void register_simulate(CLI::App& app) {
  auto o = std::make_shared<SimulateOptions>();
  CLI::App* cmd = app.add_subcommand(
      "simulate", "Draw an exact Gaussian-process field on a grid");
  add_config_option(*cmd);
  cmd->add_option("--nx", o->nx, "Grid cells in x")->capture_default_str();
  cmd->add_option("--ny", o->ny, "Grid cells in y")->capture_default_str();
  cmd->add_option("--nt", o->nt, "Grid cells in t")->capture_default_str();
  cmd->add_option("--extent", o->extent,
                  "Domain as lo_x,lo_y,lo_t,hi_x,hi_y,hi_t")
      ->delimiter(',');
  add_family_metric(*cmd, o->model);
  add_theta(*cmd, o->model);
  cmd->add_option("--seed", o->seed, "Simulation seed")->capture_default_str();
  cmd->add_option("--missing-fraction", o->missing_fraction,
                  "Mask this fraction of cells as missing (seeded)")
      ->capture_default_str();
  cmd->add_option("--output", o->output, "Raster output path")->required();
  cmd->add_option("--points", o->points,
                  "Also write the cells as x,y,t,value CSV (missing "
                  "cells keep empty values)");
  cmd->callback([o] { run_simulate(*o); });
}

// ---------------------------------------------------------------------------
// partition
// ---------------------------------------------------------------------------

struct PartitionCmdOptions {
  std::string input;
  std::vector<double> extent;
  PartitionOptions part;
  std::uint64_t seed = 0;
  std::string output;
};

void run_partition(const PartitionCmdOptions& o) {
  const stmra::PointDataset data =
      stmra::read_points_file(o.input).non_missing();
  if (data.empty()) throw stmra::data_error("partition requires observations");
  const stmra::SpaceTimeExtent domain = o.extent.empty()
                                            ? bounding_extent(data.locations())
                                            : parse_extent(o.extent);
  const stmra::PartitionConfig cfg = build_partition_config(o.part, o.seed);
  const stmra::PartitionTree tree = stmra::partition(domain, data, cfg);

  for (int m = 0; m <= tree.levels(); ++m) {
    const auto [begin, end] = tree.level_range(m);
    std::size_t knots = 0;
    for (std::size_t i = begin; i < end; ++i)
      knots += tree.region(i).knots.size();
    std::cout << "level " << m << ": " << (end - begin) << " region"
              << (end - begin == 1 ? "" : "s") << ", " << knots << " knots"
              << (m == tree.levels() ? " (observations)" : "") << "\n";
  }

  if (!o.output.empty()) {
    auto out = stmra::detail::open_output(o.output);
    out << "level,path,knot,x,y,t\n";
    out.precision(17);
    for (std::size_t i = 0; i < tree.size(); ++i) {
      const stmra::Region& region = tree.region(i);
      for (std::size_t k = 0; k < region.knots.size(); ++k) {
        const stmra::Location& p = region.knots[k];
        out << region.level << ',' << region.path_string() << ',' << k << ','
            << p.x << ',' << p.y << ',' << p.t << '\n';
      }
    }
  }
}

void register_partition(CLI::App& app) {
  auto o = std::make_shared<PartitionCmdOptions>();
  CLI::App* cmd = app.add_subcommand(
      "partition", "Build a space-time partition and report its shape");
  add_config_option(*cmd);
  cmd->add_option("--input", o->input, "Observations CSV (x,y,t,value)")
      ->required();
  cmd->add_option("--extent", o->extent,
                  "Domain as lo_x,lo_y,lo_t,hi_x,hi_y,hi_t (default: data "
                  "bounding box)")
      ->delimiter(',');
  add_partition_options(*cmd, o->part);
  cmd->add_option("--seed", o->seed, "Knot placement seed")
      ->capture_default_str();
  cmd->add_option("--output", o->output, "Write all knots as CSV");
  cmd->callback([o] { run_partition(*o); });
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitCmdOptions {
  std::string input;
  std::vector<double> extent;
  ModelOptions model;
  FitOptions fit;
  PartitionOptions part;
  std::uint64_t seed = 0;
  std::string output;
  std::string trace;
};

void run_fit(const FitCmdOptions& o) {
  const stmra::PointDataset data =
      stmra::read_points_file(o.input).non_missing();
  if (data.empty()) throw stmra::data_error("fit requires observations");
  const stmra::SpaceTimeExtent domain = o.extent.empty()
                                            ? bounding_extent(data.locations())
                                            : parse_extent(o.extent);
  std::vector<double> y;
  y.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) y.push_back(*data.value(i));

  const stmra::PartitionConfig cfg = build_partition_config(o.part, o.seed);
  const stmra::PartitionTree tree = stmra::partition(domain, data, cfg);
  const stmra::CovarianceModel model = build_model(o.model, o.fit.theta0);
  const stmra::FitSpec spec = build_fit_spec(o.fit, o.seed);
  const stmra::FitResult result =
      stmra::fit(tree, model, y, spec, worker_threads());

  if (!o.trace.empty()) {
    auto out = stmra::detail::open_output(o.trace);
    stmra::write_trace_csv(result, out);
  }

  json j;
  j["family"] = o.model.family;
  j["metric"] = o.model.metric;
  j["theta"] = result.theta;
  j["loglik"] = result.loglik;
  j["evaluations"] = result.evaluations;
  j["converged"] = result.converged;
  j["bound_active"] = result.bound_active;
  j["observations"] = data.size();
  j["levels"] = cfg.levels;
  j["knots"] = cfg.knots_per_region;
  j["seed"] = o.seed;
  if (!o.trace.empty()) j["trace_path"] = o.trace;
  write_text(o.output, j.dump(2) + "\n");
}

void register_fit(CLI::App& app) {
  auto o = std::make_shared<FitCmdOptions>();
  CLI::App* cmd = app.add_subcommand(
      "fit", "Estimate covariance parameters by maximum likelihood");
  add_config_option(*cmd);
  cmd->add_option("--input", o->input, "Observations CSV (x,y,t,value)")
      ->required();
  cmd->add_option("--extent", o->extent,
                  "Domain as lo_x,lo_y,lo_t,hi_x,hi_y,hi_t (default: data "
                  "bounding box)")
      ->delimiter(',');
  add_family_metric(*cmd, o->model);
  add_fit_options(*cmd, o->fit, /*required=*/true);
  add_partition_options(*cmd, o->part);
  cmd->add_option("--seed", o->seed,
                  "Seed for knots and optimizer restarts")
      ->capture_default_str();
  cmd->add_option("--output", o->output,
                  "Fit summary JSON path (default: stdout)");
  cmd->add_option("--trace", o->trace, "Evaluation trace CSV path");
  cmd->callback([o] { run_fit(*o); });
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictOptions {
  std::string input;
  std::string targets;
  std::string grid;
  std::vector<double> extent;
  ModelOptions model;
  PartitionOptions part;
  std::uint64_t seed = 0;
  bool averaged = false;
  std::string output;
  std::string mean_raster;
  std::string variance_raster;
};

void run_predict(const PredictOptions& o) {
  const stmra::PointDataset obs =
      stmra::read_points_file(o.input).non_missing();
  if (obs.empty()) throw stmra::data_error("predict requires observations");
  if (!o.targets.empty() && !o.grid.empty())
    throw stmra::config_error("choose one of --targets and --grid");
  if (o.targets.empty() && o.grid.empty())
    throw stmra::config_error("predict needs --targets or --grid");
  if (o.grid.empty() && (!o.mean_raster.empty() || !o.variance_raster.empty()))
    throw stmra::config_error(
        "--mean-raster/--variance-raster require --grid targets");

  std::vector<stmra::Location> target_locs;
  std::vector<std::size_t> grid_cells;  // flat mask indices of the targets
  stmra::RasterStack mask;
  if (!o.targets.empty()) {
    target_locs = stmra::read_points_file(o.targets).locations();
  } else {
    mask = stmra::read_raster_file(o.grid);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask.cells[i]) continue;  // NA cells are not requested
      target_locs.push_back(mask.cell_center(i));
      grid_cells.push_back(i);
    }
    if (target_locs.empty())
      throw stmra::data_error(o.grid + ": the mask requests no cells");
  }

  const stmra::SpaceTimeExtent domain =
      o.extent.empty() ? bounding_extent(obs.locations(), target_locs)
                       : parse_extent(o.extent);
  const stmra::PartitionConfig cfg = build_partition_config(o.part, o.seed);
  const stmra::CovarianceModel model = build_model(o.model, o.model.theta);
  const stmra::PointDataset targets = stmra::PointDataset::targets(target_locs);
  std::vector<double> y;
  y.reserve(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) y.push_back(*obs.value(i));

  const unsigned threads = worker_threads();
  stmra::PredictionField field;
  if (o.averaged) {
    field = stmra::averaged_predict(cfg, domain, obs, targets, model, threads);
  } else {
    const stmra::PartitionTree tree =
        stmra::partition(domain, obs, targets, cfg);
    const stmra::MraModel mra(tree, model, threads);
    field = stmra::mra_predict(mra, y, threads);
  }

  if (o.output.empty() || o.output == "-") {
    std::ostringstream buffer;
    stmra::write_predictions(field, buffer);
    std::cout << buffer.str();
  } else {
    stmra::write_predictions_file(field, o.output);
  }

  if (!o.mean_raster.empty() || !o.variance_raster.empty()) {
    stmra::RasterStack mean(mask.nx, mask.ny, mask.nt, mask.extent);
    stmra::RasterStack variance(mask.nx, mask.ny, mask.nt, mask.extent);
    for (std::size_t i = 0; i < grid_cells.size(); ++i) {
      mean.cells[grid_cells[i]] = field.mean[i];
      variance.cells[grid_cells[i]] = field.variance[i];
    }
    if (!o.mean_raster.empty())
      stmra::write_raster_file(mean, o.mean_raster);
    if (!o.variance_raster.empty())
      stmra::write_raster_file(variance, o.variance_raster);
  }
}

void register_predict(CLI::App& app) {
  auto o = std::make_shared<PredictOptions>();
  CLI::App* cmd = app.add_subcommand(
      "predict", "Predict at target locations from observations");
  add_config_option(*cmd);
  cmd->add_option("--input", o->input, "Observations CSV (x,y,t,value)")
      ->required();
  cmd->add_option("--targets", o->targets,
                  "Target locations CSV (values ignored)");
  cmd->add_option("--grid", o->grid,
                  "Raster mask: predict at every non-NA cell center");
  cmd->add_option("--extent", o->extent,
                  "Domain as lo_x,lo_y,lo_t,hi_x,hi_y,hi_t (default: "
                  "bounding box of observations and targets)")
      ->delimiter(',');
  add_family_metric(*cmd, o->model);
  add_theta(*cmd, o->model);
  add_partition_options(*cmd, o->part);
  cmd->add_option("--seed", o->seed, "Knot placement seed")
      ->capture_default_str();
  cmd->add_flag("--averaged", o->averaged,
                "Average over the 9 shifted partitions");
  cmd->add_option("--output", o->output,
                  "Prediction CSV path (default: stdout)");
  cmd->add_option("--mean-raster", o->mean_raster,
                  "With --grid: write predicted means as a raster");
  cmd->add_option("--variance-raster", o->variance_raster,
                  "With --grid: write predictive variances as a raster");
  cmd->callback([o] { run_predict(*o); });
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

struct ValidateOptions {
  std::string input;
  std::vector<double> extent;
  ModelOptions model;
  std::vector<int> levels = {1};
  std::vector<int> knots = {16};
  std::string mode = "random";
  double fraction = 0.9;
  std::string blocks_file;
  int alternating = 0;
  int repetitions = 3;
  std::uint64_t seed = 0;
  bool averaged = false;
  bool do_fit = false;
  FitOptions fit;
  PartitionOptions part;
  std::string output;
  std::string summary;
};

void run_validate(const ValidateOptions& o) {
  if (!o.do_fit && o.model.theta.empty())
    throw stmra::config_error("--theta is required unless --fit is given");
  if (o.do_fit &&
      (o.fit.theta0.empty() || o.fit.lower.empty() || o.fit.upper.empty()))
    throw stmra::config_error("--fit requires --theta0, --lower, and --upper");

  stmra::ExperimentSpec spec;
  spec.data = stmra::read_points_file(o.input);
  spec.domain = o.extent.empty()
                    ? bounding_extent(spec.data.locations())
                    : parse_extent(o.extent);
  spec.model = build_model(o.model,
                           o.do_fit ? o.fit.theta0 : o.model.theta);
  for (int m : o.levels)
    for (int r : o.knots) spec.cells.push_back({m, r});
  if (o.do_fit) spec.fit = build_fit_spec(o.fit, o.seed);
  spec.holdout_fraction = o.fraction;
  spec.partition = build_partition_config(o.part, o.seed);
  spec.averaged = o.averaged;
  spec.repetitions = o.repetitions;
  spec.seed = o.seed;
  spec.max_threads = worker_threads();

  stmra::ExperimentTable table;
  if (o.mode == "random") {
    table = stmra::run_random_validation(spec);
  } else if (o.mode == "block") {
    if (!o.blocks_file.empty() && o.alternating > 0)
      throw stmra::config_error("choose one of --blocks and --alternating");
    if (o.alternating > 0)
      spec.blocks = stmra::alternating_half_blocks(spec.domain, o.alternating);
    else if (!o.blocks_file.empty())
      spec.blocks = read_blocks_file(o.blocks_file);
    else
      throw stmra::config_error(
          "block mode needs --blocks FILE or --alternating N");
    table = stmra::run_block_validation(spec);
  } else {
    throw stmra::config_error("--mode must be random or block");
  }

  std::ostringstream csv;
  stmra::write_scores_csv(table, csv);
  write_text(o.output, csv.str());
  if (!o.summary.empty()) {
    auto out = stmra::detail::open_output(o.summary);
    stmra::write_scores_json(table, out);
  }
}

void register_validate(CLI::App& app) {
  auto o = std::make_shared<ValidateOptions>();
  CLI::App* cmd = app.add_subcommand(
      "validate", "Hold-out validation sweeps over (levels, knots) cells");
  add_config_option(*cmd);
  cmd->add_option("--input", o->input, "Observations CSV (x,y,t,value)")
      ->required();
  cmd->add_option("--extent", o->extent,
                  "Domain as lo_x,lo_y,lo_t,hi_x,hi_y,hi_t (default: data "
                  "bounding box)")
      ->delimiter(',');
  add_family_metric(*cmd, o->model);
  add_theta(*cmd, o->model, /*required=*/false);
  cmd->add_option("--levels", o->levels, "Partition depths to sweep")
      ->delimiter(',')
      ->capture_default_str();
  cmd->add_option("--knots", o->knots, "Knot counts to sweep")
      ->delimiter(',')
      ->capture_default_str();
  cmd->add_option("--mode", o->mode, "Hold-out mode: random|block")
      ->capture_default_str();
  cmd->add_option("--fraction", o->fraction,
                  "Random mode: fraction of points predicted")
      ->capture_default_str();
  cmd->add_option("--blocks", o->blocks_file,
                  "Block mode: file with one box per line "
                  "(lo_x lo_y lo_t hi_x hi_y hi_t)");
  cmd->add_option("--alternating", o->alternating,
                  "Block mode: leave out alternating spatial halves over "
                  "this many time slabs");
  cmd->add_option("--repetitions", o->repetitions, "Repetitions per cell")
      ->capture_default_str();
  cmd->add_option("--seed", o->seed, "Split and knot seed")
      ->capture_default_str();
  cmd->add_flag("--averaged", o->averaged,
                "Average over the 9 shifted partitions");
  cmd->add_flag("--fit", o->do_fit,
                "Re-estimate parameters on each training split");
  add_fit_options(*cmd, o->fit, /*required=*/false);
  cmd->add_option("--lower-bounds", o->part.lower_bounds,
                  "Minimum region size per axis (x,y,t)")
      ->delimiter(',');
  cmd->add_option("--output", o->output, "Score CSV path (default: stdout)");
  cmd->add_option("--summary", o->summary, "Score summary JSON path");
  cmd->callback([o] { run_validate(*o); });
}

// ---------------------------------------------------------------------------
// suggest
// ---------------------------------------------------------------------------

struct SuggestOptions {
  std::size_t n = 0;
  std::vector<double> extent = {0, 0, 0, 1, 1, 1};
  std::vector<double> lower_bounds = {0, 0, 0};
};

void run_suggest(const SuggestOptions& o) {
  if (o.n < 1) throw stmra::config_error("--n must be at least 1");
  if (o.lower_bounds.size() != 3)
    throw stmra::config_error("--lower-bounds needs 3 numbers: x,y,t");
  const stmra::SpaceTimeExtent domain = parse_extent(o.extent);
  const std::array<double, 3> bounds = {o.lower_bounds[0], o.lower_bounds[1],
                                        o.lower_bounds[2]};
  const stmra::PartitionConfig cfg =
      stmra::suggest_config(o.n, domain, bounds);
  const stmra::SplitSchedule schedule =
      stmra::make_split_schedule(domain, cfg.levels, bounds);
  const double occupancy = static_cast<double>(o.n) /
                           static_cast<double>(schedule.leaf_count());
  std::cout << "M = " << cfg.levels << " (partition depth), r = "
            << cfg.knots_per_region << " (knots per region)\n"
            << "rationale: " << schedule.leaf_count() << " leaf regions at "
            << "depth " << cfg.levels << " give " << occupancy
            << " expected observations per leaf (target <= 100)\n"
            << "tip: estimation favors small r; raise r for final "
            << "predictions\n";
}

void register_suggest(CLI::App& app) {
  auto o = std::make_shared<SuggestOptions>();
  CLI::App* cmd = app.add_subcommand(
      "suggest", "Suggest a partition depth for a dataset size");
  add_config_option(*cmd);
  cmd->add_option("--n", o->n, "Number of observations")->required();
  cmd->add_option("--extent", o->extent,
                  "Domain as lo_x,lo_y,lo_t,hi_x,hi_y,hi_t")
      ->delimiter(',');
  cmd->add_option("--lower-bounds", o->lower_bounds,
                  "Minimum region size per axis (x,y,t)")
      ->delimiter(',');
  cmd->callback([o] { run_suggest(*o); });
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

struct ScoreOptions {
  std::string pred;
  std::string truth;
  std::string output;
};

void run_score(const ScoreOptions& o) {
  const stmra::PredictionField field = stmra::read_predictions_file(o.pred);
  const stmra::PointDataset truth = stmra::read_points_file(o.truth);
  if (truth.size() != field.size())
    throw stmra::data_error("prediction and truth row counts differ: " +
                            std::to_string(field.size()) + " vs " +
                            std::to_string(truth.size()));
  std::vector<double> values;
  values.reserve(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!(truth.location(i) == field.locations[i]))
      throw stmra::data_error("prediction and truth disagree on the location "
                              "in row " +
                              std::to_string(i + 1));
    if (!truth.value(i))
      throw stmra::data_error("truth value missing in row " +
                              std::to_string(i + 1));
    values.push_back(*truth.value(i));
  }
  const stmra::ScoreReport report = stmra::score(field, values);
  std::ostringstream out;
  out.precision(17);
  out << "rmse,mae,cov2sd,r2\n"
      << report.rmse << ',' << report.mae << ',' << report.cov2sd << ','
      << report.r2 << '\n';
  write_text(o.output, out.str());
}

void register_score(CLI::App& app) {
  auto o = std::make_shared<ScoreOptions>();
  CLI::App* cmd = app.add_subcommand(
      "score", "Score a prediction CSV against true values");
  add_config_option(*cmd);
  cmd->add_option("--pred", o->pred, "Predictions CSV (x,y,t,mean,variance)")
      ->required();
  cmd->add_option("--truth", o->truth,
                  "Truth CSV (x,y,t,value), aligned with the predictions")
      ->required();
  cmd->add_option("--output", o->output, "Score CSV path (default: stdout)");
  cmd->callback([o] { run_score(*o); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stmra: multi-resolution approximation of spatiotemporal "
               "Gaussian processes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "stmra 0.1.0");
  app.footer("Environment: STMRA_THREADS limits the worker thread count.");

  register_simulate(app);
  register_partition(app);
  register_fit(app);
  register_predict(app);
  register_validate(app);
  register_suggest(app);
  register_score(app);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config_args(app, std::move(args));
    std::reverse(args.begin(), args.end());  // CLI11 pops from the back
    app.parse(std::move(args));
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems are exit 1
  } catch (const stmra::config_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const stmra::parameter_error& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return 1;
  } catch (const stmra::format_error& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const stmra::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const stmra::numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
