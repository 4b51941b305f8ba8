/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#ifndef STMRA_FIT_HPP
#define STMRA_FIT_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stmra/covariance.hpp"
#include "stmra/mra.hpp"
#include "stmra/partition.hpp"
#include "stmra/rng.hpp"
#include "stmra/types.hpp"

namespace stmra {

// ---------------------------------------------------------------------------
// Specification and result
// ---------------------------------------------------------------------------

enum class Optimizer {
  derivative_free,  // simplex search with box projection (default)
  quasi_newton,     // BFGS with central-difference gradients
};

/// Bound-constrained maximum-likelihood setup. Parameters are optimized on
/// the logarithmic scale, so every value and bound must be positive.
struct FitSpec {
  std::vector<double> theta0;
  std::vector<double> lower;
  std::vector<double> upper;
  int max_evaluations = 500;
  double ftol_abs = 1.0;
  Optimizer optimizer = Optimizer::derivative_free;
  int restarts = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (theta0.empty()) throw config_error("fit requires parameters");
    if (lower.size() != theta0.size() || upper.size() != theta0.size())
      throw config_error("bounds must match the parameter count");
    for (std::size_t i = 0; i < theta0.size(); ++i) {
      if (!(lower[i] > 0.0) || !std::isfinite(upper[i]) ||
          lower[i] > upper[i])
        throw config_error("bounds must satisfy 0 < lower <= upper");
      if (!(theta0[i] >= lower[i]) || !(theta0[i] <= upper[i]))
        throw config_error("initial values must lie within the bounds");
    }
    if (!(ftol_abs > 0.0)) throw config_error("ftol_abs must be positive");
    if (max_evaluations < 1)
      throw config_error("max_evaluations must be at least 1");
    if (restarts < 0) throw config_error("restarts must be nonnegative");
  }
};

struct FitEvaluation {
  std::vector<double> theta;
  double loglik = 0.0;
  double seconds = 0.0;  // since the start of the fit
};

struct FitResult {
  std::vector<double> theta;
  double loglik = -std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;
  bool bound_active = false;
  std::vector<FitEvaluation> trace;
};

/// One row per evaluation: index, elapsed seconds, log-likelihood, then the
/// parameter values.
inline void write_trace_csv(const FitResult& result, std::ostream& out) {
  out << "evaluation,seconds,loglik";
  const std::size_t k = result.theta.size();
  for (std::size_t i = 0; i < k; ++i) out << ",theta_" << i;
  out << '\n';
  out.precision(17);
  for (std::size_t e = 0; e < result.trace.size(); ++e) {
    const FitEvaluation& row = result.trace[e];
    out << e << ',' << row.seconds << ',' << row.loglik;
    for (double v : row.theta) out << ',' << v;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Optimizer internals
// ---------------------------------------------------------------------------

namespace detail {

/// Budgeted objective over log-parameters. Records every evaluation in the
/// trace; numerical failures inside the likelihood count as -infinity so the
/// search backs away from them.
class LogScaleObjective {
 public:
  LogScaleObjective(const std::function<double(const std::vector<double>&)>& fn,
                    const FitSpec& spec, FitResult& result)
      : fn_(fn),
        spec_(spec),
        result_(result),
        start_(std::chrono::steady_clock::now()) {}

  std::size_t dim() const { return spec_.theta0.size(); }
  double lo(std::size_t i) const { return std::log(spec_.lower[i]); }
  double hi(std::size_t i) const { return std::log(spec_.upper[i]); }
  bool exhausted() const {
    return result_.evaluations >= spec_.max_evaluations;
  }

  Eigen::VectorXd project(Eigen::VectorXd x) const {
    for (std::size_t i = 0; i < dim(); ++i)
      x[static_cast<Eigen::Index>(i)] =
          std::clamp(x[static_cast<Eigen::Index>(i)], lo(i), hi(i));
    return x;
  }

  /// Negated log-likelihood at log-parameters x (minimization convention).
  double operator()(const Eigen::VectorXd& x) {
    ++result_.evaluations;
    std::vector<double> theta(dim());
    for (std::size_t i = 0; i < dim(); ++i)
      theta[i] = std::clamp(std::exp(x[static_cast<Eigen::Index>(i)]),
                            spec_.lower[i], spec_.upper[i]);
    double ll;
    try {
      ll = fn_(theta);
    } catch (const numeric_error&) {
      ll = -std::numeric_limits<double>::infinity();
    } catch (const parameter_error&) {
      // e.g. a proposed nugget weight outside the model's open interval
      ll = -std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(ll)) ll = -std::numeric_limits<double>::infinity();
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      start_)
            .count();
    result_.trace.push_back({std::move(theta), ll, seconds});
    return -ll;
  }

 private:
  const std::function<double(const std::vector<double>&)>& fn_;
  const FitSpec& spec_;
  FitResult& result_;
  std::chrono::steady_clock::time_point start_;
};

/// Nelder-Mead simplex with candidate points projected into the box. Returns
/// true if the simplex collapsed below the function tolerance before the
/// budget ran out.
inline bool simplex_search(LogScaleObjective& obj, const Eigen::VectorXd& x0,
                           double ftol) {
  const auto n = static_cast<Eigen::Index>(obj.dim());
  std::vector<Eigen::VectorXd> xs;
  std::vector<double> fs;
  xs.push_back(obj.project(x0));
  fs.push_back(obj(xs[0]));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (obj.exhausted()) return false;
    Eigen::VectorXd x = xs[0];
    const double span =
        obj.hi(static_cast<std::size_t>(i)) - obj.lo(static_cast<std::size_t>(i));
    double step = span > 0.0 ? 0.05 * span : 0.1;
    if (x[i] + step > obj.hi(static_cast<std::size_t>(i))) step = -step;
    x[i] += step;
    xs.push_back(obj.project(x));
    fs.push_back(obj(xs.back()));
  }

  std::vector<std::size_t> order(xs.size());
  while (!obj.exhausted()) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];
    if (std::isfinite(fs[worst]) && fs[worst] - fs[best] <= ftol) return true;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < order.size(); ++i)
      if (order[i] != worst) centroid += xs[order[i]];
    centroid /= static_cast<double>(xs.size() - 1);

    const Eigen::VectorXd reflected =
        obj.project(centroid + (centroid - xs[worst]));
    const double fr = obj(reflected);
    if (fr < fs[best]) {
      if (obj.exhausted()) return false;
      const Eigen::VectorXd expanded =
          obj.project(centroid + 2.0 * (centroid - xs[worst]));
      const double fe = obj(expanded);
      if (fe < fr) {
        xs[worst] = expanded;
        fs[worst] = fe;
      } else {
        xs[worst] = reflected;
        fs[worst] = fr;
      }
      continue;
    }
    if (fr < fs[second]) {
      xs[worst] = reflected;
      fs[worst] = fr;
      continue;
    }
    if (obj.exhausted()) return false;
    const Eigen::VectorXd contracted =
        fr < fs[worst]
            ? obj.project(centroid + 0.5 * (centroid - xs[worst]))
            : obj.project(centroid - 0.5 * (centroid - xs[worst]));
    const double fc = obj(contracted);
    if (fc < std::min(fr, fs[worst])) {
      xs[worst] = contracted;
      fs[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i == best) continue;
      if (obj.exhausted()) return false;
      xs[i] = obj.project(xs[best] + 0.5 * (xs[i] - xs[best]));
      fs[i] = obj(xs[i]);
    }
  }
  return false;
}

/// Central-difference gradient with probes clamped into the box; the step is
/// 1e-4 relative to the coordinate.
inline Eigen::VectorXd numeric_gradient(LogScaleObjective& obj,
                                        const Eigen::VectorXd& x,
                                        bool& ran_out) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (obj.exhausted()) {
      ran_out = true;
      return g;
    }
    const double h = 1e-4 * std::max(1.0, std::abs(x[i]));
    Eigen::VectorXd fwd = x;
    Eigen::VectorXd bwd = x;
    fwd[i] = std::min(x[i] + h, obj.hi(static_cast<std::size_t>(i)));
    bwd[i] = std::max(x[i] - h, obj.lo(static_cast<std::size_t>(i)));
    const double span = fwd[i] - bwd[i];
    if (span <= 0.0) continue;  // degenerate box along this axis
    const double ff = obj(fwd);
    if (obj.exhausted()) {
      ran_out = true;
      return g;
    }
    const double fb = obj(bwd);
    g[i] = (ff - fb) / span;
  }
  return g;
}

/// Projected BFGS with backtracking line search on the log scale.
inline bool bfgs_search(LogScaleObjective& obj, const Eigen::VectorXd& x0,
                        double ftol) {
  const auto n = static_cast<Eigen::Index>(obj.dim());
  Eigen::VectorXd x = obj.project(x0);
  double fx = obj(x);
  bool ran_out = false;
  Eigen::VectorXd g = numeric_gradient(obj, x, ran_out);
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);

  while (!ran_out && !obj.exhausted()) {
    Eigen::VectorXd d = -(h * g);
    if (d.dot(g) >= 0.0) {
      h.setIdentity();
      d = -g;
    }
    double alpha = 1.0;
    Eigen::VectorXd xn = x;
    double fn = fx;
    bool accepted = false;
    for (int ls = 0; ls < 40 && !obj.exhausted(); ++ls) {
      const Eigen::VectorXd cand = obj.project(x + alpha * d);
      if ((cand - x).norm() == 0.0) break;
      const double fc = obj(cand);
      if (fc <= fx + 1e-4 * g.dot(cand - x)) {
        xn = cand;
        fn = fc;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) return std::isfinite(fx);
    const bool small_change = std::isfinite(fn) && fx - fn <= ftol;
    Eigen::VectorXd gn = numeric_gradient(obj, xn, ran_out);
    if (ran_out || obj.exhausted()) return false;

    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd yv = gn - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(n, n);
      h = (ident - rho * s * yv.transpose()) * h *
              (ident - rho * yv * s.transpose()) +
          rho * s * s.transpose();
    }
    x = xn;
    fx = fn;
    g = gn;
    if (small_change) return true;
  }
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

/// Maximizes a log-likelihood over box-constrained positive parameters. The
/// search runs on log-transformed coordinates; the returned parameters are
/// the best evaluation in the trace, clamped into the bounds. Optional
/// seeded restarts redraw the starting point uniformly in the log box.
inline FitResult fit(const std::function<double(const std::vector<double>&)>& loglik,
                     const FitSpec& spec) {
  spec.validate();
  FitResult result;
  detail::LogScaleObjective obj(loglik, spec, result);

  const auto n = static_cast<Eigen::Index>(spec.theta0.size());
  Eigen::VectorXd x0(n);
  for (Eigen::Index i = 0; i < n; ++i) x0[i] = std::log(spec.theta0[i]);

  bool converged = false;
  KeyedRng rng(spec.seed);
  for (int run = 0; run <= spec.restarts && !obj.exhausted(); ++run) {
    Eigen::VectorXd start = x0;
    if (run > 0) {
      KeyedRng draw = rng.child(run);
      for (Eigen::Index i = 0; i < n; ++i)
        start[i] = draw.uniform(obj.lo(static_cast<std::size_t>(i)),
                                obj.hi(static_cast<std::size_t>(i)));
    }
    const bool ok = spec.optimizer == Optimizer::derivative_free
                        ? detail::simplex_search(obj, start, spec.ftol_abs)
                        : detail::bfgs_search(obj, start, spec.ftol_abs);
    converged = converged || ok;
    if (run == 0 && !std::isfinite(result.trace.front().loglik))
      throw parameter_error(
          "log-likelihood is not finite at the initial parameters");
  }
  result.converged = converged;

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.trace.size(); ++i)
    if (result.trace[i].loglik > result.trace[best].loglik) best = i;
  result.theta = result.trace[best].theta;
  result.loglik = result.trace[best].loglik;
  for (std::size_t i = 0; i < result.theta.size(); ++i) {
    const double span = spec.upper[i] - spec.lower[i];
    const double margin = 1e-10 * std::max(span, spec.upper[i]);
    if (result.theta[i] <= spec.lower[i] + margin ||
        result.theta[i] >= spec.upper[i] - margin)
      result.bound_active = true;
  }
  return result;
}

/// Maximum-likelihood fit of a covariance family on a frozen partition: the
/// tree (and its random knots) is fixed for the whole fit and the model is
/// refactorized at every parameter value. The spec's bounds replace the
/// model's own parameter bounds during the search.
inline FitResult fit(const PartitionTree& tree, const CovarianceModel& cov,
                     const std::vector<double>& y, const FitSpec& spec,
                     unsigned max_threads = 0) {
  auto objective = [&](const std::vector<double>& theta) {
    const CovarianceModel at(
        cov.family(), ThetaVector(theta, spec.lower, spec.upper),
        cov.metric());
    const MraModel model(tree, at, max_threads);
    return mra_loglik(model, y, max_threads);
  };
  return fit(objective, spec);
}

}  // namespace stmra

#endif  // STMRA_FIT_HPP
