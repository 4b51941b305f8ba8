/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#ifndef STMRA_LINALG_HPP
#define STMRA_LINALG_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <string>

#include "stmra/types.hpp"

namespace stmra::detail {

/// Cholesky with a diagonal jitter ladder: tries the matrix as given, then
/// adds (1e-10, 1e-8, 1e-6) * mean diagonal before giving up. Keeps
/// near-singular knot Grams (e.g. after aggressive deduplication) usable
/// while still failing loudly on genuinely indefinite input.
inline Eigen::LLT<Eigen::MatrixXd> jittered_llt(const Eigen::MatrixXd& K,
                                                const std::string& where) {
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() == Eigen::Success) return llt;
  const double base = K.rows() > 0 ? K.trace() / K.rows() : 0.0;
  for (double scale : {1e-10, 1e-8, 1e-6}) {
    Eigen::MatrixXd J = K;
    J.diagonal().array() += scale * base;
    llt.compute(J);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw numeric_error(
      "covariance factorization failed; consider raising the nugget bound",
      where);
}

}  // namespace stmra::detail

#endif  // STMRA_LINALG_HPP
