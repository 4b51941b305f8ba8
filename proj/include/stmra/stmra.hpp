/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#ifndef STMRA_STMRA_HPP
#define STMRA_STMRA_HPP

#include "stmra/covariance.hpp"
#include "stmra/dense.hpp"
#include "stmra/fit.hpp"
#include "stmra/harness.hpp"
#include "stmra/io.hpp"
#include "stmra/linalg.hpp"
#include "stmra/mra.hpp"
#include "stmra/parallel.hpp"
#include "stmra/partition.hpp"
#include "stmra/rng.hpp"
#include "stmra/transforms.hpp"
#include "stmra/types.hpp"

#endif  // STMRA_STMRA_HPP
