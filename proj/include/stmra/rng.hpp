/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#ifndef STMRA_RNG_HPP
#define STMRA_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace stmra {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Counter-based generator keyed by a user seed and a region path, so that a
/// region's random draws do not depend on the order regions are visited or on
/// the platform's distribution implementations. All sampling used by the
/// library is implemented here directly for cross-platform reproducibility.
class KeyedRng {
 public:
  explicit KeyedRng(std::uint64_t seed) : key_(detail::splitmix64(seed)) {}

  /// Derives the key for one child region: mixing in the child index at each
  /// tree level makes the key a pure function of (seed, path from root).
  KeyedRng child(std::uint64_t child_index) const {
    KeyedRng r(*this);
    r.key_ = detail::splitmix64(r.key_ ^ (0xd1b54a32d192ed03ULL + child_index));
    r.counter_ = 0;
    return r;
  }

  /// Independent substream for a named purpose (knots, noise, subsampling).
  KeyedRng stream(std::uint64_t tag) const {
    KeyedRng r(*this);
    r.key_ = detail::splitmix64(r.key_ ^ (0x8cb92ba72f3d8dd7ULL + tag));
    r.counter_ = 0;
    return r;
  }

  std::uint64_t next_u64() { return detail::splitmix64(key_ + ++counter_); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call; no state caching so
  /// draws stay a pure function of the counter).
  double normal() {
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Integer uniform on [0, n) by rejection (n > 0).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Samples k distinct indices from [0, n) via a partial Fisher-Yates pass;
  /// output order is the shuffle order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (k > n) k = n;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace stmra

#endif  // STMRA_RNG_HPP
