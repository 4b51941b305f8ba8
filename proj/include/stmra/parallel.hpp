/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#ifndef STMRA_PARALLEL_HPP
#define STMRA_PARALLEL_HPP

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace stmra {

/// Thread budget: the STMRA_THREADS environment variable if set to a positive
/// integer, otherwise the hardware concurrency (at least 1).
inline unsigned thread_budget() {
  if (const char* env = std::getenv("STMRA_THREADS")) {
    unsigned v = 0;
    const char* end = env + std::string(env).size();
    auto [p, ec] = std::from_chars(env, end, v);
    if (ec == std::errc{} && p == end && v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

/// Runs fn(i) for i in [0, count). Work is distributed over the thread budget
/// with an atomic cursor; iterations must be independent. Results written by
/// index keep assembly deterministic regardless of scheduling. The first
/// exception thrown by any iteration is rethrown on the caller thread.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn, unsigned max_threads = 0) {
  if (count == 0) return;
  unsigned threads = max_threads > 0 ? max_threads : thread_budget();
  if (threads > count) threads = static_cast<unsigned>(count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> cursor{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::atomic_flag error_claim = ATOMIC_FLAG_INIT;

  auto worker = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t i = cursor.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        if (!error_claim.test_and_set()) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (unsigned w = 1; w < threads; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace stmra

#endif  // STMRA_PARALLEL_HPP
