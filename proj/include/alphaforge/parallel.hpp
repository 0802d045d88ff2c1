// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace alphaforge {

/// Splits [0, n) into `workers` contiguous chunks and runs fn(begin, end) on
/// each. Chunk boundaries depend only on (n, workers); the first exception
/// thrown by any chunk is rethrown on the caller's thread.
inline void parallel_for(std::size_t n, int workers,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t w = std::clamp<std::size_t>(workers < 1 ? 1 : workers, 1, n == 0 ? 1 : n);
  if (w <= 1) {
    if (n > 0) fn(0, n);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::thread> pool;
  pool.reserve(w - 1);
  auto chunk = [&](std::size_t k) {
    const std::size_t begin = n * k / w;
    const std::size_t end = n * (k + 1) / w;
    try {
      fn(begin, end);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  for (std::size_t k = 1; k < w; ++k) pool.emplace_back(chunk, k);
  chunk(0);
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace alphaforge
