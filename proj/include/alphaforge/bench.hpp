// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alphaforge/dsl.hpp"

namespace alphaforge {

struct BenchCase {
  std::string name;    // "batch" or "streaming"
  int threads = 1;
  double wall_seconds = 0.0;  // best of `repeats`
  double cells_per_second = 0.0;
  double speedup = 1.0;       // 1-thread batch time / this time
};

struct BenchReport {
  std::string expr_text;
  int n_dates = 0;
  int n_instruments = 0;
  std::uint64_t seed = 0;
  int repeats = 1;
  bool outputs_identical = true;
  std::vector<BenchCase> cases;

  std::string to_markdown() const;
  std::string to_json() const;
};

struct BenchOptions {
  int n_dates = 1000;
  int n_instruments = 500;
  std::vector<int> threads{1, 2, 4};
  std::uint64_t seed = 0;
  int repeats = 3;
  bool include_streaming = true;
};

/// Times eval_batch at each thread count (1 thread always first) on seeded
/// synthetic data. Throws kRuntime when any thread count disagrees bitwise
/// with the 1-thread output.
BenchReport bench_eval(const Expr& e, const BenchOptions& opt);

}  // namespace alphaforge
