// SPDX-License-Identifier: Apache-2.0
#pragma once
// Enumerates small panels (5 bars x 4 instruments) across every operator,
// every legal window up to the panel length, and a fixed family of missing
// masks, comparing both evaluators with the naive cell oracles.

#include <string>
#include <vector>

#include "alphaforge/engine.hpp"
#include "oracles.hpp"

namespace oracle {

struct KernelCaseResult {
  std::string op;
  int cases = 0;
  double max_abs = 0.0;
  std::size_t mask_mismatches = 0;
};

/// Missing masks over a T x N grid: none, each single cell, each column,
/// each row, and `random_masks` Bernoulli(0.3) masks.
inline std::vector<std::vector<bool>> mask_family(std::size_t T, std::size_t N, alphaforge::Rng& rng,
                                                  int random_masks) {
  std::vector<std::vector<bool>> masks;
  masks.emplace_back(T * N, false);
  for (std::size_t k = 0; k < T * N; ++k) {
    masks.emplace_back(T * N, false);
    masks.back()[k] = true;
  }
  for (std::size_t i = 0; i < N; ++i) {
    masks.emplace_back(T * N, false);
    for (std::size_t t = 0; t < T; ++t) masks.back()[t * N + i] = true;
  }
  for (std::size_t t = 0; t < T; ++t) {
    masks.emplace_back(T * N, false);
    for (std::size_t i = 0; i < N; ++i) masks.back()[t * N + i] = true;
  }
  for (int r = 0; r < random_masks; ++r) {
    masks.emplace_back(T * N, false);
    for (std::size_t k = 0; k < T * N; ++k) masks.back()[k] = rng.bernoulli(0.3);
  }
  return masks;
}

inline Matrix apply_mask(Matrix m, const std::vector<bool>& mask) {
  for (std::size_t k = 0; k < m.data.size(); ++k)
    if (mask[k]) m.data[k] = kNaN;
  return m;
}

inline void accumulate(KernelCaseResult& r, const Matrix& expect, const Matrix& got) {
  const Diff d = compare(expect, got);
  r.max_abs = std::max(r.max_abs, d.max_abs);
  r.mask_mismatches += d.mask_mismatches;
  ++r.cases;
}

inline std::vector<KernelCaseResult> run_kernel_oracles(std::uint64_t seed, int draws = 3, int random_masks = 8) {
  using namespace alphaforge;
  constexpr std::size_t T = 5, N = 4;
  Rng rng(seed);
  std::vector<KernelCaseResult> results;
  for (const auto& info : operator_table()) {
    KernelCaseResult res;
    res.op = std::string(info.name);
    std::vector<int> windows{0};
    if (info.window_slot >= 0) {
      windows.clear();
      for (int w = info.min_window; w <= static_cast<int>(T); ++w) windows.push_back(w);
    }
    const bool binary = (info.category == OpCategory::kElementwise && info.arity == 2) || info.op == Op::kTsCorr;
    for (int draw = 0; draw < draws; ++draw) {
      // Narrow integer ranges force ties, zeros and non-positive log inputs.
      const Matrix xb = random_matrix(T, N, rng, 0.0, -3, 3);
      const Matrix yb = random_matrix(T, N, rng, 0.0, -2, 2);
      const auto masks = mask_family(T, N, rng, random_masks);
      for (std::size_t mi = 0; mi < masks.size(); ++mi) {
        const Matrix x = apply_mask(xb, masks[mi]);
        const Matrix y = apply_mask(yb, masks[(mi * 7 + static_cast<std::size_t>(draw)) % masks.size()]);
        for (int groups : {2, 3}) {
          std::map<std::string, Matrix, std::less<>> fields{{"x", x}, {"y", y}};
          const Panel panel = make_panel(std::move(fields), groups);
          for (int w : windows) {
            std::vector<Expr> args{Expr::field_ref("x")};
            if (binary) args.push_back(Expr::field_ref("y"));
            if (info.window_slot >= 0) args.push_back(Expr::int_lit(w));
            const Expr e = Expr::call(info.op, args);
            Matrix expect;
            switch (info.category) {
              case OpCategory::kElementwise: expect = elementwise(info.op, x, binary ? &y : nullptr); break;
              case OpCategory::kTimeSeries: expect = ts_op(info.op, x, binary ? &y : nullptr, w); break;
              default: expect = cs_op(info.op, x, panel.sector_ids()); break;
            }
            accumulate(res, expect, eval_batch(e, panel, 1).values);
            accumulate(res, expect, eval_streaming(e, panel).values);
          }
        }
      }
    }
    results.push_back(res);
  }
  return results;
}

}  // namespace oracle
