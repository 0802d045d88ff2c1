// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <set>
#include <string>
#include <vector>

#include "alphaforge/gp.hpp"
#include "alphaforge/semantics.hpp"

namespace oracle {

/// `n` distinct expressions that pass validate, grown with random target
/// units and depths from one seed.
inline std::vector<alphaforge::Expr> random_valid_exprs(int n, std::uint64_t seed, int max_depth = 6) {
  using namespace alphaforge;
  GpConfig cfg;
  Rng rng(seed);
  const Unit units[] = {kDimensionless, kPriceUnit, kVolumeUnit};
  std::vector<Expr> out;
  std::set<std::string> seen;
  for (int attempt = 0; static_cast<int>(out.size()) < n && attempt < 100 * n; ++attempt) {
    const Unit u = units[rng.index(3)];
    const int d = static_cast<int>(rng.uniform_int(2, max_depth));
    auto e = grow_typed(u, d, rng.bernoulli(0.5), cfg, rng);
    if (!e) continue;
    const std::string text = print_expr(*e);
    if (seen.count(text) || !validate_expr(*e).valid()) continue;
    seen.insert(text);
    out.push_back(std::move(*e));
  }
  return out;
}

}  // namespace oracle
