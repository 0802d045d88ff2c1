// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "alphaforge/data.hpp"
#include "alphaforge/dsl.hpp"
#include "alphaforge/rng.hpp"
#include "alphaforge/semantics.hpp"

namespace alphaforge {

struct GpConfig {
  int population_size = 200;
  int generations = 30;
  int tournament_k = 4;
  double p_crossover = 0.7;
  double p_mutation = 0.25;
  double p_reproduction = 0.05;
  int max_depth = kDefaultMaxDepth;
  int init_depth_min = 2;
  int init_depth_max = 5;
  double parsimony = 0.002;
  double diversity_corr_cap = 0.7;
  int patience = 5;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  int elitism_count = 2;
  int max_invalid_retries = 20;

  // Knobs beyond the core set.
  int max_window = 30;         // upper bound for freshly sampled windows
  int hall_of_fame_size = 10;
  int workers = 1;             // fitness evaluation threads
  int min_obs = 20;            // per-bar pairs required for an IC value

  /// Throws kConfig describing the first violated constraint.
  void check() const;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Ramped half-and-half growth of unit-consistent trees. Every member
/// passes validate; failed draws fall back to cs_rank(ts_delta(close, 1)).
/// Throws kInvalidArgument naming a seed that fails validation.
std::vector<Expr> init_population(const GpConfig& cfg, const std::vector<Expr>& seeds, Rng& rng);

/// Random tree whose inferred unit is `target`, depth <= `max_depth`.
/// `full` grows every branch to the depth limit. Returns nullopt when the
/// unit cannot be realized within the depth.
std::optional<Expr> grow_typed(const Unit& target, int max_depth, bool full, const GpConfig& cfg,
                               Rng& rng);

/// Unit-blind random tree over the same grammar (baseline for measuring
/// how often unconstrained generation violates the unit rules).
Expr grow_unconstrained(int max_depth, const GpConfig& cfg, Rng& rng);

/// Swaps a unit-compatible donor subtree of `b` into `a`; returns `a`
/// unchanged when no compatible pair is found within the retry budget.
Expr crossover(const Expr& a, const Expr& b, const GpConfig& cfg, Rng& rng);

enum class MutationKind { kSubtree, kTerminal, kWindow, kOperator };

/// Applies one mutation (random kind unless `kind` is given). The result
/// is unit-valid and within max_depth, or the input on repeated failure.
Expr mutate(const Expr& e, const GpConfig& cfg, Rng& rng,
            std::optional<MutationKind> kind = std::nullopt);

/// |mean IC| - parsimony * complexity on the given panel and labels;
/// kNegInf when the IC series has no defined bar.
double fitness(const Expr& e, const Panel& train_panel, const Matrix& train_labels, const GpConfig& cfg);

struct HallOfFameEntry {
  Expr expr;            // sign-corrected orientation
  std::string text;
  double train_fitness = kNegInf;
  double train_mean_ic = 0.0;  // after orientation, so >= 0
  double validation_mean_ic = 0.0;
  int complexity = 0;
};

struct GenerationStats {
  int generation = 0;
  double best_fitness = kNegInf;
  double mean_fitness = kNegInf;  // over members with finite fitness
  double best_validation_ic = 0.0;
  int finite_members = 0;
};

struct SearchResult {
  std::vector<HallOfFameEntry> hall_of_fame;  // validation IC descending
  int generations_run = 0;
  bool early_stopped = false;
  std::vector<GenerationStats> history;
  std::uint64_t seed = 0;

  std::string to_json() const;
  /// One AlphaRecord-shaped JSON object per line.
  std::string hall_of_fame_jsonl() const;
};

struct EvolveHooks {
  /// Called for every expression placed into a generation's population.
  std::function<void(const Expr&)> on_member;
  /// Replace the computed training fitness (test fixtures).
  std::function<double(const Expr&, double)> fitness_override;
  /// Replace the computed validation mean IC (test fixtures).
  std::function<double(const Expr&, double)> validation_override;
};

/// Chronological train/validation split of `panel` and `labels`; the last
/// horizon + lag training label rows are blanked so no label reaches into
/// the validation slice.
SearchResult evolve(const GpConfig& cfg, const Panel& panel, const LabelMatrix& labels,
                    const std::vector<Expr>& seeds, const std::vector<Expr>& pool_exprs,
                    const EvolveHooks& hooks = {});

/// Pearson correlation of two alpha matrices over jointly defined cells.
double alpha_correlation(const Matrix& a, const Matrix& b);

}  // namespace alphaforge
