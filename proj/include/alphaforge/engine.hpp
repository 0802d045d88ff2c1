// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alphaforge/data.hpp"
#include "alphaforge/dsl.hpp"

namespace alphaforge {

/// Alpha values aligned to the source panel's axes.
struct AlphaMatrix {
  Matrix values;
  std::string expr_text;
};

/// Warm-up length: max over root-to-leaf paths of the summed (w - 1) for
/// windows and d for delays.
int lookback(const Expr& e);

/// Whole-matrix evaluation. Time-series kernels run on instrument
/// partitions, cross-sectional kernels row by row; output is bit-identical
/// for every `threads` value. Throws kInvalidArgument for an absent field.
AlphaMatrix eval_batch(const Expr& e, const Panel& panel, int threads = 1);

/// Bar-by-bar evaluation with per-node incremental state. Each push advances
/// every node once, time-series nodes before the cross-sectional barrier.
class StreamEvaluator {
 public:
  /// `sector_ids` gives each instrument's group index (see Panel::sector_ids).
  StreamEvaluator(const Expr& e, std::vector<int> sector_ids);
  ~StreamEvaluator();
  StreamEvaluator(StreamEvaluator&&) noexcept;
  StreamEvaluator& operator=(StreamEvaluator&&) noexcept;

  /// Fields required by push_bar, sorted.
  const std::vector<std::string>& fields() const;
  std::size_t n_instruments() const;

  /// `rows[k]` is the bar's row (N values) for fields()[k]. Returns the
  /// alpha row for this bar; valid until the next push.
  std::span<const double> push_bar(std::span<const std::span<const double>> rows);

  std::size_t bars_seen() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Streams every bar of `panel` through a StreamEvaluator. When
/// `stop_after` is set, stops after that bar (rows past it are missing).
AlphaMatrix eval_streaming(const Expr& e, const Panel& panel,
                           std::optional<std::size_t> stop_after = std::nullopt);

// Cross-sectional row kernels (shared by both evaluators). All skip missing
// entries and emit an all-missing row when fewer than two are defined.
void cs_rank_row(std::span<const double> in, std::span<double> out);
void cs_zscore_row(std::span<const double> in, std::span<double> out);
void group_mean_row(std::span<const double> in, std::span<const int> groups, int n_groups,
                    std::span<double> out);
void group_neutralize_row(std::span<const double> in, std::span<const int> groups,
                          int n_groups, std::span<double> out);

/// CSV with a date column and one column per instrument; missing = empty cell.
std::string alpha_to_csv(const AlphaMatrix& alpha, const Panel& panel);
void write_alpha_csv(const AlphaMatrix& alpha, const Panel& panel,
                     const std::filesystem::path& path);

}  // namespace alphaforge
