// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "alphaforge/data.hpp"
#include "alphaforge/engine.hpp"

namespace alphaforge {

enum class IcKind { kPearson, kSpearman };

inline constexpr int kDefaultMinObs = 20;
inline constexpr double kTradingDays = 252.0;
inline constexpr double kDefaultCostRate = 0.001;

struct IcSeries {
  std::vector<double> values;  // one per bar, missing where too few pairs
  IcKind kind = IcKind::kPearson;
  int min_obs = kDefaultMinObs;
};

/// Pearson correlation over indices where both inputs are defined; missing
/// when fewer than `min_obs` pairs or either side has zero variance.
double pearson(std::span<const double> x, std::span<const double> y, int min_obs = 2);
double spearman(std::span<const double> x, std::span<const double> y, int min_obs = 2);

/// min_obs is clamped to the instrument count (but never below 3).
IcSeries ic_series(const Matrix& alpha, const Matrix& labels, IcKind kind = IcKind::kPearson,
                   int min_obs = kDefaultMinObs);

struct IcSummary {
  double mean_ic = kMissing;
  double ic_ir = kMissing;  // missing when the sample std is 0
  int n_bars = 0;
};

/// Throws kInvalidArgument when no bar is defined; ic_ir requires two bars
/// (one defined bar throws as well).
IcSummary ic_summary(const IcSeries& series);
/// Mean over defined bars, or missing; never throws.
double mean_ic(const IcSeries& series);

struct BacktestReport {
  std::vector<double> daily_ls_returns;  // net, one per bar after the first rebalance
  std::vector<double> period_gross;
  std::vector<double> period_net;
  std::vector<double> period_turnover;
  std::vector<std::size_t> rebalance_bars;
  double mean_ic = kMissing;
  double ic_ir = kMissing;
  double rank_ic_mean = kMissing;
  double annual_return = kMissing;
  double sharpe = kMissing;
  double max_drawdown = 0.0;
  double avg_turnover = 0.0;
  int quantiles = 5;
  double cost_rate = kDefaultCostRate;
  int horizon = 5;
  int lag = 1;

  std::string to_text() const;  // key=value lines
  std::string to_json() const;
};

/// mean(daily) * 252.
double annualized_return(std::span<const double> daily);
/// mean / sample std * sqrt(252); missing when the std is 0 or n < 2.
double sharpe_ratio(std::span<const double> daily);
/// Most negative drop of the cumulative-sum equity curve (starting at 0); <= 0.
double max_drawdown(std::span<const double> daily);

/// Long-short quantile portfolio rebalanced every `horizon` bars. Forward
/// returns over (t+lag, t+lag+horizon] come from the panel's close.
BacktestReport quantile_backtest(const Matrix& alpha, const Panel& panel, int horizon = 5,
                                 int lag = 1, int quantiles = 5,
                                 double cost_rate = kDefaultCostRate);

/// Same with explicit forward returns (rows aligned to alpha) in place of
/// the panel, for fixtures and label-driven backtests.
BacktestReport quantile_backtest_returns(const Matrix& alpha, const Matrix& forward,
                                         int horizon, int quantiles, double cost_rate);

using Evaluator = std::function<AlphaMatrix(const Expr&, const Panel&)>;

/// Perturbs every field at bars > t by +10% and checks alpha rows 0..t are
/// bit-identical. The evaluator defaults to eval_batch.
bool no_lookahead_audit(const Expr& e, const Panel& panel, std::size_t t);
bool no_lookahead_audit(const Expr& e, const Panel& panel, std::size_t t, const Evaluator& eval);

std::string ic_series_to_csv(const IcSeries& series, const Panel& panel);

}  // namespace alphaforge
