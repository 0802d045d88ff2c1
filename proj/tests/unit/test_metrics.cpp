// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <json.hpp>
#include <numeric>

#include "alphaforge/metrics.hpp"
#include "alphaforge/semantics.hpp"
#include "oracles.hpp"
#include "random_exprs.hpp"

using namespace alphaforge;

namespace {

Panel synth(int T, int N, std::uint64_t seed) {
  SynthOptions o;
  o.n_dates = T;
  o.n_instruments = N;
  o.seed = seed;
  return generate_synthetic(o).panel;
}

double naive_mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double naive_sd(const std::vector<double>& v) {
  const double m = naive_mean(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Centered 5-bar mean: peeks two bars ahead.
AlphaMatrix centered_mean(const Expr&, const Panel& p) {
  const Matrix& c = p.field("close");
  AlphaMatrix a{Matrix(c.rows, c.cols), "centered"};
  for (std::size_t t = 2; t + 2 < c.rows; ++t)
    for (std::size_t i = 0; i < c.cols; ++i) {
      double s = 0;
      for (std::size_t k = t - 2; k <= t + 2; ++k) s += c(k, i);
      a.values(t, i) = s / 5.0;
    }
  return a;
}

}  // namespace

TEST(Ic, FourInstrumentExample) {
  const Matrix a = oracle::from_rows({{1, 2, 3, 4}});
  const Matrix l = oracle::from_rows({{1, 3, 2, 4}});
  const auto s = ic_series(a, l, IcKind::kPearson, 3);
  EXPECT_NEAR(s.values[0], 0.8, 1e-15);
}

TEST(Ic, AntiAndPerfect) {
  const Matrix a = oracle::from_rows({{1, 2, 3}});
  const Matrix l = oracle::from_rows({{3, 2, 1}});
  EXPECT_NEAR(ic_series(a, l, IcKind::kPearson, 3).values[0], -1.0, 1e-15);
  EXPECT_NEAR(ic_series(a, l, IcKind::kSpearman, 3).values[0], -1.0, 1e-15);
  const Panel p = synth(60, 10, 2);
  const auto fwd = forward_returns(p);
  for (double v : ic_series(fwd.values, fwd.values, IcKind::kPearson, 3).values) {
    if (!is_missing(v)) EXPECT_NEAR(v, 1.0, 1e-12);
  }
}

TEST(Ic, MinObsRules) {
  const Matrix a = oracle::from_rows({{1, 2, 3, kMissing}, {1, 2, 3, 4}});
  const Matrix l = oracle::from_rows({{1, 3, 2, 4}, {1, 3, 2, 4}});
  EXPECT_THROW(ic_series(a, l, IcKind::kPearson, 2), Error);
  const auto s = ic_series(a, l, IcKind::kPearson, 4);
  EXPECT_TRUE(is_missing(s.values[0]));
  EXPECT_FALSE(is_missing(s.values[1]));
  // min_obs above N clamps to N.
  EXPECT_FALSE(is_missing(ic_series(a, l, IcKind::kPearson, 20).values[1]));
  EXPECT_THROW(ic_series(a, oracle::from_rows({{1, 2}}), IcKind::kPearson, 3), Error);
}

TEST(Ic, PearsonAffineAndSpearmanMonotoneInvariance) {
  const Panel p = synth(80, 15, 5);
  const auto fwd = forward_returns(p).values;
  const Matrix a = eval_batch(parse("ts_delta(close, 3)"), p).values;
  Matrix affine = a, mono = a;
  for (double& v : affine.data) v = 3.5 * v + 7.0;
  for (double& v : mono.data) v = std::exp(v / 10.0) + v * v * v;
  const auto p0 = ic_series(a, fwd, IcKind::kPearson, 3), p1 = ic_series(affine, fwd, IcKind::kPearson, 3);
  const auto s0 = ic_series(a, fwd, IcKind::kSpearman, 3), s1 = ic_series(mono, fwd, IcKind::kSpearman, 3);
  for (std::size_t t = 0; t < p0.values.size(); ++t) {
    if (is_missing(p0.values[t])) continue;
    EXPECT_NEAR(p0.values[t], p1.values[t], 1e-12);
    EXPECT_EQ(s0.values[t], s1.values[t]);
  }
}

TEST(Ic, MatchesNaiveCorrelation) {
  const Panel p = synth(60, 12, 9);
  const auto fwd = forward_returns(p).values;
  const Matrix a = eval_batch(parse("ts_mean(volume, 4)"), p).values;
  const auto s = ic_series(a, fwd, IcKind::kPearson, 3);
  for (std::size_t t = 0; t < 60; ++t) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < 12; ++i)
      if (!is_missing(a(t, i)) && !is_missing(fwd(t, i))) {
        x.push_back(a(t, i));
        y.push_back(fwd(t, i));
      }
    if (x.size() < 12) {
      EXPECT_TRUE(is_missing(s.values[t]));
    } else {
      EXPECT_NEAR(s.values[t], oracle::pearson(x, y), 1e-12);
    }
  }
}

TEST(IcSummaryTest, Examples) {
  IcSeries s;
  s.values = {0.1, kMissing, 0.2, 0.3};
  const auto r = ic_summary(s);
  EXPECT_NEAR(r.mean_ic, 0.2, 1e-15);
  EXPECT_NEAR(r.ic_ir, 2.0, 1e-12);
  EXPECT_EQ(r.n_bars, 3);
  s.values = {0.1, 0.1};
  EXPECT_TRUE(is_missing(ic_summary(s).ic_ir));
  s.values = {0.1, kMissing};
  EXPECT_THROW(ic_summary(s), Error);
  EXPECT_NEAR(mean_ic(s), 0.1, 1e-15);
  s.values = {kMissing};
  EXPECT_THROW(ic_summary(s), Error);
  EXPECT_TRUE(is_missing(mean_ic(s)));
}

TEST(Backtest, OneRebalanceExample) {
  const Matrix a = oracle::from_rows({{1, 2, 3, 4}});
  const Matrix f = oracle::from_rows({{0.01, 0.02, 0.03, 0.04}});
  const auto r = quantile_backtest_returns(a, f, 1, 2, 0.001);
  ASSERT_EQ(r.period_net.size(), 1u);
  EXPECT_NEAR(r.period_gross[0], 0.02, 1e-15);
  EXPECT_EQ(r.period_turnover[0], 2.0);
  EXPECT_NEAR(r.period_net[0], 0.018, 1e-15);
}

TEST(Backtest, BruteForceThreeBarsSixNames) {
  const Matrix a = oracle::from_rows({{0.3, -1.0, 2.0, 0.5, 0.5, 1.1}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}, {6.0, 5.0, 4.0, 3.0, 2.0, 1.0}});
  const Matrix f = oracle::from_rows({{0.010, -0.020, 0.030, 0.000, 0.015, -0.005},
                                      {-0.010, 0.020, 0.004, 0.012, -0.030, 0.025},
                                      {0.002, 0.001, -0.004, 0.006, 0.009, -0.011}});
  const int q = 3;
  const double cost = 0.0025;
  const auto r = quantile_backtest_returns(a, f, 1, q, cost);

  // Hand enumeration: position of each name in the stable ascending order.
  std::vector<double> prev(6, 0.0), daily;
  for (std::size_t t = 0; t < 3; ++t) {
    std::vector<double> w(6, 0.0);
    double long_sum = 0, short_sum = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      std::size_t pos = 0;
      for (std::size_t j = 0; j < 6; ++j)
        if (a(t, j) < a(t, i) || (a(t, j) == a(t, i) && j < i)) ++pos;
      if (pos < 2) {
        w[i] = -0.5;
        short_sum += f(t, i);
      } else if (pos >= 4) {
        w[i] = 0.5;
        long_sum += f(t, i);
      }
    }
    const double gross = long_sum / 2 - short_sum / 2;
    double turnover = 0;
    for (std::size_t i = 0; i < 6; ++i) turnover += std::fabs(w[i] - prev[i]);
    prev = w;
    EXPECT_NEAR(r.period_gross[t], gross, 1e-12);
    EXPECT_NEAR(r.period_turnover[t], turnover, 1e-12);
    EXPECT_NEAR(r.period_net[t], gross - cost * turnover, 1e-12);
    daily.push_back(gross - cost * turnover);
  }
  ASSERT_EQ(r.daily_ls_returns.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(r.daily_ls_returns[t], daily[t], 1e-12);
  EXPECT_NEAR(r.annual_return, naive_mean(daily) * 252, 1e-12);
  EXPECT_NEAR(r.sharpe, naive_mean(daily) / naive_sd(daily) * std::sqrt(252.0), 1e-12);
  double eq = 0, peak = 0, dd = 0;
  for (double d : daily) {
    eq += d;
    peak = std::max(peak, eq);
    dd = std::min(dd, eq - peak);
  }
  EXPECT_NEAR(r.max_drawdown, dd, 1e-12);
}

TEST(Backtest, PerfectForesightNeverLoses) {
  const Panel p = synth(120, 20, 4);
  const auto fwd = forward_returns(p, 5, 1).values;
  const auto r = quantile_backtest_returns(fwd, fwd, 5, 5, 0.0);
  ASSERT_FALSE(r.period_gross.empty());
  for (double g : r.period_gross) EXPECT_GE(g, 0.0);
}

TEST(Backtest, CostLinearityAndConservation) {
  const Panel p = synth(150, 25, 6);
  const auto a = eval_batch(parse("cs_rank(ts_delta(close, 5))"), p).values;
  const auto r0 = quantile_backtest(a, p, 5, 1, 5, 0.0);
  const auto r1 = quantile_backtest(a, p, 5, 1, 5, 0.001);
  ASSERT_EQ(r0.period_net.size(), r1.period_net.size());
  double turnover = 0, gross_sum = 0, net_sum = 0;
  for (std::size_t k = 0; k < r0.period_net.size(); ++k) {
    EXPECT_NEAR(r0.period_net[k] - r1.period_net[k], 0.001 * r1.period_turnover[k], 1e-15);
    turnover += r1.period_turnover[k];
    gross_sum += r1.period_gross[k];
    net_sum += r1.period_net[k];
  }
  EXPECT_NEAR(gross_sum - net_sum, 0.001 * turnover, 1e-12);
  EXPECT_NEAR(r1.period_turnover[0], 2.0, 1e-12);
  const double daily_sum = std::accumulate(r1.daily_ls_returns.begin(), r1.daily_ls_returns.end(), 0.0);
  EXPECT_NEAR(daily_sum, net_sum, 1e-12);
  EXPECT_LE(r1.max_drawdown, 0.0);
}

TEST(Backtest, Errors) {
  const Matrix a = oracle::from_rows({{1, 2, 3}});
  const Matrix f = oracle::from_rows({{0.1, 0.2, 0.3}});
  EXPECT_THROW(quantile_backtest_returns(a, f, 1, 2, 0.001), Error);
  EXPECT_THROW(quantile_backtest_returns(a, f, 1, 1, 0.001), Error);
  EXPECT_THROW(quantile_backtest_returns(a, oracle::from_rows({{1, 2}}), 1, 2, 0.001), Error);
}

TEST(Annualization, Identities) {
  Rng rng(3);
  std::vector<double> r(300);
  for (double& v : r) v = rng.normal() * 0.01 + 0.0003;
  for (double k : {0.5, 2.0, 13.0}) {
    std::vector<double> s = r;
    for (double& v : s) v *= k;
    EXPECT_NEAR(sharpe_ratio(s), sharpe_ratio(r), 1e-12);
    EXPECT_NEAR(annualized_return(s), k * annualized_return(r), 1e-12);
  }
  EXPECT_NEAR(annualized_return(r), naive_mean(r) * 252, 1e-12);
  EXPECT_NEAR(sharpe_ratio(r), naive_mean(r) / naive_sd(r) * std::sqrt(252.0), 1e-12);
  EXPECT_TRUE(is_missing(sharpe_ratio(std::vector<double>{0.01, 0.01, 0.01})));
  EXPECT_NEAR(max_drawdown(std::vector<double>{0.1, -0.05, -0.1, 0.2, -0.3}), -0.3, 1e-15);
}

TEST(Report, TextAndJson) {
  const Panel p = synth(100, 20, 1);
  const auto a = eval_batch(parse("ts_rank(close, 10)"), p).values;
  const auto r = quantile_backtest(a, p, 5, 1, 5, 0.001);
  const std::string text = r.to_text();
  for (const char* k : {"mean_ic=", "ic_ir=", "rank_ic_mean=", "annual_return=", "sharpe=", "max_drawdown=",
                        "avg_turnover=", "quantiles=5", "cost_rate=0.001"})
    EXPECT_NE(text.find(k), std::string::npos) << k;
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["quantiles"], 5);
  EXPECT_EQ(j["daily_ls_returns"].size(), r.daily_ls_returns.size());
}

TEST(Audit, EngineIsCausal) {
  const Panel p = synth(120, 10, 8);
  Rng rng(4);
  for (const auto& e : oracle::random_valid_exprs(20, 31)) {
    const std::size_t t = static_cast<std::size_t>(rng.uniform_int(0, 118));
    EXPECT_TRUE(no_lookahead_audit(e, p, t)) << print_expr(e);
  }
  EXPECT_TRUE(no_lookahead_audit(parse("ts_mean(close, 5)"), p, 118));
  EXPECT_THROW(no_lookahead_audit(parse("close"), p, 119), Error);
}

TEST(Audit, CenteredWindowIsCaught) {
  const Panel p = synth(60, 6, 8);
  EXPECT_FALSE(no_lookahead_audit(parse("close"), p, 30, centered_mean));
}

TEST(IcCsv, Layout) {
  const Panel p = oracle::make_panel({{"x", oracle::from_rows({{1, 2, 3}, {1, 2, 3}})}});
  IcSeries s;
  s.values = {0.5, kMissing};
  EXPECT_EQ(ic_series_to_csv(s, p), "date,ic\n2020-01-01,0.5\n2020-01-02,\n");
}
