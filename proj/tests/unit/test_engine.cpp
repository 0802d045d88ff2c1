// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstring>

#include "alphaforge/engine.hpp"
#include "alphaforge/semantics.hpp"
#include "kernel_cases.hpp"
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

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.same_shape(b) && std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Kernels, EveryOperatorMatchesNaiveOracleOnSmallPanels) {
  const auto results = oracle::run_kernel_oracles(11, 2, 6);
  ASSERT_EQ(results.size(), 19u);
  for (const auto& r : results) {
    EXPECT_GT(r.cases, 0) << r.op;
    EXPECT_EQ(r.mask_mismatches, 0u) << r.op;
    EXPECT_LE(r.max_abs, 1e-12) << r.op;
  }
}

TEST(Kernels, CsRankHandComputed) {
  const Matrix x = oracle::from_rows({{3, 1, 2, 2}});
  Matrix out(1, 4);
  cs_rank_row(x.row(0), out.row(0));
  EXPECT_EQ(out(0, 0), 1.0);
  EXPECT_EQ(out(0, 1), 0.0);
  EXPECT_EQ(out(0, 2), 0.5);
  EXPECT_EQ(out(0, 3), 0.5);
}

TEST(Kernels, CsZscoreHandComputed) {
  const Matrix x = oracle::from_rows({{1, 2, 3, kMissing}});
  Matrix out(1, 4);
  cs_zscore_row(x.row(0), out.row(0));
  EXPECT_DOUBLE_EQ(out(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(out(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(out(0, 2), 1.0);
  EXPECT_TRUE(is_missing(out(0, 3)));
  const Matrix c = oracle::from_rows({{5, 5, 5, 5}});
  cs_zscore_row(c.row(0), out.row(0));
  for (double v : out.data) EXPECT_TRUE(is_missing(v));
}

TEST(Kernels, GroupOpsHandComputed) {
  const Matrix x = oracle::from_rows({{1, 10, 3, 30, 7}});
  const std::vector<int> g{0, 1, 0, 1, 2};
  Matrix out(1, 5);
  group_mean_row(x.row(0), g, 3, out.row(0));
  EXPECT_EQ(out(0, 0), 2.0);
  EXPECT_EQ(out(0, 3), 20.0);
  EXPECT_TRUE(is_missing(out(0, 4)));  // singleton group
  group_neutralize_row(x.row(0), g, 3, out.row(0));
  EXPECT_EQ(out(0, 0), -1.0);
  EXPECT_EQ(out(0, 1), -10.0);
}

TEST(Kernels, TsRankWindowOneIsHalf) {
  const Panel p = oracle::make_panel({{"x", oracle::from_rows({{1, 2}, {3, 4}})}});
  const auto a = eval_batch(parse("ts_rank(x, 1)"), p);
  for (double v : a.values.data) EXPECT_EQ(v, 0.5);
}

TEST(Lookback, SumsAlongPaths) {
  EXPECT_EQ(lookback(parse("close")), 0);
  EXPECT_EQ(lookback(parse("ts_mean(close, 5)")), 4);
  EXPECT_EQ(lookback(parse("ts_delay(close, 3)")), 3);
  EXPECT_EQ(lookback(parse("ts_std(ts_delta(close, 2), 10)")), 11);
  EXPECT_EQ(lookback(parse("sub(ts_mean(close, 5), ts_mean(close, 20))")), 19);
  EXPECT_EQ(lookback(parse("ts_corr(ts_delay(close, 4), volume, 3)")), 6);
}

TEST(Lookback, RowsAfterWarmupAreDefinedOnCleanData) {
  const Panel p = synth(80, 6, 3);
  for (const char* s : {"ts_mean(close, 7)", "ts_std(ts_delta(close, 2), 10)", "ts_rank(ts_delay(volume, 3), 5)"}) {
    const Expr e = parse(s);
    const auto a = eval_batch(e, p);
    const std::size_t lb = static_cast<std::size_t>(lookback(e));
    for (std::size_t t = 0; t < p.n_dates(); ++t)
      for (std::size_t i = 0; i < p.n_instruments(); ++i) EXPECT_EQ(is_missing(a.values(t, i)), t < lb) << s;
  }
}

TEST(Engine, CompositeExpressionsMatchNaiveEvaluator) {
  const Panel p = synth(80, 12, 21);
  const auto exprs = oracle::random_valid_exprs(60, 5, 5);
  ASSERT_EQ(exprs.size(), 60u);
  std::size_t cells = 0, agree = 0;
  for (const auto& e : exprs) {
    const Matrix got = eval_batch(e, p).values;
    const Matrix want = oracle::eval(e, p);
    for (std::size_t k = 0; k < got.data.size(); ++k) {
      ++cells;
      const double a = got.data[k], b = want.data[k];
      if (is_missing(a) && is_missing(b)) {
        ++agree;
      } else if (!is_missing(a) && !is_missing(b) && std::fabs(a - b) <= 1e-9 * std::max(1.0, std::fabs(b))) {
        ++agree;
      }
    }
  }
  // Rank ties and zero-variance checks can flip on last-ulp differences in
  // deep compositions; the bulk must agree.
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(cells), 0.999);
}

TEST(Engine, StreamingEqualsBatch) {
  const Panel p = synth(200, 20, 8);
  for (const auto& e : oracle::random_valid_exprs(40, 77)) {
    const auto b = eval_batch(e, p).values;
    const auto s = eval_streaming(e, p).values;
    const auto d = oracle::compare(b, s);
    EXPECT_EQ(d.mask_mismatches, 0u) << print_expr(e);
    EXPECT_LE(d.max_abs, 1e-9) << print_expr(e);
  }
}

TEST(Engine, ThreadCountDoesNotChangeBits) {
  const Panel p = synth(150, 33, 4);
  for (const auto& e : oracle::random_valid_exprs(25, 99)) {
    const auto one = eval_batch(e, p, 1).values;
    for (int t : {2, 3, 8}) EXPECT_TRUE(bit_equal(one, eval_batch(e, p, t).values)) << print_expr(e) << " @" << t;
  }
}

TEST(Engine, UnknownFieldIsInvalidArgument) {
  const Panel p = synth(40, 5, 1);
  try {
    eval_batch(parse("ts_mean(turnover, 3)"), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
  EXPECT_THROW(eval_streaming(parse("ts_mean(turnover, 3)"), p), Error);
}

TEST(Engine, StreamEvaluatorPushApi) {
  const Panel p = synth(50, 7, 2);
  const Expr e = parse("cs_rank(ts_corr(close, volume, 5))");
  StreamEvaluator ev(e, p.sector_ids());
  EXPECT_EQ(ev.fields(), (std::vector<std::string>{"close", "volume"}));
  const auto batch = eval_batch(e, p).values;
  for (std::size_t t = 0; t < p.n_dates(); ++t) {
    std::vector<std::span<const double>> rows{p.field("close").row(t), p.field("volume").row(t)};
    const auto out = ev.push_bar(rows);
    ASSERT_EQ(out.size(), 7u);
    for (std::size_t i = 0; i < 7; ++i) {
      const double b = batch(t, i);
      EXPECT_TRUE((is_missing(b) && is_missing(out[i])) || b == out[i]);
    }
  }
  EXPECT_EQ(ev.bars_seen(), 50u);
}

TEST(Engine, StreamingStopAfterLeavesTailMissing) {
  const Panel p = synth(40, 5, 6);
  const auto a = eval_streaming(parse("ts_mean(close, 3)"), p, 19);
  for (std::size_t t = 20; t < 40; ++t)
    for (std::size_t i = 0; i < 5; ++i) EXPECT_TRUE(is_missing(a.values(t, i)));
  EXPECT_FALSE(is_missing(a.values(19, 0)));
}

TEST(Engine, LiteralsBroadcast) {
  const Panel p = synth(30, 4, 6);
  const auto a = eval_batch(parse("mul(2, close)"), p).values;
  for (std::size_t k = 0; k < a.data.size(); ++k) EXPECT_EQ(a.data[k], 2.0 * p.field("close").data[k]);
}

TEST(Engine, DomainRulesGiveMissing) {
  const Panel p = oracle::make_panel({{"x", oracle::from_rows({{0, -1, 2, 4}})}, {"y", oracle::from_rows({{0, 1, 0, 2}})}});
  const auto l = eval_batch(parse("log(x)"), p).values;
  EXPECT_TRUE(is_missing(l(0, 0)));
  EXPECT_TRUE(is_missing(l(0, 1)));
  EXPECT_DOUBLE_EQ(l(0, 3), std::log(4.0));
  const auto d = eval_batch(parse("div(x, y)"), p).values;
  EXPECT_TRUE(is_missing(d(0, 0)));
  EXPECT_EQ(d(0, 1), -1.0);
  EXPECT_TRUE(is_missing(d(0, 2)));
  EXPECT_EQ(d(0, 3), 2.0);
}

TEST(Engine, CsvLayout) {
  const Panel p = oracle::make_panel({{"x", oracle::from_rows({{1, kMissing}, {0.5, 2}})}});
  const auto a = eval_batch(parse("x"), p);
  EXPECT_EQ(alpha_to_csv(a, p), "date,I0,I1\n2020-01-01,1,\n2020-01-02,0.5,2\n");
}
