// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <json.hpp>

#include "alphaforge/bench.hpp"

using namespace alphaforge;

TEST(Bench, BaselineSpeedupAndIdentity) {
  BenchOptions o;
  o.n_dates = 200;
  o.n_instruments = 60;
  o.threads = {4, 1, 2};
  o.repeats = 1;
  const auto r = bench_eval(parse("ts_mean(close, 20)"), o);
  EXPECT_TRUE(r.outputs_identical);
  ASSERT_EQ(r.cases.size(), 4u);
  EXPECT_EQ(r.cases[0].name, "batch");
  EXPECT_EQ(r.cases[0].threads, 1);
  EXPECT_EQ(r.cases[0].speedup, 1.0);
  EXPECT_EQ(r.cases.back().name, "streaming");
  for (const auto& c : r.cases) {
    EXPECT_GT(c.wall_seconds, 0.0);
    EXPECT_NEAR(c.cells_per_second * c.wall_seconds, 200.0 * 60.0, 1e-6 * 200 * 60);
    EXPECT_NEAR(c.speedup, r.cases[0].wall_seconds / c.wall_seconds, 1e-12);
  }
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["cases"].size(), 4u);
  EXPECT_NE(r.to_markdown().find("| batch"), std::string::npos);
}

TEST(Bench, RejectsBadOptions) {
  BenchOptions o;
  o.n_dates = 50;
  o.n_instruments = 10;
  o.threads = {0};
  EXPECT_THROW(bench_eval(parse("close"), o), Error);
  o.threads = {1};
  o.repeats = 0;
  EXPECT_THROW(bench_eval(parse("close"), o), Error);
  o.repeats = 1;
  EXPECT_THROW(bench_eval(parse("add(close, volume)"), o), Error);
}
