// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <atomic>
#include <json.hpp>
#include <mutex>
#include <sstream>

#include "alphaforge/engine.hpp"
#include "alphaforge/gp.hpp"
#include "alphaforge/metrics.hpp"
#include "oracles.hpp"

using namespace alphaforge;

namespace {

GpConfig small_config(std::uint64_t seed, int workers = 1) {
  GpConfig c;
  c.population_size = 40;
  c.generations = 4;
  c.seed = seed;
  c.workers = workers;
  c.min_obs = 10;
  return c;
}

SyntheticData small_panel(std::uint64_t seed) {
  SynthOptions o;
  o.n_dates = 160;
  o.n_instruments = 20;
  o.seed = seed;
  return generate_synthetic(o);
}

bool is_valid(const Expr& e) { return validate_expr(e).valid(); }
bool unit_ok(const Expr& e) { return try_infer_unit(e).has_value(); }

}  // namespace

TEST(GpConfigTest, DefaultsPassAndViolationsThrow) {
  EXPECT_NO_THROW(GpConfig{}.check());
  auto expect_bad = [](auto mutate_fn) {
    GpConfig c;
    mutate_fn(c);
    try {
      c.check();
      ADD_FAILURE() << "expected a config error";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConfig);
    }
  };
  expect_bad([](GpConfig& c) { c.p_crossover = 0.8; });
  expect_bad([](GpConfig& c) { c.population_size = 1; });
  expect_bad([](GpConfig& c) { c.max_depth = 11; });
  expect_bad([](GpConfig& c) { c.init_depth_max = c.max_depth; });
  expect_bad([](GpConfig& c) { c.train_fraction = 1.0; });
  expect_bad([](GpConfig& c) { c.elitism_count = c.population_size; });
  expect_bad([](GpConfig& c) { c.diversity_corr_cap = 0.0; });
  expect_bad([](GpConfig& c) { c.workers = 0; });
}

TEST(GrowTyped, HitsTargetUnitAndDepth) {
  GpConfig cfg;
  Rng rng(12);
  for (const Unit& u : {kPriceUnit, kVolumeUnit, kDimensionless}) {
    for (int d = 1; d <= 6; ++d) {
      for (bool full : {false, true}) {
        const auto e = grow_typed(u, d, full, cfg, rng);
        if (!e) continue;
        EXPECT_EQ(infer_unit(*e), u) << print_expr(*e);
        EXPECT_LE(depth(*e), d);
        EXPECT_TRUE(unit_ok(*e)) << print_expr(*e);
      }
    }
  }
}

TEST(InitPopulation, AllValidAndSeedsFirst) {
  GpConfig cfg;
  cfg.population_size = 120;
  Rng rng(3);
  const Expr seed = parse("cs_rank(ts_delta(close, 5))");
  const auto pop = init_population(cfg, {seed}, rng);
  ASSERT_EQ(pop.size(), 120u);
  EXPECT_EQ(print_expr(pop[0]), print_expr(seed));
  for (const auto& e : pop) {
    EXPECT_TRUE(is_valid(e)) << print_expr(e);
    EXPECT_LE(depth(e), cfg.max_depth);
  }
  EXPECT_THROW(init_population(cfg, {parse("add(close, volume)")}, rng), Error);
}

TEST(Variation, CrossoverAndMutationStayUnitConsistent) {
  GpConfig cfg;
  cfg.population_size = 60;
  Rng rng(99);
  const auto pop = init_population(cfg, {}, rng);
  int changed = 0;
  for (int k = 0; k < 1000; ++k) {
    const Expr& a = pop[rng.uniform_int(0, 59)];
    const Expr& b = pop[rng.uniform_int(0, 59)];
    const Expr c = crossover(a, b, cfg, rng);
    EXPECT_TRUE(unit_ok(c)) << print_expr(c);
    EXPECT_LE(depth(c), cfg.max_depth);
    const auto kind = static_cast<MutationKind>(k % 4);
    const Expr m = mutate(a, cfg, rng, kind);
    EXPECT_TRUE(unit_ok(m)) << print_expr(m);
    EXPECT_LE(depth(m), cfg.max_depth);
    if (print_expr(m) != print_expr(a)) ++changed;
  }
  EXPECT_GT(changed, 500);
}

TEST(Fitness, PenalizesComplexity) {
  const auto d = small_panel(4);
  GpConfig cfg;
  cfg.min_obs = 10;
  const Expr e = parse("cs_rank(ts_delta(close, 5))");
  const double f = fitness(e, d.panel, d.labels.values, cfg);
  const Matrix a = eval_batch(e, d.panel).values;
  const double ic = mean_ic(ic_series(a, d.labels.values, IcKind::kPearson, 10));
  EXPECT_NEAR(f, std::fabs(ic) - cfg.parsimony * complexity(e), 1e-12);
  Matrix none(d.labels.values.rows, d.labels.values.cols, kMissing);
  EXPECT_EQ(fitness(e, d.panel, none, cfg), kNegInf);
}

TEST(Evolve, ClosureEveryMemberValidates) {
  const auto d = small_panel(5);
  std::atomic<int> total{0}, invalid{0};
  EvolveHooks hooks;
  hooks.on_member = [&](const Expr& e) {
    ++total;
    if (!is_valid(e) || depth(e) > kDefaultMaxDepth) ++invalid;
  };
  const auto r = evolve(small_config(21), d.panel, d.labels, {}, {}, hooks);
  EXPECT_GE(total.load(), 40 * r.generations_run);
  EXPECT_EQ(invalid.load(), 0);
}

TEST(Evolve, DeterministicAcrossWorkerCounts) {
  const auto d = small_panel(6);
  const std::vector<Expr> seeds{parse("ts_delta(close, 3)")};
  const std::string base = evolve(small_config(8, 1), d.panel, d.labels, seeds, {}).to_json();
  EXPECT_EQ(evolve(small_config(8, 2), d.panel, d.labels, seeds, {}).to_json(), base);
  EXPECT_EQ(evolve(small_config(8, 8), d.panel, d.labels, seeds, {}).to_json(), base);
  EXPECT_NE(evolve(small_config(9, 1), d.panel, d.labels, seeds, {}).to_json(), base);
}

TEST(Evolve, ResultShapeAndOrdering) {
  const auto d = small_panel(7);
  const auto r = evolve(small_config(2), d.panel, d.labels, {}, {});
  ASSERT_FALSE(r.hall_of_fame.empty());
  EXPECT_LE(r.hall_of_fame.size(), 10u);
  for (std::size_t k = 1; k < r.hall_of_fame.size(); ++k)
    EXPECT_GE(r.hall_of_fame[k - 1].validation_mean_ic, r.hall_of_fame[k].validation_mean_ic);
  for (const auto& h : r.hall_of_fame) {
    EXPECT_GE(h.train_mean_ic, 0.0);
    EXPECT_EQ(h.text, print_expr(h.expr));
    EXPECT_EQ(h.complexity, complexity(h.expr));
  }
  EXPECT_EQ(static_cast<int>(r.history.size()), r.generations_run);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["hall_of_fame"].size(), r.hall_of_fame.size());
  std::istringstream lines(r.hall_of_fame_jsonl());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto rec = nlohmann::json::parse(line);
    EXPECT_EQ(rec["id"], sha256_hex(rec["expression"].get<std::string>()));
    ++n;
  }
  EXPECT_EQ(n, static_cast<int>(r.hall_of_fame.size()));
}

TEST(Evolve, EarlyStopWithFlatFitness) {
  const auto d = small_panel(8);
  GpConfig cfg = small_config(4);
  cfg.generations = 30;
  cfg.patience = 2;
  EvolveHooks hooks;
  hooks.fitness_override = [](const Expr&, double) { return 0.01; };
  hooks.validation_override = [](const Expr&, double) { return 0.01; };
  const auto r = evolve(cfg, d.panel, d.labels, {}, {}, hooks);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_LT(r.generations_run, 30);
}

TEST(Evolve, TrainingLabelsNearSplitAreEmbargoed) {
  const auto d = small_panel(9);
  GpConfig cfg = small_config(5);
  cfg.generations = 1;
  const std::size_t T = d.panel.n_dates();
  const std::size_t split = static_cast<std::size_t>(std::floor(T * cfg.train_fraction));
  LabelMatrix labels = d.labels;
  labels.horizon = 5;
  labels.lag = 1;
  // Only the rows the embargo must blank carry labels in the training slice.
  for (std::size_t t = 0; t < split - 6; ++t)
    for (std::size_t i = 0; i < labels.values.cols; ++i) labels.values(t, i) = kMissing;
  std::mutex m;
  std::vector<double> seen;
  EvolveHooks hooks;
  hooks.fitness_override = [&](const Expr&, double f) {
    std::lock_guard<std::mutex> lk(m);
    seen.push_back(f);
    return 0.0;
  };
  evolve(cfg, d.panel, labels, {}, {}, hooks);
  ASSERT_FALSE(seen.empty());
  for (double f : seen) EXPECT_EQ(f, kNegInf);
}

TEST(AlphaCorrelation, MatchesOracle) {
  Rng rng(1);
  const Matrix a = oracle::random_matrix(20, 5, rng, 0.2, -50, 50);
  const Matrix b = oracle::random_matrix(20, 5, rng, 0.2, -50, 50);
  std::vector<double> x, y;
  for (std::size_t k = 0; k < a.data.size(); ++k)
    if (!oracle::miss(a.data[k]) && !oracle::miss(b.data[k])) {
      x.push_back(a.data[k]);
      y.push_back(b.data[k]);
    }
  EXPECT_NEAR(alpha_correlation(a, b), oracle::pearson(x, y), 1e-12);
  EXPECT_NEAR(alpha_correlation(a, a), 1.0, 1e-12);
}
