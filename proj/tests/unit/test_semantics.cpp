// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <functional>
#include <json.hpp>

#include "alphaforge/gp.hpp"
#include "alphaforge/semantics.hpp"

using namespace alphaforge;

namespace {

Unit unit_of(const std::string& s) { return infer_unit(parse(s)); }

Verdict verdict_of(const std::string& s) { return validate(s).verdict; }

void collect(const Expr& e, std::vector<const Expr*>& out) {
  out.push_back(&e);
  for (const auto& a : e.args) collect(a, out);
}

}  // namespace

TEST(Units, FieldUnits) {
  EXPECT_EQ(field_unit("close"), kPriceUnit);
  EXPECT_EQ(field_unit("vwap"), kPriceUnit);
  EXPECT_EQ(field_unit("volume"), kVolumeUnit);
}

TEST(Units, Rules) {
  EXPECT_EQ(unit_of("div(close, ts_delay(close, 1))"), kDimensionless);
  EXPECT_EQ(unit_of("sub(close, vwap)"), kPriceUnit);
  EXPECT_EQ(unit_of("mul(close, close)"), (Unit{2, 0}));
  EXPECT_EQ(unit_of("div(volume, close)"), (Unit{-1, 1}));
  EXPECT_EQ(unit_of("ts_corr(close, volume, 5)"), kDimensionless);
  EXPECT_EQ(unit_of("group_neutralize(volume)"), kVolumeUnit);
  EXPECT_EQ(unit_of("group_mean(close)"), kPriceUnit);
  EXPECT_EQ(unit_of("log(close)"), kDimensionless);
  EXPECT_EQ(unit_of("ts_rank(volume, 5)"), kDimensionless);
  EXPECT_EQ(unit_of("mul(2, close)"), kPriceUnit);
  EXPECT_EQ(unit_of("add(cs_rank(close), 1)"), kDimensionless);
}

TEST(Units, Errors) {
  try {
    unit_of("add(volume, close)");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnit);
    const std::string m = e.what();
    EXPECT_NE(m.find("add"), std::string::npos);
    EXPECT_NE(m.find("(0,1)"), std::string::npos);
    EXPECT_NE(m.find("(1,0)"), std::string::npos);
  }
  EXPECT_THROW(unit_of("add(close, 1)"), Error);
  EXPECT_THROW(unit_of("mul(mul(close, close), mul(close, mul(close, close)))"), Error);  // |exp| > 4
  EXPECT_FALSE(try_infer_unit(parse("sub(volume, open)")).has_value());
}

TEST(Units, CompositionalOnRandomSubtrees) {
  GpConfig cfg;
  Rng rng(17);
  int checked = 0;
  for (int k = 0; k < 300; ++k) {
    const Expr e = grow_unconstrained(5, cfg, rng);
    if (!try_infer_unit(e)) continue;
    std::vector<const Expr*> nodes;
    collect(e, nodes);
    for (const Expr* n : nodes) {
      if (n->kind == Expr::Kind::kInt) continue;
      // Every subtree of a well-typed tree is well-typed on its own.
      ASSERT_TRUE(try_infer_unit(*n).has_value()) << print_expr(*n);
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(Verdicts, RuleBase) {
  EXPECT_EQ(verdict_of("add(volume, close)"), Verdict::kUnitError);
  EXPECT_EQ(verdict_of("log(sub(close, close))"), Verdict::kSemanticError);
  EXPECT_EQ(verdict_of("sub(close, close)"), Verdict::kSemanticError);
  EXPECT_EQ(verdict_of("cs_rank(ts_delta(close, 1))"), Verdict::kValid);
  EXPECT_EQ(verdict_of("ts_mean(close 5)"), Verdict::kSyntaxError);
  EXPECT_EQ(verdict_of("sub(ts_mean(close, 5), ts_mean(close, 20))"), Verdict::kValid);
  EXPECT_EQ(verdict_of("div(close, sub(open, open))"), Verdict::kSemanticError);
  EXPECT_EQ(verdict_of("ts_mean(close, 250)"), Verdict::kSemanticError);  // warm-up longer than the mock panel
}

TEST(Verdicts, SyntaxReportCarriesOffset) {
  const auto r = validate("ts_mean(close 5)");
  ASSERT_TRUE(r.offset.has_value());
  EXPECT_EQ(*r.offset, 14u);
  EXPECT_FALSE(r.message.empty());
}

TEST(Verdicts, ValidReportHasStatsAndNoMessage) {
  const auto r = validate("ts_delta(close, 3)");
  EXPECT_TRUE(r.valid());
  EXPECT_TRUE(r.message.empty());
  EXPECT_GE(r.stats.missing_fraction, 0.0);
  EXPECT_LT(r.stats.missing_fraction, 1.0);
  EXPECT_LT(r.stats.zero_variance_bar_fraction, 1.0);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["verdict"], "valid");
  EXPECT_EQ(r.to_line().rfind("valid", 0), 0u);
}

TEST(Verdicts, DeterministicAcrossCalls) {
  for (const char* s : {"cs_zscore(ts_std(volume, 10))", "log(sub(close, close))", "ts_corr(close, volume, 5)"}) {
    EXPECT_EQ(validate(s).to_json(), validate(s).to_json());
  }
}

TEST(MockPanelTest, Shape) {
  const Panel& p = mock_panel();
  EXPECT_EQ(p.n_dates(), 60u);
  EXPECT_EQ(p.n_instruments(), 10u);
  EXPECT_EQ(p.n_sectors(), 2);
  EXPECT_EQ(&p, &mock_panel());
}
