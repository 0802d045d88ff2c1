// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <json.hpp>

#include "alphaforge/decompiler.hpp"
#include "history_cases.hpp"

using namespace alphaforge;

namespace {

const std::string kData = AF_DATA_DIR;

class FailingClient : public ChatClient {
 public:
  explicit FailingClient(std::string first) : first_(std::move(first)) {}
  std::string complete(const std::vector<ChatMessage>&) override {
    if (calls_++ == 0) return first_;
    throw Error(ErrorCode::kNetwork, "connection refused");
  }

 private:
  std::string first_;
  int calls_ = 0;
};

std::string block(const std::string& name, const std::string& expr, const std::string& desc) {
  return "Name: " + name + "\nExpression: " + expr + "\nDescription: " + desc + "\n\n";
}

MiningResult run_demo() {
  HashingEmbedder emb;
  const auto lib = load_library(kData + "/knowledge.jsonl", emb);
  ScriptedClient client = ScriptedClient::from_file(kData + "/transcripts/demo.json");
  MiningConfig cfg;
  cfg.target_valid = 5;
  return mining_loop("short-term momentum confirmed by volume", client, lib, emb, cfg);
}

}  // namespace

TEST(ParseResponse, TwoWellFormedBlocksInOrder) {
  const auto r = parse_response(block("A", "close", "first") + block("B", "ts_mean(close, 5)", "second"));
  ASSERT_EQ(r.blocks.size(), 2u);
  EXPECT_EQ(r.blocks[0].name, "A");
  EXPECT_EQ(r.blocks[1].expression, "ts_mean(close, 5)");
  EXPECT_EQ(r.blocks[1].description, "second");
  EXPECT_TRUE(r.diagnostics.empty());
}

TEST(ParseResponse, MissingExpressionGivesDiagnostic) {
  const auto r = parse_response("Name: lonely\nDescription: nothing here\n\n" + block("B", "close", "ok"));
  ASSERT_EQ(r.blocks.size(), 1u);
  EXPECT_EQ(r.blocks[0].name, "B");
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_NE(r.diagnostics[0].find("Expression"), std::string::npos);
}

TEST(ParseResponse, FencesNumberingBoldAndCase) {
  const std::string text =
      "Intro text.\n\n1. **NAME:** Fenced\n   **expression:**\n   ```\n   ts_rank(close, 10)\n   ```\n"
      "   **Description:** fenced one\n\n2) name: Ticked\n   Expression: `cs_rank(volume)`\n   description: ticks\n";
  const auto r = parse_response(text);
  ASSERT_EQ(r.blocks.size(), 2u);
  EXPECT_EQ(r.blocks[0].name, "Fenced");
  EXPECT_EQ(r.blocks[0].expression, "ts_rank(close, 10)");
  EXPECT_EQ(r.blocks[1].expression, "cs_rank(volume)");
  EXPECT_EQ(text.substr(r.blocks[0].begin, 2), "1.");
  EXPECT_TRUE(parse_response("no blocks at all").blocks.empty());
}

TEST(ParseResponse, FormatRoundTrip) {
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    std::vector<AlphaBlock> blocks;
    const int n = static_cast<int>(rng.uniform_int(1, 6));
    for (int b = 0; b < n; ++b) {
      AlphaBlock a;
      a.name = "alpha " + std::to_string(rng.uniform_int(0, 9999));
      a.expression = "ts_mean(close, " + std::to_string(rng.uniform_int(1, 250)) + ")";
      a.description = rng.bernoulli(0.3) ? "" : "desc " + std::to_string(b);
      blocks.push_back(a);
    }
    const auto r = parse_response(format_blocks(blocks));
    ASSERT_EQ(r.blocks.size(), blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      EXPECT_EQ(r.blocks[b].name, blocks[b].name);
      EXPECT_EQ(r.blocks[b].expression, blocks[b].expression);
      EXPECT_EQ(r.blocks[b].description, blocks[b].description);
    }
  }
}

TEST(Truncate, UnderBudgetUnchanged) {
  ChatHistory h;
  h.messages = {{Role::kSystem, "sys", true}, {Role::kUser, "hello", false}};
  EXPECT_EQ(truncate_history(h), h);
  EXPECT_EQ(estimate_tokens("abcde"), 2);
  EXPECT_EQ(estimate_tokens(""), 0);
}

TEST(Truncate, TenMessagesOfTwoThousandTokens) {
  ChatHistory h;
  for (int k = 0; k < 10; ++k)
    h.messages.push_back({k == 0 ? Role::kSystem : Role::kUser, std::string(8000, 'a' + static_cast<char>(k)), k < 2});
  const ChatHistory t = truncate_history(h);
  ASSERT_EQ(t.messages.size(), 6u);
  EXPECT_TRUE(t.messages[0].pinned);
  EXPECT_TRUE(t.messages[1].pinned);
  EXPECT_EQ(t.messages[2].content[0], 'a' + 6);
  EXPECT_EQ(t.total_tokens(), 12000);
}

TEST(Truncate, LoneMessageCutFromFront) {
  ChatHistory h;
  h.token_budget = 100;
  h.messages = {{Role::kSystem, std::string(40, 's'), true}, {Role::kUser, std::string(1000, 'x') + "tail", false}};
  const ChatHistory t = truncate_history(h);
  ASSERT_EQ(t.messages.size(), 2u);
  EXPECT_EQ(t.messages[1].content.rfind(kTruncatedMarker, 0), 0u);
  EXPECT_EQ(t.messages[1].content.substr(t.messages[1].content.size() - 4), "tail");
  EXPECT_LE(t.total_tokens(), 100);
}

TEST(Truncate, PinnedOverflowThrows) {
  ChatHistory h;
  h.messages = {{Role::kSystem, std::string(80000, 'p'), true}};
  EXPECT_THROW(truncate_history(h), Error);
}

TEST(Truncate, PropertiesOnRandomHistories) {
  const auto c = oracle::check_truncation(77, 1000);
  EXPECT_EQ(c.idempotent, 1000);
  EXPECT_EQ(c.within_budget, 1000);
  EXPECT_EQ(c.pinned_kept, 1000);
  EXPECT_EQ(c.not_increased, 1000);
}

TEST(Knowledge, EmbedderAndRetrieval) {
  HashingEmbedder emb;
  const auto v = emb.embed("Momentum momentum RANK");
  EXPECT_EQ(v.size(), 1024u);
  EXPECT_NEAR(cosine(v, v), 1.0, 1e-6);
  EXPECT_EQ(cosine(v, emb.embed("")), 0.0);
  EXPECT_EQ(emb.embed("rank, momentum"), emb.embed("momentum rank"));

  const auto lib = load_library(kData + "/knowledge.jsonl", emb);
  ASSERT_EQ(lib.size(), 20u);
  for (const auto& d : lib) EXPECT_TRUE(validate(d.expression).valid()) << d.id;
  const auto top = retrieve_examples(lib, "moving-average crossover uptrend", 3, emb);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].id, "k03");
  EXPECT_EQ(retrieve_examples(lib, "x", 50, emb).size(), 20u);
  EXPECT_THROW(parse_library("{\"id\": 1}\n", emb), Error);
}

TEST(Prompt, InitialAndCorrection) {
  HashingEmbedder emb;
  const auto lib = load_library(kData + "/knowledge.jsonl", emb);
  const auto first = build_prompt("buy dips", {lib[0], lib[1]}, {}, 10);
  ASSERT_EQ(first.size(), 2u);
  EXPECT_TRUE(first[0].pinned && first[1].pinned);
  EXPECT_EQ(first[0].role, Role::kSystem);
  EXPECT_NE(first[1].content.find("buy dips"), std::string::npos);
  EXPECT_NE(first[1].content.find(lib[1].expression), std::string::npos);
  const auto fix = build_prompt("buy dips", {}, {{"add(close, volume)", validate("add(close, volume)")}}, 10);
  ASSERT_EQ(fix.size(), 1u);
  EXPECT_FALSE(fix[0].pinned);
  EXPECT_NE(fix[0].content.find("add(close, volume)"), std::string::npos);
  EXPECT_NE(fix[0].content.find("unit_error"), std::string::npos);
  EXPECT_THROW(build_prompt("x", {}, {}, 0), Error);
}

TEST(Scripted, RepeatsLastReplyAndRejectsBadTranscripts) {
  ScriptedClient c({"one", "two"});
  EXPECT_EQ(c.complete({}), "one");
  EXPECT_EQ(c.complete({}), "two");
  EXPECT_EQ(c.complete({}), "two");
  EXPECT_EQ(c.calls(), 3u);
  EXPECT_THROW(ScriptedClient::from_json("{}"), Error);
  EXPECT_THROW(ScriptedClient::from_json("not json"), Error);
}

TEST(Mining, DemoTranscriptTwoRoundsTenAlphas) {
  const MiningResult r = run_demo();
  EXPECT_EQ(r.rounds, 2);
  ASSERT_EQ(r.alphas.size(), 10u);
  EXPECT_EQ(std::count_if(r.alphas.begin(), r.alphas.end(), [](const MinedAlpha& a) { return a.round == 1; }), 4);
  for (const auto& a : r.alphas) {
    EXPECT_TRUE(validate(a.text).valid()) << a.text;
    EXPECT_EQ(a.text, print_expr(a.expr));
  }
  EXPECT_TRUE(r.last_errors.empty());
  // system, idea, reply 1, correction request, reply 2
  ASSERT_EQ(r.history.messages.size(), 5u);
  EXPECT_EQ(r.history.messages[3].content.find("The following 6 alphas"), 0u);
  EXPECT_EQ(run_demo().history.to_json(), r.history.to_json());
  EXPECT_EQ(run_demo().to_json(), r.to_json());
}

TEST(Mining, StopsAfterRoundOneWhenTargetMet) {
  HashingEmbedder emb;
  ScriptedClient client = ScriptedClient::from_file(kData + "/transcripts/demo.json");
  MiningConfig cfg;
  cfg.target_valid = 1;
  const auto r = mining_loop("momentum", client, {}, emb, cfg);
  EXPECT_EQ(r.rounds, 1);
  EXPECT_EQ(r.alphas.size(), 4u);
  EXPECT_EQ(client.calls(), 1u);
}

TEST(Mining, AllInvalidHitsMaxRounds) {
  HashingEmbedder emb;
  std::string bad;
  for (int k = 0; k < 10; ++k) bad += block("bad" + std::to_string(k), "add(close, volume)", "");
  ScriptedClient client({bad});
  MiningConfig cfg;
  cfg.max_rounds = 3;
  const auto r = mining_loop("x", client, {}, emb, cfg);
  EXPECT_EQ(r.rounds, 3);
  EXPECT_TRUE(r.alphas.empty());
  EXPECT_EQ(r.last_errors.size(), 10u);
}

TEST(Mining, ZeroBlocksCountsAsRound) {
  HashingEmbedder emb;
  ScriptedClient client({"I cannot help with that.", block("ok", "ts_rank(close, 5)", "fine")});
  MiningConfig cfg;
  cfg.target_valid = 1;
  const auto r = mining_loop("x", client, {}, emb, cfg);
  EXPECT_EQ(r.rounds, 2);
  ASSERT_EQ(r.alphas.size(), 1u);
}

TEST(Mining, ClientFailureCarriesPartialResult) {
  HashingEmbedder emb;
  FailingClient client(block("ok", "ts_rank(close, 5)", "fine") + block("bad", "add(close, volume)", ""));
  try {
    mining_loop("x", client, {}, emb, {});
    FAIL() << "expected MiningError";
  } catch (const MiningError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNetwork);
    EXPECT_EQ(e.partial().alphas.size(), 1u);
    EXPECT_EQ(e.partial().rounds, 1);
  }
}

TEST(Mining, ResultJson) {
  const auto j = nlohmann::json::parse(run_demo().to_json());
  EXPECT_EQ(j["rounds"], 2);
  EXPECT_EQ(j["alphas"].size(), 10u);
  EXPECT_TRUE(j["alphas"][0].contains("missing_fraction"));
}
