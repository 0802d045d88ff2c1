// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "alphaforge/dsl.hpp"
#include "alphaforge/semantics.hpp"

namespace alphaforge {

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

struct AlphaBlock {
  std::string name;
  std::string expression;
  std::string description;
  std::size_t begin = 0;  // byte range of the block in the response
  std::size_t end = 0;

  bool operator==(const AlphaBlock&) const = default;
};

struct ParsedResponse {
  std::vector<AlphaBlock> blocks;
  std::vector<std::string> diagnostics;
};

/// Extracts "Name: / Expression: / Description:" blocks. Labels are case-
/// insensitive and may carry list numbering, bullets or bold markers; the
/// expression may sit in a code fence or inline backticks. Blocks without a
/// name or expression are skipped with a diagnostic.
ParsedResponse parse_response(std::string_view text);

/// Renders blocks in the format parse_response reads ("1. Name: ...").
std::string format_blocks(const std::vector<AlphaBlock>& blocks);

// ---------------------------------------------------------------------------
// Chat history
// ---------------------------------------------------------------------------

enum class Role { kSystem, kUser, kAssistant };
const char* role_name(Role r);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;
  bool pinned = false;

  bool operator==(const ChatMessage&) const = default;
};

inline constexpr int kDefaultTokenBudget = 12288;
inline constexpr std::string_view kTruncatedMarker = "[truncated]";

/// ceil(bytes / 4).
int estimate_tokens(std::string_view text);

struct ChatHistory {
  std::vector<ChatMessage> messages;
  int token_budget = kDefaultTokenBudget;

  int total_tokens() const;
  std::string to_json() const;
  bool operator==(const ChatHistory&) const = default;
};

/// Drops the oldest unpinned messages until the estimate fits; a lone
/// remaining unpinned message is cut from the front behind kTruncatedMarker.
/// Throws kInvalidArgument when pinned messages alone exceed the budget.
ChatHistory truncate_history(ChatHistory history);

// ---------------------------------------------------------------------------
// Knowledge library
// ---------------------------------------------------------------------------

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dimension() const = 0;
  /// Unit-normalized (or all-zero for empty input) vector of dimension().
  virtual std::vector<float> embed(std::string_view text) = 0;
};

/// Lowercased [a-z0-9]+ tokens, FNV-1a hashed into 1024 buckets, L2-normalized.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(int dim = 1024) : dim_(dim) {}
  int dimension() const override { return dim_; }
  std::vector<float> embed(std::string_view text) override;

 private:
  int dim_;
};

struct HttpOptions {
  std::string base_url = "https://api.openai.com/v1";
  std::string model;
  std::string api_key_env = "ALPHAFORGE_LLM_KEY";
  std::chrono::seconds timeout{60};
  int max_retries = 3;
  double temperature = 0.7;
  /// Backoff sleeper (1 s, 2 s, 4 s ...); replaceable in tests.
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// OpenAI-compatible embeddings endpoint (POST {base_url}/embeddings).
class RemoteEmbedder : public Embedder {
 public:
  explicit RemoteEmbedder(HttpOptions options, int dim = 1536);
  int dimension() const override { return dim_; }
  std::vector<float> embed(std::string_view text) override;

 private:
  HttpOptions opt_;
  int dim_;
};

struct KnowledgeDoc {
  std::string id;
  std::string expression;
  std::string explanation;
  std::vector<float> embedding;
};

/// Reads knowledge.jsonl (id, expression, explanation) and embeds each
/// explanation.
std::vector<KnowledgeDoc> load_library(const std::filesystem::path& path, Embedder& embedder);
std::vector<KnowledgeDoc> parse_library(std::string_view jsonl, Embedder& embedder);

double cosine(const std::vector<float>& a, const std::vector<float>& b);

/// Top-k docs by cosine to the embedded query; ties keep insertion order.
std::vector<KnowledgeDoc> retrieve_examples(const std::vector<KnowledgeDoc>& library, std::string_view query,
                                            std::size_t k, Embedder& embedder);

// ---------------------------------------------------------------------------
// Prompting and chat clients
// ---------------------------------------------------------------------------

struct FailedAlpha {
  std::string expression;
  ValidationReport report;
};

/// With no errors: [system (pinned), user idea + examples (pinned)].
/// With errors: one user message listing each failure with its report line.
std::vector<ChatMessage> build_prompt(std::string_view idea, const std::vector<KnowledgeDoc>& examples,
                                      const std::vector<FailedAlpha>& errors, int batch_size);

/// Follow-up request used when a round produced no failures but the target
/// count is not reached yet.
ChatMessage continuation_prompt(int still_needed);

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

/// Replays a transcript {"rounds": {"1": "...", "2": "..."}}; calls past the
/// last round repeat the last reply.
class ScriptedClient : public ChatClient {
 public:
  explicit ScriptedClient(std::vector<std::string> replies);
  static ScriptedClient from_file(const std::filesystem::path& path);
  static ScriptedClient from_json(std::string_view json);
  std::string complete(const std::vector<ChatMessage>& messages) override;
  std::size_t calls() const { return calls_; }

 private:
  std::vector<std::string> replies_;
  std::size_t calls_ = 0;
};

/// POST {base_url}/chat/completions; retries transport failures, 429 and 5xx.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpOptions options);
  std::string complete(const std::vector<ChatMessage>& messages) override;

 private:
  HttpOptions opt_;
};

// ---------------------------------------------------------------------------
// Mining loop
// ---------------------------------------------------------------------------

struct MiningConfig {
  int target_valid = 5;
  int batch_size = 10;
  int max_rounds = 5;
  int k_examples = 3;
  int token_budget = kDefaultTokenBudget;
};

struct MinedAlpha {
  Expr expr;
  std::string text;  // canonical
  AlphaBlock block;
  int round = 0;
  ValidationStats stats;  // on the mock panel
};

struct MiningResult {
  std::vector<MinedAlpha> alphas;
  ChatHistory history;
  int rounds = 0;
  std::vector<FailedAlpha> last_errors;
  std::vector<std::string> diagnostics;

  std::string to_json() const;
};

/// Failure of the chat client; carries whatever the loop had gathered.
class MiningError : public Error {
 public:
  MiningError(const std::string& what, MiningResult partial)
      : Error(ErrorCode::kNetwork, what), partial_(std::move(partial)) {}
  const MiningResult& partial() const { return partial_; }

 private:
  MiningResult partial_;
};

MiningResult mining_loop(std::string_view idea, ChatClient& client, const std::vector<KnowledgeDoc>& library,
                         Embedder& embedder, const MiningConfig& cfg = {});

}  // namespace alphaforge
