// SPDX-License-Identifier: Apache-2.0
#include "alphaforge/decompiler.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

namespace alphaforge {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

namespace {

enum class Label { kName, kExpression, kDescription };

struct LabelLine {
  Label label;
  std::string rest;
};

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::optional<LabelLine> match_label(const std::string& line) {
  static const std::regex re(
      R"(^\s*(?:#+\s*)?(?:(?:\d+[.)]|[-*+])\s+)?(?:\*\*|__)?\s*(name|expression|formula|description)\s*(?:\*\*|__)?\s*:\s*(?:\*\*|__)?\s*(.*)$)",
      std::regex::icase);
  std::smatch m;
  if (!std::regex_match(line, m, re)) return std::nullopt;
  std::string word = m[1].str();
  std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
  LabelLine out;
  out.label = word == "name" ? Label::kName : word == "description" ? Label::kDescription : Label::kExpression;
  out.rest = trim(m[2].str());
  return out;
}

std::string strip_decoration(std::string s) {
  s = trim(s);
  for (const char* mark : {"**", "__"}) {
    const std::size_t n = std::char_traits<char>::length(mark);
    if (s.size() >= 2 * n && s.compare(0, n, mark) == 0 && s.compare(s.size() - n, n, mark) == 0) {
      s = trim(s.substr(n, s.size() - 2 * n));
    }
  }
  if (s.size() >= 6 && s.compare(0, 3, "```") == 0 && s.compare(s.size() - 3, 3, "```") == 0) {
    s = trim(s.substr(3, s.size() - 6));
  } else if (s.size() >= 2 && s.front() == '`' && s.back() == '`') {
    s = trim(s.substr(1, s.size() - 2));
  }
  return s;
}

bool is_fence(const std::string& line) { return trim(line).rfind("```", 0) == 0; }

struct Draft {
  AlphaBlock block;
  bool has_name = false;
  bool has_expression = false;
  std::optional<Label> last;
  bool awaiting_fence = false;
  bool in_fence = false;
  std::vector<std::string> fence_lines;
};

}  // namespace

ParsedResponse parse_response(std::string_view text) {
  ParsedResponse out;
  std::optional<Draft> cur;
  int block_no = 0;

  auto finish = [&](std::size_t end) {
    if (!cur) return;
    ++block_no;
    cur->block.end = end;
    if (cur->in_fence) {
      cur->block.expression = trim([&] {
        std::string joined;
        for (std::size_t k = 0; k < cur->fence_lines.size(); ++k) {
          if (k) joined += '\n';
          joined += cur->fence_lines[k];
        }
        return joined;
      }());
      cur->has_expression = !cur->block.expression.empty();
    }
    std::vector<std::string> missing;
    if (!cur->has_name || cur->block.name.empty()) missing.push_back("Name");
    if (!cur->has_expression || cur->block.expression.empty()) missing.push_back("Expression");
    if (missing.empty()) {
      out.blocks.push_back(cur->block);
    } else {
      std::string msg = "block " + std::to_string(block_no) + " at byte " + std::to_string(cur->block.begin) +
                        ": missing ";
      for (std::size_t k = 0; k < missing.size(); ++k) msg += (k ? " and " : "") + missing[k];
      msg += " label; skipped";
      out.diagnostics.push_back(std::move(msg));
    }
    cur.reset();
  };

  std::size_t pos = 0;
  std::size_t last_end = 0;
  while (pos <= text.size()) {
    if (pos == text.size()) break;
    std::size_t nl = text.find('\n', pos);
    const std::size_t line_end = nl == std::string_view::npos ? text.size() : nl;
    std::string line(text.substr(pos, line_end - pos));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t line_start = pos;
    pos = nl == std::string_view::npos ? text.size() : nl + 1;

    if (cur && (cur->awaiting_fence || cur->in_fence)) {
      if (cur->in_fence) {
        if (is_fence(line)) {
          cur->in_fence = false;
          std::string joined;
          for (std::size_t k = 0; k < cur->fence_lines.size(); ++k) {
            if (k) joined += '\n';
            joined += cur->fence_lines[k];
          }
          cur->block.expression = trim(joined);
          cur->has_expression = !cur->block.expression.empty();
          cur->fence_lines.clear();
          last_end = line_end;
        } else {
          cur->fence_lines.push_back(line);
        }
        continue;
      }
      if (is_fence(line)) {
        cur->awaiting_fence = false;
        cur->in_fence = true;
        continue;
      }
      if (trim(line).empty()) continue;
      cur->awaiting_fence = false;
      if (!match_label(line)) {
        cur->block.expression = strip_decoration(line);
        cur->has_expression = !cur->block.expression.empty();
        last_end = line_end;
        continue;
      }
    }

    const auto lab = match_label(line);
    if (lab) {
      const bool starts_new = lab->label == Label::kName ||
                              (lab->label == Label::kExpression && (!cur || cur->has_expression)) ||
                              (lab->label == Label::kDescription && !cur);
      if (starts_new) {
        finish(last_end);
        cur.emplace();
        cur->block.begin = line_start;
      }
      cur->last = lab->label;
      last_end = line_end;
      switch (lab->label) {
        case Label::kName:
          cur->block.name = strip_decoration(lab->rest);
          cur->has_name = true;
          break;
        case Label::kExpression:
          if (lab->rest.empty()) {
            cur->awaiting_fence = true;
          } else if (lab->rest.rfind("```", 0) == 0 && lab->rest.size() > 3 &&
                     lab->rest.find("```", 3) == std::string::npos) {
            cur->in_fence = true;  // fence opened on the label line
            cur->fence_lines.push_back(lab->rest.substr(3));
          } else {
            cur->block.expression = strip_decoration(lab->rest);
            cur->has_expression = !cur->block.expression.empty();
          }
          break;
        case Label::kDescription:
          cur->block.description = strip_decoration(lab->rest);
          break;
      }
      continue;
    }
    if (!cur) continue;
    if (trim(line).empty()) {
      cur->last.reset();
      continue;
    }
    if (cur->last == Label::kDescription) {
      if (!cur->block.description.empty()) cur->block.description += '\n';
      cur->block.description += trim(line);
      last_end = line_end;
    }
  }
  finish(last_end);
  return out;
}

std::string format_blocks(const std::vector<AlphaBlock>& blocks) {
  std::string out;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (k) out += '\n';
    out += std::to_string(k + 1) + ". Name: " + blocks[k].name + "\n";
    out += "Expression: " + blocks[k].expression + "\n";
    if (!blocks[k].description.empty()) out += "Description: " + blocks[k].description + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chat history
// ---------------------------------------------------------------------------

const char* role_name(Role r) {
  switch (r) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

int estimate_tokens(std::string_view text) { return static_cast<int>((text.size() + 3) / 4); }

int ChatHistory::total_tokens() const {
  int total = 0;
  for (const auto& m : messages) total += estimate_tokens(m.content);
  return total;
}

std::string ChatHistory::to_json() const {
  ojson j;
  j["token_budget"] = token_budget;
  auto arr = ojson::array();
  for (const auto& m : messages) {
    ojson o;
    o["role"] = role_name(m.role);
    o["content"] = m.content;
    o["pinned"] = m.pinned;
    arr.push_back(std::move(o));
  }
  j["messages"] = std::move(arr);
  return j.dump(2);
}

ChatHistory truncate_history(ChatHistory h) {
  int pinned = 0;
  for (const auto& m : h.messages)
    if (m.pinned) pinned += estimate_tokens(m.content);
  if (pinned > h.token_budget) {
    throw Error(ErrorCode::kInvalidArgument, "pinned messages need " + std::to_string(pinned) +
                                                 " tokens, over the budget of " + std::to_string(h.token_budget));
  }
  auto unpinned = [&] {
    return static_cast<std::size_t>(std::count_if(h.messages.begin(), h.messages.end(),
                                                  [](const ChatMessage& m) { return !m.pinned; }));
  };
  while (h.total_tokens() > h.token_budget && unpinned() > 1) {
    auto it = std::find_if(h.messages.begin(), h.messages.end(), [](const ChatMessage& m) { return !m.pinned; });
    h.messages.erase(it);
  }
  if (h.total_tokens() > h.token_budget) {
    auto it = std::find_if(h.messages.begin(), h.messages.end(), [](const ChatMessage& m) { return !m.pinned; });
    const std::size_t allowed = static_cast<std::size_t>(h.token_budget - pinned) * 4;
    if (allowed <= kTruncatedMarker.size()) {
      h.messages.erase(it);
    } else {
      const std::string& c = it->content;
      std::size_t start = c.size() - (allowed - kTruncatedMarker.size());
      while (start < c.size() && (static_cast<unsigned char>(c[start]) & 0xC0) == 0x80) ++start;
      it->content = std::string(kTruncatedMarker) + c.substr(start);
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Knowledge library
// ---------------------------------------------------------------------------

std::vector<float> HashingEmbedder::embed(std::string_view text) {
  std::vector<float> v(static_cast<std::size_t>(dim_), 0.0f);
  std::size_t k = 0;
  while (k < text.size()) {
    while (k < text.size() && !std::isalnum(static_cast<unsigned char>(text[k]))) ++k;
    std::uint64_t h = 1469598103934665603ULL;
    std::size_t len = 0;
    while (k < text.size() && std::isalnum(static_cast<unsigned char>(text[k]))) {
      h ^= static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(text[k])));
      h *= 1099511628211ULL;
      ++k;
      ++len;
    }
    if (len > 0) v[h % static_cast<std::uint64_t>(dim_)] += 1.0f;
  }
  double norm = 0.0;
  for (float x : v) norm += static_cast<double>(x) * x;
  if (norm > 0.0) {
    const double inv = 1.0 / std::sqrt(norm);
    for (float& x : v) x = static_cast<float>(x * inv);
  }
  return v;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kInvalidArgument, "embedding dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += static_cast<double>(a[k]) * b[k];
    na += static_cast<double>(a[k]) * a[k];
    nb += static_cast<double>(b[k]) * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

std::vector<KnowledgeDoc> parse_library(std::string_view jsonl, Embedder& embedder) {
  std::vector<KnowledgeDoc> docs;
  std::size_t lineno = 0, pos = 0;
  while (pos < jsonl.size()) {
    const std::size_t nl = jsonl.find('\n', pos);
    const std::string_view line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? jsonl.size() : nl + 1;
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      KnowledgeDoc d;
      d.id = j.at("id").get<std::string>();
      d.expression = j.at("expression").get<std::string>();
      d.explanation = j.at("explanation").get<std::string>();
      d.embedding = embedder.embed(d.explanation);
      docs.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, "knowledge line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return docs;
}

std::vector<KnowledgeDoc> load_library(const std::filesystem::path& path, Embedder& embedder) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_library(ss.str(), embedder);
}

std::vector<KnowledgeDoc> retrieve_examples(const std::vector<KnowledgeDoc>& library, std::string_view query,
                                            std::size_t k, Embedder& embedder) {
  if (k == 0 || library.empty()) return {};
  const auto q = embedder.embed(query);
  std::vector<double> sim(library.size());
  for (std::size_t i = 0; i < library.size(); ++i) sim[i] = cosine(q, library[i].embedding);
  std::vector<std::size_t> order(library.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
  std::vector<KnowledgeDoc> out;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) out.push_back(library[order[i]]);
  return out;
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

namespace {

std::string operator_reference() {
  std::string out;
  for (const auto& info : operator_table()) {
    std::string sig = std::string(info.name) + "(";
    const char* names[] = {"x", "y", "z"};
    int series = 0;
    for (int k = 0; k < info.arity; ++k) {
      if (k) sig += ", ";
      sig += k == info.window_slot ? "w" : names[series++];
    }
    sig += ")";
    out += "- " + sig;
    if (info.window_slot >= 0) {
      out += "  window w: integer in [" + std::to_string(info.min_window) + ", " + std::to_string(kMaxWindow) + "]";
    }
    out += '\n';
  }
  return out;
}

std::string system_prompt() {
  std::string s =
      "You translate trading ideas into formulaic alpha expressions.\n\n"
      "Expressions use function-call syntax over the fields open, high, low, close, volume, vwap, "
      "numeric literals, and the infix operators + - * / with parentheses. Operators:\n";
  s += operator_reference();
  s +=
      "\nUnits must be consistent: prices (open, high, low, close, vwap) and volume cannot be added or "
      "subtracted from each other or from bare numbers. Cross-sectional and rank operators return "
      "unitless values. Avoid expressions that are constant across instruments or undefined (for "
      "example log of zero).\n\n"
      "Answer with numbered blocks, one per alpha, exactly in this format:\n"
      "1. Name: short_name\n"
      "Expression: cs_rank(ts_delta(close, 5))\n"
      "Description: one paragraph explaining the signal.\n";
  return s;
}

}  // namespace

std::vector<ChatMessage> build_prompt(std::string_view idea, const std::vector<KnowledgeDoc>& examples,
                                      const std::vector<FailedAlpha>& errors, int batch_size) {
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  if (!errors.empty()) {
    std::string c = "The following " + std::to_string(errors.size()) +
                    " alphas failed validation. Re-generate a corrected version of each of them, and only "
                    "these, using the same block format.\n";
    for (std::size_t k = 0; k < errors.size(); ++k) {
      c += "\n" + std::to_string(k + 1) + ". Expression: " + errors[k].expression + "\n   Error: " +
           errors[k].report.to_line() + "\n";
    }
    return {ChatMessage{Role::kUser, c, false}};
  }
  std::string u = "Trading idea: " + std::string(idea) + "\n\nWrite " + std::to_string(batch_size) +
                  " distinct alphas that express this idea.\n";
  if (!examples.empty()) {
    u += "\nReference examples:\n";
    for (std::size_t k = 0; k < examples.size(); ++k) {
      u += "\nExample " + std::to_string(k + 1) + "\nExpression: " + examples[k].expression +
           "\nExplanation: " + examples[k].explanation + "\n";
    }
  }
  return {ChatMessage{Role::kSystem, system_prompt(), true}, ChatMessage{Role::kUser, u, true}};
}

ChatMessage continuation_prompt(int still_needed) {
  return ChatMessage{Role::kUser,
                     "All alphas so far are valid. Write " + std::to_string(still_needed) +
                         " more distinct alphas for the same idea, in the same block format.\n",
                     false};
}

// ---------------------------------------------------------------------------
// Scripted client
// ---------------------------------------------------------------------------

ScriptedClient::ScriptedClient(std::vector<std::string> replies) : replies_(std::move(replies)) {
  if (replies_.empty()) throw Error(ErrorCode::kInvalidArgument, "scripted transcript has no rounds");
}

ScriptedClient ScriptedClient::from_json(std::string_view json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed transcript: ") + e.what());
  }
  if (!j.contains("rounds") || !j["rounds"].is_object()) {
    throw Error(ErrorCode::kParse, "transcript must have a \"rounds\" object");
  }
  std::map<int, std::string> by_round;
  for (auto it = j["rounds"].begin(); it != j["rounds"].end(); ++it) {
    int r = 0;
    try {
      r = std::stoi(it.key());
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, "transcript round key '" + it.key() + "' is not an integer");
    }
    if (!it.value().is_string()) throw Error(ErrorCode::kParse, "transcript round " + it.key() + " is not a string");
    by_round[r] = it.value().get<std::string>();
  }
  std::vector<std::string> replies;
  int expect = 1;
  for (const auto& [r, text] : by_round) {
    if (r != expect) throw Error(ErrorCode::kParse, "transcript rounds must be numbered 1..n without gaps");
    replies.push_back(text);
    ++expect;
  }
  return ScriptedClient(std::move(replies));
}

ScriptedClient ScriptedClient::from_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

std::string ScriptedClient::complete(const std::vector<ChatMessage>&) {
  const std::size_t k = std::min(calls_, replies_.size() - 1);
  ++calls_;
  return replies_[k];
}

// ---------------------------------------------------------------------------
// Mining loop
// ---------------------------------------------------------------------------

std::string MiningResult::to_json() const {
  ojson j;
  j["rounds"] = rounds;
  auto arr = ojson::array();
  for (const auto& a : alphas) {
    ojson o;
    o["name"] = a.block.name;
    o["expression"] = a.text;
    o["description"] = a.block.description;
    o["round"] = a.round;
    o["missing_fraction"] = a.stats.missing_fraction;
    o["zero_variance_bar_fraction"] = a.stats.zero_variance_bar_fraction;
    arr.push_back(std::move(o));
  }
  j["alphas"] = std::move(arr);
  auto errs = ojson::array();
  for (const auto& e : last_errors) {
    ojson o;
    o["expression"] = e.expression;
    o["verdict"] = verdict_name(e.report.verdict);
    o["message"] = e.report.message;
    errs.push_back(std::move(o));
  }
  j["last_errors"] = std::move(errs);
  j["diagnostics"] = diagnostics;
  j["history"] = nlohmann::ordered_json::parse(history.to_json());
  return j.dump(2);
}

MiningResult mining_loop(std::string_view idea, ChatClient& client, const std::vector<KnowledgeDoc>& library,
                         Embedder& embedder, const MiningConfig& cfg) {
  if (cfg.max_rounds < 1 || cfg.batch_size < 1 || cfg.target_valid < 1 || cfg.k_examples < 0) {
    throw Error(ErrorCode::kInvalidArgument, "mining config needs max_rounds, batch_size, target_valid >= 1");
  }
  MiningResult res;
  res.history.token_budget = cfg.token_budget;
  std::set<std::string> seen;
  std::vector<FailedAlpha> failures;

  for (int round = 1; round <= cfg.max_rounds; ++round) {
    if (round == 1) {
      const auto examples = retrieve_examples(library, idea, static_cast<std::size_t>(cfg.k_examples), embedder);
      res.history.messages = build_prompt(idea, examples, {}, cfg.batch_size);
    } else if (!failures.empty()) {
      for (auto& m : build_prompt(idea, {}, failures, cfg.batch_size)) res.history.messages.push_back(std::move(m));
    } else {
      res.history.messages.push_back(continuation_prompt(cfg.target_valid - static_cast<int>(res.alphas.size())));
    }
    res.history = truncate_history(std::move(res.history));

    std::string reply;
    try {
      reply = client.complete(res.history.messages);
    } catch (const Error& e) {
      res.rounds = round - 1;
      res.last_errors = failures;
      throw MiningError(std::string("chat client failed in round ") + std::to_string(round) + ": " + e.what(),
                        std::move(res));
    }
    res.history.messages.push_back(ChatMessage{Role::kAssistant, reply, false});
    res.rounds = round;

    const auto parsed = parse_response(reply);
    for (const auto& d : parsed.diagnostics) res.diagnostics.push_back("round " + std::to_string(round) + ": " + d);
    failures.clear();
    if (parsed.blocks.empty()) {
      FailedAlpha f;
      f.expression = "(entire response)";
      f.report.verdict = Verdict::kSyntaxError;
      f.report.message = "no Name/Expression blocks could be parsed from the response";
      failures.push_back(std::move(f));
    }
    for (const auto& b : parsed.blocks) {
      auto rep = validate(b.expression);
      if (!rep.valid()) {
        failures.push_back({b.expression, std::move(rep)});
        continue;
      }
      Expr e = parse(b.expression);
      std::string text = print_expr(e);
      if (!seen.insert(text).second) continue;
      res.alphas.push_back({std::move(e), std::move(text), b, round, rep.stats});
    }
    res.last_errors = failures;
    if (static_cast<int>(res.alphas.size()) >= cfg.target_valid) break;
  }
  return res;
}

}  // namespace alphaforge
