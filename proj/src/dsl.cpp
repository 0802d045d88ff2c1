// SPDX-License-Identifier: Apache-2.0
#include "alphaforge/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

namespace alphaforge {

namespace {

using C = OpCategory;
using U = UnitRule;

constexpr std::array<OperatorInfo, kOperatorCount> kTable = {{
    {Op::kAdd, "add", C::kElementwise, 2, -1, 0, U::kSame},
    {Op::kSub, "sub", C::kElementwise, 2, -1, 0, U::kSame},
    {Op::kMul, "mul", C::kElementwise, 2, -1, 0, U::kProduct},
    {Op::kDiv, "div", C::kElementwise, 2, -1, 0, U::kQuotient},
    {Op::kAbs, "abs", C::kElementwise, 1, -1, 0, U::kPreserve},
    {Op::kLog, "log", C::kElementwise, 1, -1, 0, U::kDimensionless},
    {Op::kSign, "sign", C::kElementwise, 1, -1, 0, U::kDimensionless},
    {Op::kTsDelay, "ts_delay", C::kTimeSeries, 2, 1, 1, U::kPreserve},
    {Op::kTsDelta, "ts_delta", C::kTimeSeries, 2, 1, 1, U::kPreserve},
    {Op::kTsMean, "ts_mean", C::kTimeSeries, 2, 1, 1, U::kPreserve},
    {Op::kTsStd, "ts_std", C::kTimeSeries, 2, 1, 2, U::kPreserve},
    {Op::kTsMin, "ts_min", C::kTimeSeries, 2, 1, 1, U::kPreserve},
    {Op::kTsMax, "ts_max", C::kTimeSeries, 2, 1, 1, U::kPreserve},
    {Op::kTsRank, "ts_rank", C::kTimeSeries, 2, 1, 1, U::kDimensionless},
    {Op::kTsCorr, "ts_corr", C::kTimeSeries, 3, 2, 2, U::kDimensionless},
    {Op::kCsRank, "cs_rank", C::kCrossSectional, 1, -1, 0, U::kDimensionless},
    {Op::kCsZscore, "cs_zscore", C::kCrossSectional, 1, -1, 0, U::kDimensionless},
    {Op::kGroupMean, "group_mean", C::kGroup, 1, -1, 0, U::kPreserve},
    {Op::kGroupNeutralize, "group_neutralize", C::kGroup, 1, -1, 0, U::kPreserve},
}};

}  // namespace

const std::array<OperatorInfo, kOperatorCount>& operator_table() { return kTable; }

const OperatorInfo& op_info(Op op) { return kTable[static_cast<std::size_t>(op)]; }

std::optional<Op> find_operator(std::string_view name) {
  for (const auto& info : kTable)
    if (info.name == name) return info.op;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Expr
// ---------------------------------------------------------------------------

Expr Expr::field_ref(std::string name) {
  Expr e;
  e.kind = Kind::kField;
  e.field = std::move(name);
  return e;
}

Expr Expr::int_lit(std::int64_t v) {
  Expr e;
  e.kind = Kind::kInt;
  e.int_value = v;
  return e;
}

Expr Expr::num_lit(double v) {
  Expr e;
  e.kind = Kind::kNum;
  e.num_value = v;
  return e;
}

Expr Expr::call(Op op, std::vector<Expr> args) {
  Expr e;
  e.kind = Kind::kCall;
  e.op = op;
  e.args = std::move(args);
  return e;
}

bool Expr::operator==(const Expr& o) const {
  if (kind != o.kind) return false;
  switch (kind) {
    case Kind::kField: return field == o.field;
    case Kind::kInt: return int_value == o.int_value;
    // Bitwise-equal doubles (so -0.0 != 0.0 but equal values compare equal).
    case Kind::kNum: return num_value == o.num_value && std::signbit(num_value) == std::signbit(o.num_value);
    case Kind::kCall: return op == o.op && args == o.args;
  }
  return false;
}

int complexity(const Expr& e) {
  int n = 1;
  for (const auto& a : e.args) n += complexity(a);
  return n;
}

int depth(const Expr& e) {
  int d = 0;
  for (const auto& a : e.args) d = std::max(d, depth(a));
  return d + 1;
}

namespace {

void print_into(const Expr& e, std::string& out) {
  switch (e.kind) {
    case Expr::Kind::kField: out += e.field; return;
    case Expr::Kind::kInt: out += std::to_string(e.int_value); return;
    case Expr::Kind::kNum: out += format_double(e.num_value); return;
    case Expr::Kind::kCall:
      out += op_info(e.op).name;
      out += '(';
      for (std::size_t k = 0; k < e.args.size(); ++k) {
        if (k) out += ", ";
        print_into(e.args[k], out);
      }
      out += ')';
      return;
  }
}

void collect_fields(const Expr& e, std::set<std::string>& out) {
  if (e.kind == Expr::Kind::kField) out.insert(e.field);
  for (const auto& a : e.args) collect_fields(a, out);
}

}  // namespace

std::string print_expr(const Expr& e) {
  std::string out;
  print_into(e, out);
  return out;
}

std::vector<std::string> referenced_fields(const Expr& e) {
  std::set<std::string> s;
  collect_fields(e, s);
  return {s.begin(), s.end()};
}

void check_structure(const Expr& e, int max_depth) {
  if (depth(e) > max_depth) {
    throw Error(ErrorCode::kInvalidArgument,
                "expression depth " + std::to_string(depth(e)) + " exceeds cap " +
                    std::to_string(max_depth));
  }
  auto rec = [](auto&& self, const Expr& n, bool window_slot) -> void {
    if (n.kind == Expr::Kind::kInt && !window_slot) {
      throw Error(ErrorCode::kInvalidArgument, "integer literal outside a window slot");
    }
    if (n.kind != Expr::Kind::kCall) return;
    const auto& info = op_info(n.op);
    if (static_cast<int>(n.args.size()) != info.arity) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string(info.name) + " expects " + std::to_string(info.arity) +
                      " arguments, got " + std::to_string(n.args.size()));
    }
    for (int k = 0; k < info.arity; ++k) {
      const Expr& a = n.args[static_cast<std::size_t>(k)];
      if (k == info.window_slot) {
        if (a.kind != Expr::Kind::kInt) {
          throw Error(ErrorCode::kInvalidArgument,
                      std::string(info.name) + " window must be an integer literal");
        }
        if (a.int_value < info.min_window || a.int_value > kMaxWindow) {
          throw Error(ErrorCode::kInvalidArgument,
                      std::string(info.name) + " window " + std::to_string(a.int_value) +
                          " outside [" + std::to_string(info.min_window) + ", " +
                          std::to_string(kMaxWindow) + "]");
        }
      }
      self(self, a, k == info.window_slot);
    }
  };
  rec(rec, e, false);
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

const char* token_kind_name(TokenKind k) {
  switch (k) {
    case TokenKind::kIdent: return "identifier";
    case TokenKind::kInt: return "integer";
    case TokenKind::kFloat: return "number";
    case TokenKind::kLParen: return "'('";
    case TokenKind::kRParen: return "')'";
    case TokenKind::kComma: return "','";
    case TokenKind::kPlus: return "'+'";
    case TokenKind::kMinus: return "'-'";
    case TokenKind::kStar: return "'*'";
    case TokenKind::kSlash: return "'/'";
    case TokenKind::kEnd: return "end of input";
  }
  return "?";
}

namespace {

std::string syntax_message(std::size_t offset, const std::string& detail,
                           const std::vector<std::string>& expected) {
  std::string msg = "syntax error at offset " + std::to_string(offset) + ": " + detail;
  if (!expected.empty()) {
    msg += " (expected ";
    for (std::size_t k = 0; k < expected.size(); ++k) {
      if (k) msg += k + 1 == expected.size() ? " or " : ", ";
      msg += expected[k];
    }
    msg += ")";
  }
  return msg;
}

}  // namespace

SyntaxError::SyntaxError(std::size_t offset, std::string message,
                         std::vector<std::string> expected)
    : Error(ErrorCode::kParse, syntax_message(offset, message, expected)),
      offset_(offset),
      detail_(std::move(message)),
      expected_(std::move(expected)) {}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto is_digit = [&](std::size_t k) {
    return k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]));
  };
  while (i < text.size()) {
    const char c = text[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_'))
        ++i;
      out.push_back({TokenKind::kIdent, text.substr(start, i - start), start});
      continue;
    }
    if (is_digit(i) || (c == '.' && is_digit(i + 1))) {
      bool is_float = false;
      while (is_digit(i)) ++i;
      if (i < text.size() && text[i] == '.') {
        is_float = true;
        ++i;
        while (is_digit(i)) ++i;
      }
      if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
        std::size_t k = i + 1;
        if (k < text.size() && (text[k] == '+' || text[k] == '-')) ++k;
        if (is_digit(k)) {
          is_float = true;
          i = k;
          while (is_digit(i)) ++i;
        }
      }
      out.push_back({is_float ? TokenKind::kFloat : TokenKind::kInt,
                     text.substr(start, i - start), start});
      continue;
    }
    TokenKind k;
    switch (c) {
      case '(': k = TokenKind::kLParen; break;
      case ')': k = TokenKind::kRParen; break;
      case ',': k = TokenKind::kComma; break;
      case '+': k = TokenKind::kPlus; break;
      case '-': k = TokenKind::kMinus; break;
      case '*': k = TokenKind::kStar; break;
      case '/': k = TokenKind::kSlash; break;
      default:
        throw SyntaxError(i, "illegal character '" + std::string(1, c) + "'");
    }
    out.push_back({k, text.substr(i, 1), i});
    ++i;
  }
  out.push_back({TokenKind::kEnd, text.substr(text.size()), text.size()});
  return out;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

// Precedence climbing over:
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | primary
//   primary := NUMBER | IDENT | IDENT '(' args ')' | '(' expr ')'
class Parser {
 public:
  explicit Parser(std::string_view text) : tokens_(tokenize(text)) {}

  Expr parse_all() {
    Expr e = parse_sum();
    if (peek().kind != TokenKind::kEnd) {
      fail("unexpected " + describe(peek()),
           {"'+'", "'-'", "'*'", "'/'", token_kind_name(TokenKind::kEnd)});
    }
    return e;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& advance() { return tokens_[pos_++]; }

  [[noreturn]] void fail(const std::string& msg, std::vector<std::string> expected = {}) const {
    throw SyntaxError(peek().offset, msg, std::move(expected));
  }

  static std::string describe(const Token& t) {
    if (t.kind == TokenKind::kEnd) return "end of input";
    return std::string(token_kind_name(t.kind)) + " '" + std::string(t.lexeme) + "'";
  }

  static std::vector<std::string> operand_start() {
    return {"identifier", "number", "'('", "'-'"};
  }

  Expr parse_sum() {
    Expr lhs = parse_product();
    while (peek().kind == TokenKind::kPlus || peek().kind == TokenKind::kMinus) {
      const Op op = advance().kind == TokenKind::kPlus ? Op::kAdd : Op::kSub;
      Expr rhs = parse_product();
      lhs = Expr::call(op, {std::move(lhs), std::move(rhs)});
    }
    return lhs;
  }

  Expr parse_product() {
    Expr lhs = parse_unary();
    while (peek().kind == TokenKind::kStar || peek().kind == TokenKind::kSlash) {
      const Op op = advance().kind == TokenKind::kStar ? Op::kMul : Op::kDiv;
      Expr rhs = parse_unary();
      lhs = Expr::call(op, {std::move(lhs), std::move(rhs)});
    }
    return lhs;
  }

  Expr parse_unary() {
    if (peek().kind == TokenKind::kMinus) {
      advance();
      Expr inner = parse_unary();
      // A negated literal folds into the literal so mul(-1, x) round-trips.
      if (inner.kind == Expr::Kind::kNum) return Expr::num_lit(-inner.num_value);
      return Expr::call(Op::kMul, {Expr::num_lit(-1.0), std::move(inner)});
    }
    return parse_primary();
  }

  Expr parse_number(const Token& t) {
    return Expr::num_lit(parse_double(t.lexeme));
  }

  Expr parse_primary() {
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::kInt:
      case TokenKind::kFloat:
        advance();
        return parse_number(t);
      case TokenKind::kLParen: {
        advance();
        Expr e = parse_sum();
        expect(TokenKind::kRParen, {"')'", "'+'", "'-'", "'*'", "'/'"});
        return e;
      }
      case TokenKind::kIdent: {
        advance();
        if (peek().kind != TokenKind::kLParen) return Expr::field_ref(std::string(t.lexeme));
        return parse_call(t);
      }
      default:
        fail("unexpected " + describe(t), operand_start());
    }
  }

  void expect(TokenKind k, std::vector<std::string> expected) {
    if (peek().kind != k) fail("unexpected " + describe(peek()), std::move(expected));
    advance();
  }

  Expr parse_window(const OperatorInfo& info) {
    const Token& t = peek();
    if (t.kind != TokenKind::kInt) {
      fail(std::string(info.name) + " window must be an integer literal, got " + describe(t),
           {"integer"});
    }
    std::int64_t v = 0;
    auto res = std::from_chars(t.lexeme.data(), t.lexeme.data() + t.lexeme.size(), v);
    if (res.ec != std::errc{} || v < info.min_window || v > kMaxWindow) {
      fail(std::string(info.name) + " window " + std::string(t.lexeme) + " outside [" +
           std::to_string(info.min_window) + ", " + std::to_string(kMaxWindow) + "]");
    }
    advance();
    return Expr::int_lit(v);
  }

  Expr parse_call(const Token& name) {
    const auto op = find_operator(name.lexeme);
    if (!op) {
      throw SyntaxError(name.offset, "unknown operator '" + std::string(name.lexeme) + "'");
    }
    const auto& info = op_info(*op);
    advance();  // '('
    std::vector<Expr> args;
    if (peek().kind != TokenKind::kRParen) {
      while (true) {
        const int slot = static_cast<int>(args.size());
        if (slot == info.window_slot) {
          args.push_back(parse_window(info));
        } else {
          args.push_back(parse_sum());
        }
        if (peek().kind == TokenKind::kComma) {
          advance();
          continue;
        }
        break;
      }
    }
    if (peek().kind != TokenKind::kRParen) {
      fail("unexpected " + describe(peek()), {"','", "')'"});
    }
    if (static_cast<int>(args.size()) != info.arity) {
      throw SyntaxError(name.offset, std::string(info.name) + " expects " +
                                         std::to_string(info.arity) + " arguments, got " +
                                         std::to_string(args.size()));
    }
    advance();
    return Expr::call(*op, std::move(args));
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse(std::string_view text, int max_depth) {
  Expr e = Parser(text).parse_all();
  const int d = depth(e);
  if (d > max_depth) {
    throw SyntaxError(0, "expression depth " + std::to_string(d) + " exceeds cap " +
                             std::to_string(max_depth));
  }
  return e;
}

}  // namespace alphaforge
