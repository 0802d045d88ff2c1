// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alphaforge/common.hpp"

namespace alphaforge {

// ---------------------------------------------------------------------------
// Operator table
// ---------------------------------------------------------------------------

enum class Op : std::uint8_t {
  kAdd,
  kSub,
  kMul,
  kDiv,
  kAbs,
  kLog,
  kSign,
  kTsDelay,
  kTsDelta,
  kTsMean,
  kTsStd,
  kTsMin,
  kTsMax,
  kTsRank,
  kTsCorr,
  kCsRank,
  kCsZscore,
  kGroupMean,
  kGroupNeutralize,
};

inline constexpr int kOperatorCount = 19;

enum class OpCategory : std::uint8_t { kElementwise, kTimeSeries, kCrossSectional, kGroup };

/// How an operator's output unit derives from its children's units.
enum class UnitRule : std::uint8_t {
  kSame,           // add/sub: children must agree, result is that unit
  kProduct,        // mul
  kQuotient,       // div
  kPreserve,       // unary-in-value ops that keep the unit of arg 0
  kDimensionless,  // result is (0, 0) whatever the input
};

struct OperatorInfo {
  Op op;
  std::string_view name;
  OpCategory category;
  int arity;             // including the window argument, if any
  int window_slot;       // argument index of the window literal, or -1
  int min_window;        // legal window/period lower bound
  UnitRule unit_rule;
};

inline constexpr int kMaxWindow = 250;
inline constexpr int kDefaultMaxDepth = 10;

const std::array<OperatorInfo, kOperatorCount>& operator_table();
const OperatorInfo& op_info(Op op);
std::optional<Op> find_operator(std::string_view name);

// ---------------------------------------------------------------------------
// Expression tree
// ---------------------------------------------------------------------------

/// Alpha formula AST. Value type: copying copies the subtree.
struct Expr {
  enum class Kind : std::uint8_t { kField, kInt, kNum, kCall };

  Kind kind = Kind::kNum;
  Op op = Op::kAdd;       // kCall only
  std::string field;      // kField only
  std::int64_t int_value = 0;  // kInt only (window / period literals)
  double num_value = 0.0;      // kNum only
  std::vector<Expr> args;      // kCall only

  static Expr field_ref(std::string name);
  static Expr int_lit(std::int64_t v);
  static Expr num_lit(double v);
  static Expr call(Op op, std::vector<Expr> args);

  bool is_call() const { return kind == Kind::kCall; }
  bool operator==(const Expr& other) const;
};

/// Total node count, literals included.
int complexity(const Expr& e);
/// Leaf depth is 1.
int depth(const Expr& e);

/// Canonical function-call form: no infix, ", " between arguments.
std::string print_expr(const Expr& e);

/// Names of fields referenced by the expression, sorted and unique.
std::vector<std::string> referenced_fields(const Expr& e);

/// Throws kInvalidArgument when arity, window range or depth constraints fail.
void check_structure(const Expr& e, int max_depth = kDefaultMaxDepth);

// ---------------------------------------------------------------------------
// Lexing and parsing
// ---------------------------------------------------------------------------

enum class TokenKind : std::uint8_t {
  kIdent,
  kInt,
  kFloat,
  kLParen,
  kRParen,
  kComma,
  kPlus,
  kMinus,
  kStar,
  kSlash,
  kEnd,
};

const char* token_kind_name(TokenKind k);

struct Token {
  TokenKind kind;
  std::string_view lexeme;  // view into the tokenized text
  std::size_t offset;
};

/// Syntax failure with byte offset and the set of token kinds that would
/// have been accepted there (empty when not applicable).
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, std::string message, std::vector<std::string> expected = {});
  std::size_t offset() const { return offset_; }
  const std::vector<std::string>& expected() const { return expected_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t offset_;
  std::string detail_;
  std::vector<std::string> expected_;
};

/// Token list ending with a kEnd sentinel. Whitespace is skipped.
std::vector<Token> tokenize(std::string_view text);

/// Accepts call form plus +,-,*,/ infix sugar (standard precedence, left
/// associative, unary minus, parentheses). Throws SyntaxError.
Expr parse(std::string_view text, int max_depth = kDefaultMaxDepth);

}  // namespace alphaforge
