// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "alphaforge/data.hpp"
#include "alphaforge/dsl.hpp"

namespace alphaforge {

/// Exponents over the base dimensions {price, volume}.
struct Unit {
  int price = 0;
  int volume = 0;

  static constexpr int kMaxExponent = 4;

  bool dimensionless() const { return price == 0 && volume == 0; }
  bool operator==(const Unit&) const = default;
  std::string str() const;  // "(1,0)"
};

inline constexpr Unit kPriceUnit{1, 0};
inline constexpr Unit kVolumeUnit{0, 1};
inline constexpr Unit kDimensionless{0, 0};

/// Unit of a named field; non-standard fields are dimensionless.
Unit field_unit(std::string_view name);

/// Throws Error(kUnit) naming the operator and child units on a violation.
Unit infer_unit(const Expr& e);

/// Non-throwing variant for hot paths; fills `why` on failure when given.
std::optional<Unit> try_infer_unit(const Expr& e, std::string* why = nullptr);

enum class Verdict { kValid, kSyntaxError, kUnitError, kSemanticError };

const char* verdict_name(Verdict v);

struct ValidationStats {
  double missing_fraction = 1.0;
  double zero_variance_bar_fraction = 1.0;
};

struct ValidationReport {
  Verdict verdict = Verdict::kValid;
  std::string message;
  std::optional<std::size_t> offset;
  ValidationStats stats;

  bool valid() const { return verdict == Verdict::kValid; }
  /// One-line human rendering for the CLI.
  std::string to_line() const;
  /// Structured rendering (JSON object text) for correction prompts and files.
  std::string to_json() const;
};

/// Fixed seeded mock panel (10 instruments x 60 bars, 2 sectors, seed 42).
const Panel& mock_panel();

/// Evaluates on `mock` and flags internal errors, all-missing output after
/// the warm-up rows, or zero cross-sectional variance on every bar.
ValidationReport check_semantics(const Expr& e, const Panel& mock);

/// parse -> infer_unit -> check_semantics; first failing stage wins.
ValidationReport validate(std::string_view text);
/// Same pipeline starting from an already-built tree (structure is rechecked).
ValidationReport validate_expr(const Expr& e);

}  // namespace alphaforge
