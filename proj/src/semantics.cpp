// SPDX-License-Identifier: Apache-2.0
#include "alphaforge/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "alphaforge/engine.hpp"

namespace alphaforge {

std::string Unit::str() const {
  return "(" + std::to_string(price) + "," + std::to_string(volume) + ")";
}

Unit field_unit(std::string_view name) {
  if (name == "volume") return kVolumeUnit;
  if (std::find(std::begin(kPriceFields), std::end(kPriceFields), name) != std::end(kPriceFields)) {
    return kPriceUnit;
  }
  return kDimensionless;
}

namespace {

struct UnitFailure {
  std::string message;
};

Unit infer(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::kField: return field_unit(e.field);
    case Expr::Kind::kInt:
    case Expr::Kind::kNum: return kDimensionless;
    case Expr::Kind::kCall: break;
  }
  const auto& info = op_info(e.op);
  auto bounded = [&](Unit u) {
    if (std::abs(u.price) > Unit::kMaxExponent || std::abs(u.volume) > Unit::kMaxExponent) {
      throw UnitFailure{std::string(info.name) + " produces unit " + u.str() +
                        " beyond exponent bound " + std::to_string(Unit::kMaxExponent)};
    }
    return u;
  };
  switch (info.unit_rule) {
    case UnitRule::kSame: {
      const Unit a = infer(e.args[0]);
      const Unit b = infer(e.args[1]);
      if (a != b) {
        throw UnitFailure{std::string(info.name) + " of incompatible units " + a.str() +
                          " and " + b.str()};
      }
      return a;
    }
    case UnitRule::kProduct: {
      const Unit a = infer(e.args[0]);
      const Unit b = infer(e.args[1]);
      return bounded({a.price + b.price, a.volume + b.volume});
    }
    case UnitRule::kQuotient: {
      const Unit a = infer(e.args[0]);
      const Unit b = infer(e.args[1]);
      return bounded({a.price - b.price, a.volume - b.volume});
    }
    case UnitRule::kPreserve: {
      const Unit a = infer(e.args[0]);
      return a;
    }
    case UnitRule::kDimensionless: {
      for (int k = 0; k < info.arity; ++k)
        if (k != info.window_slot) infer(e.args[static_cast<std::size_t>(k)]);
      return kDimensionless;
    }
  }
  return kDimensionless;
}

ValidationReport make_report(Verdict v, std::string message,
                             std::optional<std::size_t> offset = std::nullopt) {
  ValidationReport r;
  r.verdict = v;
  r.message = std::move(message);
  r.offset = offset;
  return r;
}

}  // namespace

Unit infer_unit(const Expr& e) {
  try {
    return infer(e);
  } catch (const UnitFailure& f) {
    throw Error(ErrorCode::kUnit, "unit error: " + f.message);
  }
}

std::optional<Unit> try_infer_unit(const Expr& e, std::string* why) {
  try {
    return infer(e);
  } catch (const UnitFailure& f) {
    if (why) *why = "unit error: " + f.message;
    return std::nullopt;
  }
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kValid: return "valid";
    case Verdict::kSyntaxError: return "syntax_error";
    case Verdict::kUnitError: return "unit_error";
    case Verdict::kSemanticError: return "semantic_error";
  }
  return "?";
}

std::string ValidationReport::to_line() const {
  if (valid()) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "valid (missing_fraction=%.4f, zero_variance_bar_fraction=%.4f)",
                  stats.missing_fraction, stats.zero_variance_bar_fraction);
    return buf;
  }
  std::string line = verdict_name(verdict);
  line += ": ";
  line += message;
  return line;
}

std::string ValidationReport::to_json() const {
  nlohmann::ordered_json j;
  j["verdict"] = verdict_name(verdict);
  j["message"] = message;
  if (offset) j["offset"] = *offset;
  else j["offset"] = nullptr;
  j["missing_fraction"] = stats.missing_fraction;
  j["zero_variance_bar_fraction"] = stats.zero_variance_bar_fraction;
  return j.dump();
}

const Panel& mock_panel() {
  static const Panel panel = [] {
    SynthOptions opt;
    opt.n_dates = 60;
    opt.n_instruments = 10;
    opt.n_sectors = 2;
    opt.seed = 42;
    return generate_synthetic(opt).panel;
  }();
  return panel;
}

ValidationReport check_semantics(const Expr& e, const Panel& mock) {
  AlphaMatrix alpha;
  try {
    alpha = eval_batch(e, mock, 1);
  } catch (const std::exception& ex) {
    return make_report(Verdict::kSemanticError, std::string("evaluation failed: ") + ex.what());
  }
  const std::size_t T = alpha.values.rows, N = alpha.values.cols;
  const std::size_t warmup = std::min<std::size_t>(static_cast<std::size_t>(lookback(e)), T);
  std::size_t cells = 0, missing = 0, bars = 0, flat_bars = 0;
  for (std::size_t t = warmup; t < T; ++t) {
    double lo = 0.0, hi = 0.0;
    std::size_t defined = 0;
    for (std::size_t i = 0; i < N; ++i) {
      const double v = alpha.values(t, i);
      ++cells;
      if (is_missing(v)) {
        ++missing;
        continue;
      }
      if (defined == 0) lo = hi = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ++defined;
    }
    if (defined >= 2) {
      ++bars;
      if (lo == hi) ++flat_bars;
    }
  }
  ValidationReport r;
  r.stats.missing_fraction = cells == 0 ? 1.0 : static_cast<double>(missing) / cells;
  r.stats.zero_variance_bar_fraction = bars == 0 ? 1.0 : static_cast<double>(flat_bars) / bars;
  if (cells == 0 || missing == cells) {
    r.verdict = Verdict::kSemanticError;
    r.message = "alpha is missing everywhere after the warm-up rows";
  } else if (bars == 0 || flat_bars == bars) {
    r.verdict = Verdict::kSemanticError;
    r.message = "alpha has zero cross-sectional variance on every bar";
  }
  return r;
}

ValidationReport validate_expr(const Expr& e) {
  try {
    check_structure(e);
  } catch (const Error& ex) {
    return make_report(Verdict::kSyntaxError, ex.what());
  }
  std::string why;
  if (!try_infer_unit(e, &why)) return make_report(Verdict::kUnitError, why);
  return check_semantics(e, mock_panel());
}

ValidationReport validate(std::string_view text) {
  Expr e;
  try {
    e = parse(text);
  } catch (const SyntaxError& ex) {
    return make_report(Verdict::kSyntaxError, ex.what(), ex.offset());
  } catch (const Error& ex) {
    return make_report(Verdict::kSyntaxError, ex.what());
  }
  std::string why;
  if (!try_infer_unit(e, &why)) return make_report(Verdict::kUnitError, why);
  return check_semantics(e, mock_panel());
}

}  // namespace alphaforge
