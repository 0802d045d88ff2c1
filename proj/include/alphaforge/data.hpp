// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "alphaforge/common.hpp"

namespace alphaforge {

using Date = std::chrono::sys_days;

/// Parses YYYY-MM-DD; throws kParse on anything else.
Date parse_date(std::string_view text);
std::string format_date(Date d);

inline constexpr std::string_view kPriceFields[] = {"open", "high", "low", "close", "vwap"};
inline constexpr std::string_view kStandardFields[] = {"open", "high", "low",
                                                       "close", "volume", "vwap"};

/// Timestamped date axis x instrument axis with named T x N field matrices.
/// Immutable once built; safe to share across readers.
class Panel {
 public:
  Panel() = default;

  /// Validates every invariant (strictly increasing dates, shared shape,
  /// price positivity, volume non-negativity) and throws kInvalidArgument on
  /// violation.
  Panel(std::vector<Date> dates, std::vector<std::string> instruments,
        std::map<std::string, Matrix, std::less<>> fields,
        std::vector<std::string> sectors);

  std::size_t n_dates() const { return dates_.size(); }
  std::size_t n_instruments() const { return instruments_.size(); }

  const std::vector<Date>& dates() const { return dates_; }
  const std::vector<std::string>& instruments() const { return instruments_; }
  const std::vector<std::string>& sectors() const { return sectors_; }

  /// Dense group index per instrument (order of first appearance).
  const std::vector<int>& sector_ids() const { return sector_ids_; }
  int n_sectors() const { return n_sectors_; }

  bool has_field(std::string_view name) const { return fields_.find(name) != fields_.end(); }
  const Matrix& field(std::string_view name) const;
  const std::map<std::string, Matrix, std::less<>>& fields() const { return fields_; }

  /// Rows [begin, end) as a new panel.
  Panel slice_rows(std::size_t begin, std::size_t end) const;

  /// Copy with one field replaced or added. Used by audits and test fixtures.
  Panel with_field(std::string name, Matrix values) const;

  /// Content hash (hex SHA-256) of the canonical CSV rendering.
  std::string fingerprint() const;

 private:
  std::vector<Date> dates_;
  std::vector<std::string> instruments_;
  std::map<std::string, Matrix, std::less<>> fields_;
  std::vector<std::string> sectors_;
  std::vector<int> sector_ids_;
  int n_sectors_ = 0;
};

/// Forward-return labels aligned to a panel's axes.
struct LabelMatrix {
  Matrix values;
  int horizon = 5;
  int lag = 1;
};

/// Reads the panel CSV format (date,symbol,open,high,low,close,volume[,vwap][,sector]).
/// In strict mode a non-positive price or negative volume is rejected;
/// otherwise such cells become missing.
Panel load_csv(const std::filesystem::path& path, bool strict = true);
Panel parse_csv(std::string_view text, bool strict = true);

/// Canonical writer: rows sorted by (date, symbol), floats in shortest
/// round-trip form, empty cell for missing.
std::string to_csv(const Panel& panel);
void write_csv(const Panel& panel, const std::filesystem::path& path);

struct SynthOptions {
  int n_dates = 500;
  int n_instruments = 100;
  int n_sectors = 4;
  std::optional<std::string> plant;
  double plant_strength = 0.0;
  std::uint64_t seed = 0;
  int horizon = 5;
  int lag = 1;
  /// Restrict generated fields (empty = all six). The random stream is the
  /// same either way, so a subset panel matches the full one field-for-field.
  std::vector<std::string> fields;
};

struct SyntheticData {
  Panel panel;
  LabelMatrix labels;
};

/// Geometric random-walk OHLCV panel. With a plant expression, labels are
/// strength * cs_zscore(plant) + N(0,1) noise; otherwise they are forward returns.
SyntheticData generate_synthetic(const SynthOptions& options);

/// values[t][i] = close[t+lag+horizon][i] / close[t+lag][i] - 1.
LabelMatrix forward_returns(const Panel& panel, int horizon = 5, int lag = 1);

}  // namespace alphaforge
