// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "alphaforge/data.hpp"

namespace alphaforge {

struct AlphaMetrics {
  double mean_ic = kMissing;
  double ic_ir = kMissing;
  double sharpe = kMissing;
  double annual_return = kMissing;
};

/// One AlphaBase entry. reference_values holds the full T x N alpha matrix
/// on the store's reference panel (row-major, missing cells as NaN).
struct AlphaRecord {
  std::string id;
  std::string name;
  std::string expression;
  std::string description;
  std::vector<std::string> tags;
  AlphaMetrics metrics;
  std::string created_at;  // ISO-8601 UTC
  std::vector<double> reference_values;

  std::string to_json_line() const;
  static AlphaRecord from_json_line(std::string_view line);
  bool operator==(const AlphaRecord& other) const;  // NaN-aware
};

/// Builds a record: validates `expression` (throws kSemantic/kUnit/kParse),
/// evaluates it on `reference`, and scores it against forward returns of
/// the reference close with the given horizon/lag.
AlphaRecord make_record(const std::string& expression, const Panel& reference, const std::string& name = "",
                        const std::string& description = "", std::vector<std::string> tags = {},
                        int horizon = 5, int lag = 1);

std::string utc_timestamp_now();

/// Random-hyperplane signature bits, packed 64 per word.
struct Signature {
  std::vector<std::uint64_t> words;
  int n_bits = 0;
};

/// cos(pi * hamming / n). Throws kInvalidArgument on a length mismatch.
double lsh_estimate(const Signature& a, const Signature& b);

/// Gaussian hyperplanes of a fixed dimension drawn from one seed.
class LshPlanes {
 public:
  LshPlanes(int n_planes, std::uint64_t seed, std::size_t dim);
  /// Centers the defined cells, zero-fills missing cells, then takes signs.
  Signature sign(const std::vector<double>& values) const;
  int n_planes() const { return n_planes_; }
  std::size_t dim() const { return dim_; }

 private:
  int n_planes_;
  std::size_t dim_;
  std::vector<float> planes_;  // n_planes x dim
};

/// Pearson correlation over jointly defined cells.
double record_correlation(const std::vector<double>& a, const std::vector<double>& b);

struct PoolHeader {
  std::string reference_panel_fingerprint;
  double corr_cap = 0.7;
  int n_planes = 256;
  std::uint64_t plane_seed = 0x5eedULL;
  std::size_t n_dates = 0;
  std::size_t n_instruments = 0;
};

struct CorrelationMatch {
  std::string id;
  double corr = kMissing;  // signed
};

struct InsertOutcome {
  bool accepted = false;
  std::string reason;  // empty when accepted
  std::optional<CorrelationMatch> nearest;
};

/// Directory-backed store: header.json + records.jsonl (append-only).
/// Inserts serialize through an internal lock; the LSH index is rebuilt on open.
class AlphaPool {
 public:
  /// Creates the directory and header; throws kIo if a store already exists.
  static AlphaPool create(const std::filesystem::path& dir, const Panel& reference, double corr_cap = 0.7,
                          int n_planes = 256, std::uint64_t plane_seed = 0x5eedULL);
  static AlphaPool open(const std::filesystem::path& dir);
  /// Opens when present (checking the fingerprint), otherwise creates.
  static AlphaPool open_or_create(const std::filesystem::path& dir, const Panel& reference, double corr_cap = 0.7);

  AlphaPool(AlphaPool&&) noexcept;
  AlphaPool& operator=(AlphaPool&&) noexcept;
  ~AlphaPool();

  const PoolHeader& header() const;
  const std::vector<AlphaRecord>& records() const;
  std::size_t size() const { return records().size(); }
  bool contains(const std::string& id) const;
  const AlphaRecord& get(const std::string& id) const;

  /// Throws kInvalidArgument when `panel` is not the store's reference panel.
  void check_reference(const Panel& panel) const;

  /// Rejects duplicate ids and candidates whose max |corr| exceeds corr_cap
  /// (`corr_cap` overrides the header value when given); appends accepted
  /// records to records.jsonl.
  InsertOutcome insert(const AlphaRecord& candidate, std::optional<double> corr_cap = std::nullopt);

  /// Member with the greatest |corr| to `values`. With `use_lsh`, only the
  /// top_m members by estimated |corr| are scored exactly. Throws on an empty store.
  CorrelationMatch max_correlation(const std::vector<double>& values, bool use_lsh = false,
                                   std::size_t top_m = 50) const;

  const Signature& signature(const std::string& id) const;
  Signature sign(const std::vector<double>& values) const;

 private:
  struct State;
  explicit AlphaPool(std::unique_ptr<State> s);
  std::unique_ptr<State> s_;
};

/// Leave-in contribution: mean IC of the equal-weight composite of
/// per-bar z-scored member alphas with the candidate, minus without it.
/// Throws kInvalidArgument on an empty member list or a degenerate composite.
double marginal_score(const AlphaPool& pool, const std::vector<double>& candidate_values,
                      const std::vector<std::string>& member_ids, const Matrix& labels);

}  // namespace alphaforge
