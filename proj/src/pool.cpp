// SPDX-License-Identifier: Apache-2.0
#include "alphaforge/pool.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "alphaforge/engine.hpp"
#include "alphaforge/metrics.hpp"
#include "alphaforge/rng.hpp"
#include "alphaforge/semantics.hpp"

namespace alphaforge {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

ojson num_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

double num_from(const nlohmann::json& j) {
  if (j.is_null()) return kMissing;
  if (!j.is_number()) throw Error(ErrorCode::kParse, "expected a number or null");
  return j.get<double>();
}

bool same_double(double a, double b) {
  return (is_missing(a) && is_missing(b)) || std::memcmp(&a, &b, sizeof(double)) == 0;
}

}  // namespace

std::string AlphaRecord::to_json_line() const {
  ojson j;
  j["id"] = id;
  j["name"] = name;
  j["expression"] = expression;
  j["description"] = description;
  j["tags"] = tags;
  ojson m;
  m["mean_ic"] = num_or_null(metrics.mean_ic);
  m["ic_ir"] = num_or_null(metrics.ic_ir);
  m["sharpe"] = num_or_null(metrics.sharpe);
  m["annual_return"] = num_or_null(metrics.annual_return);
  j["metrics"] = std::move(m);
  j["created_at"] = created_at;
  auto vals = ojson::array();
  for (double v : reference_values) vals.push_back(num_or_null(v));
  j["reference_values"] = std::move(vals);
  return j.dump();
}

AlphaRecord AlphaRecord::from_json_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed record: ") + e.what());
  }
  try {
    AlphaRecord r;
    r.id = j.at("id").get<std::string>();
    r.name = j.value("name", "");
    r.expression = j.at("expression").get<std::string>();
    r.description = j.value("description", "");
    r.tags = j.value("tags", std::vector<std::string>{});
    if (j.contains("metrics")) {
      const auto& m = j["metrics"];
      r.metrics.mean_ic = m.contains("mean_ic") ? num_from(m["mean_ic"]) : kMissing;
      r.metrics.ic_ir = m.contains("ic_ir") ? num_from(m["ic_ir"]) : kMissing;
      r.metrics.sharpe = m.contains("sharpe") ? num_from(m["sharpe"]) : kMissing;
      r.metrics.annual_return = m.contains("annual_return") ? num_from(m["annual_return"]) : kMissing;
    }
    r.created_at = j.value("created_at", "");
    if (j.contains("reference_values")) {
      for (const auto& v : j["reference_values"]) r.reference_values.push_back(num_from(v));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed record: ") + e.what());
  }
}

bool AlphaRecord::operator==(const AlphaRecord& o) const {
  if (id != o.id || name != o.name || expression != o.expression || description != o.description ||
      tags != o.tags || created_at != o.created_at || reference_values.size() != o.reference_values.size()) {
    return false;
  }
  if (!same_double(metrics.mean_ic, o.metrics.mean_ic) || !same_double(metrics.ic_ir, o.metrics.ic_ir) ||
      !same_double(metrics.sharpe, o.metrics.sharpe) ||
      !same_double(metrics.annual_return, o.metrics.annual_return)) {
    return false;
  }
  for (std::size_t k = 0; k < reference_values.size(); ++k)
    if (!same_double(reference_values[k], o.reference_values[k])) return false;
  return true;
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  const auto day = std::chrono::floor<std::chrono::days>(now);
  const std::chrono::hh_mm_ss hms(now - day);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%sT%02d:%02d:%02dZ", format_date(day).c_str(),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

AlphaRecord make_record(const std::string& expression, const Panel& reference, const std::string& name,
                        const std::string& description, std::vector<std::string> tags, int horizon, int lag) {
  const auto rep = validate(expression);
  if (!rep.valid()) {
    const ErrorCode code = rep.verdict == Verdict::kSyntaxError ? ErrorCode::kParse
                           : rep.verdict == Verdict::kUnitError ? ErrorCode::kUnit
                                                                : ErrorCode::kSemantic;
    throw Error(code, rep.to_line());
  }
  const Expr e = parse(expression);
  AlphaRecord r;
  r.expression = print_expr(e);
  r.id = sha256_hex(r.expression);
  r.name = name.empty() ? "alpha_" + r.id.substr(0, 8) : name;
  r.description = description;
  r.tags = std::move(tags);
  r.created_at = utc_timestamp_now();
  const auto alpha = eval_batch(e, reference, 1);
  r.reference_values = alpha.values.data;
  const auto fwd = forward_returns(reference, horizon, lag);
  const auto ic = ic_series(alpha.values, fwd.values);
  r.metrics.mean_ic = mean_ic(ic);
  try {
    r.metrics.ic_ir = ic_summary(ic).ic_ir;
  } catch (const Error&) {
  }
  try {
    const int q = std::clamp(static_cast<int>(reference.n_instruments() / 2), 2, 5);
    const auto bt = quantile_backtest(alpha.values, reference, horizon, lag, q);
    r.metrics.sharpe = bt.sharpe;
    r.metrics.annual_return = bt.annual_return;
  } catch (const Error&) {
  }
  return r;
}

double lsh_estimate(const Signature& a, const Signature& b) {
  if (a.n_bits != b.n_bits || a.words.size() != b.words.size()) {
    throw Error(ErrorCode::kInvalidArgument, "signature lengths differ");
  }
  if (a.n_bits == 0) throw Error(ErrorCode::kInvalidArgument, "empty signature");
  int hamming = 0;
  for (std::size_t k = 0; k < a.words.size(); ++k) hamming += std::popcount(a.words[k] ^ b.words[k]);
  return std::cos(std::numbers::pi * hamming / a.n_bits);
}

LshPlanes::LshPlanes(int n_planes, std::uint64_t seed, std::size_t dim)
    : n_planes_(n_planes), dim_(dim), planes_(static_cast<std::size_t>(n_planes) * dim) {
  if (n_planes < 1) throw Error(ErrorCode::kInvalidArgument, "n_planes must be >= 1");
  Rng rng(seed);
  for (auto& p : planes_) p = static_cast<float>(rng.normal());
}

Signature LshPlanes::sign(const std::vector<double>& values) const {
  if (values.size() != dim_) {
    throw Error(ErrorCode::kInvalidArgument, "value vector has length " + std::to_string(values.size()) +
                                                 ", expected " + std::to_string(dim_));
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (is_missing(v)) continue;
    sum += v;
    ++n;
  }
  const double mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
  std::vector<double> c(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) c[k] = is_missing(values[k]) ? 0.0 : values[k] - mean;
  Signature s;
  s.n_bits = n_planes_;
  s.words.assign((static_cast<std::size_t>(n_planes_) + 63) / 64, 0);
  for (int p = 0; p < n_planes_; ++p) {
    const float* row = planes_.data() + static_cast<std::size_t>(p) * dim_;
    double dot = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) dot += row[k] * c[k];
    if (dot >= 0.0) s.words[static_cast<std::size_t>(p) / 64] |= std::uint64_t{1} << (p % 64);
  }
  return s;
}

double record_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kInvalidArgument, "value vectors differ in length");
  return pearson(a, b, 2);
}

struct AlphaPool::State {
  fs::path dir;
  PoolHeader header;
  std::vector<AlphaRecord> records;
  std::map<std::string, std::size_t> by_id;
  std::vector<Signature> signatures;
  mutable std::mutex planes_mu;
  mutable std::unique_ptr<LshPlanes> planes;
  std::mutex write_mu;

  const LshPlanes& lsh() const {
    std::lock_guard lock(planes_mu);
    if (!planes) planes = std::make_unique<LshPlanes>(header.n_planes, header.plane_seed, header.n_dates * header.n_instruments);
    return *planes;
  }
};

namespace {

std::string header_json(const PoolHeader& h) {
  ojson j;
  j["reference_panel_fingerprint"] = h.reference_panel_fingerprint;
  j["corr_cap"] = h.corr_cap;
  j["n_planes"] = h.n_planes;
  j["plane_seed"] = h.plane_seed;
  j["n_dates"] = h.n_dates;
  j["n_instruments"] = h.n_instruments;
  return j.dump(2) + "\n";
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

AlphaPool::AlphaPool(std::unique_ptr<State> s) : s_(std::move(s)) {}
AlphaPool::AlphaPool(AlphaPool&&) noexcept = default;
AlphaPool& AlphaPool::operator=(AlphaPool&&) noexcept = default;
AlphaPool::~AlphaPool() = default;

AlphaPool AlphaPool::create(const fs::path& dir, const Panel& reference, double corr_cap, int n_planes,
                            std::uint64_t plane_seed) {
  if (fs::exists(dir / "header.json")) throw Error(ErrorCode::kIo, "store already exists at '" + dir.string() + "'");
  if (!(corr_cap > 0.0 && corr_cap <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "corr_cap must be in (0, 1]");
  if (n_planes < 1) throw Error(ErrorCode::kInvalidArgument, "n_planes must be >= 1");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create '" + dir.string() + "': " + ec.message());
  auto s = std::make_unique<State>();
  s->dir = dir;
  s->header.reference_panel_fingerprint = reference.fingerprint();
  s->header.corr_cap = corr_cap;
  s->header.n_planes = n_planes;
  s->header.plane_seed = plane_seed;
  s->header.n_dates = reference.n_dates();
  s->header.n_instruments = reference.n_instruments();
  {
    std::ofstream f(dir / "header.json", std::ios::binary);
    if (!f) throw Error(ErrorCode::kIo, "cannot write '" + (dir / "header.json").string() + "'");
    f << header_json(s->header);
  }
  std::ofstream touch(dir / "records.jsonl", std::ios::binary | std::ios::app);
  if (!touch) throw Error(ErrorCode::kIo, "cannot write '" + (dir / "records.jsonl").string() + "'");
  return AlphaPool(std::move(s));
}

AlphaPool AlphaPool::open(const fs::path& dir) {
  auto s = std::make_unique<State>();
  s->dir = dir;
  try {
    const auto j = nlohmann::json::parse(read_file(dir / "header.json"));
    s->header.reference_panel_fingerprint = j.at("reference_panel_fingerprint").get<std::string>();
    s->header.corr_cap = j.at("corr_cap").get<double>();
    s->header.n_planes = j.at("n_planes").get<int>();
    s->header.plane_seed = j.at("plane_seed").get<std::uint64_t>();
    s->header.n_dates = j.at("n_dates").get<std::size_t>();
    s->header.n_instruments = j.at("n_instruments").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, "malformed store header: " + std::string(e.what()));
  }
  AlphaPool pool(std::move(s));
  const fs::path rec = dir / "records.jsonl";
  if (fs::exists(rec)) {
    std::istringstream in(read_file(rec));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      AlphaRecord r;
      try {
        r = AlphaRecord::from_json_line(line);
      } catch (const Error& e) {
        throw Error(ErrorCode::kParse, rec.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (pool.s_->by_id.count(r.id)) continue;
      pool.s_->by_id[r.id] = pool.s_->records.size();
      pool.s_->signatures.push_back(pool.sign(r.reference_values));
      pool.s_->records.push_back(std::move(r));
    }
  }
  return pool;
}

AlphaPool AlphaPool::open_or_create(const fs::path& dir, const Panel& reference, double corr_cap) {
  if (fs::exists(dir / "header.json")) {
    auto pool = open(dir);
    pool.check_reference(reference);
    return pool;
  }
  return create(dir, reference, corr_cap);
}

const PoolHeader& AlphaPool::header() const { return s_->header; }
const std::vector<AlphaRecord>& AlphaPool::records() const { return s_->records; }
bool AlphaPool::contains(const std::string& id) const { return s_->by_id.count(id) > 0; }

const AlphaRecord& AlphaPool::get(const std::string& id) const {
  auto it = s_->by_id.find(id);
  if (it == s_->by_id.end()) throw Error(ErrorCode::kInvalidArgument, "no record with id " + id);
  return s_->records[it->second];
}

void AlphaPool::check_reference(const Panel& panel) const {
  if (panel.fingerprint() != s_->header.reference_panel_fingerprint) {
    throw Error(ErrorCode::kInvalidArgument, "panel fingerprint does not match the store's reference panel");
  }
}

Signature AlphaPool::sign(const std::vector<double>& values) const { return s_->lsh().sign(values); }

const Signature& AlphaPool::signature(const std::string& id) const {
  auto it = s_->by_id.find(id);
  if (it == s_->by_id.end()) throw Error(ErrorCode::kInvalidArgument, "no record with id " + id);
  return s_->signatures[it->second];
}

CorrelationMatch AlphaPool::max_correlation(const std::vector<double>& values, bool use_lsh,
                                            std::size_t top_m) const {
  if (s_->records.empty()) throw Error(ErrorCode::kInvalidArgument, "store is empty");
  const std::size_t expect = s_->header.n_dates * s_->header.n_instruments;
  if (values.size() != expect) {
    throw Error(ErrorCode::kInvalidArgument, "value vector has length " + std::to_string(values.size()) +
                                                 ", expected " + std::to_string(expect));
  }
  std::vector<std::size_t> cand(s_->records.size());
  for (std::size_t k = 0; k < cand.size(); ++k) cand[k] = k;
  if (use_lsh && cand.size() > top_m) {
    const Signature sig = sign(values);
    std::vector<double> est(cand.size());
    for (std::size_t k = 0; k < cand.size(); ++k) est[k] = std::abs(lsh_estimate(sig, s_->signatures[k]));
    std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return est[a] > est[b]; });
    cand.resize(top_m);
    std::sort(cand.begin(), cand.end());
  }
  CorrelationMatch best;
  double best_abs = -1.0;
  for (std::size_t k : cand) {
    const double c = record_correlation(values, s_->records[k].reference_values);
    const double a = is_missing(c) ? 0.0 : std::abs(c);
    if (a > best_abs) {
      best_abs = a;
      best.id = s_->records[k].id;
      best.corr = c;
    }
  }
  return best;
}

InsertOutcome AlphaPool::insert(const AlphaRecord& candidate, std::optional<double> corr_cap) {
  std::lock_guard lock(s_->write_mu);
  const double cap = corr_cap.value_or(s_->header.corr_cap);
  InsertOutcome out;
  if (candidate.reference_values.size() != s_->header.n_dates * s_->header.n_instruments) {
    throw Error(ErrorCode::kInvalidArgument, "candidate values do not match the reference panel layout");
  }
  if (contains(candidate.id)) {
    out.reason = "duplicate id " + candidate.id;
    out.nearest = CorrelationMatch{candidate.id, 1.0};
    return out;
  }
  if (!s_->records.empty()) {
    out.nearest = max_correlation(candidate.reference_values);
    if (!is_missing(out.nearest->corr) && std::abs(out.nearest->corr) > cap) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6f", out.nearest->corr);
      out.reason = "correlation " + std::string(buf) + " with " + out.nearest->id + " exceeds cap";
      return out;
    }
  }
  const fs::path rec = s_->dir / "records.jsonl";
  std::ofstream f(rec, std::ios::binary | std::ios::app);
  if (!f) throw Error(ErrorCode::kIo, "cannot append to '" + rec.string() + "'");
  f << candidate.to_json_line() << '\n';
  f.flush();
  if (!f) throw Error(ErrorCode::kIo, "write failed for '" + rec.string() + "'");
  s_->by_id[candidate.id] = s_->records.size();
  s_->signatures.push_back(sign(candidate.reference_values));
  s_->records.push_back(candidate);
  out.accepted = true;
  return out;
}

double marginal_score(const AlphaPool& pool, const std::vector<double>& candidate_values,
                      const std::vector<std::string>& member_ids, const Matrix& labels) {
  if (member_ids.empty()) throw Error(ErrorCode::kInvalidArgument, "member_ids is empty");
  const std::size_t T = pool.header().n_dates, N = pool.header().n_instruments;
  if (labels.rows != T || labels.cols != N) throw Error(ErrorCode::kInvalidArgument, "labels do not match the reference panel");
  if (candidate_values.size() != T * N) throw Error(ErrorCode::kInvalidArgument, "candidate values do not match the reference panel");

  auto zscored = [&](const std::vector<double>& v) {
    Matrix z(T, N);
    for (std::size_t t = 0; t < T; ++t) cs_zscore_row(std::span<const double>(v.data() + t * N, N), z.row(t));
    return z;
  };
  std::vector<Matrix> members;
  for (const auto& id : member_ids) members.push_back(zscored(pool.get(id).reference_values));

  auto composite_ic = [&](const Matrix* extra) {
    Matrix c(T, N);
    for (std::size_t k = 0; k < T * N; ++k) {
      double sum = 0.0;
      int n = 0;
      auto add = [&](const Matrix& m) {
        if (!is_missing(m.data[k])) {
          sum += m.data[k];
          ++n;
        }
      };
      for (const auto& m : members) add(m);
      if (extra) add(*extra);
      c.data[k] = n > 0 ? sum / n : kMissing;
    }
    const double ic = mean_ic(ic_series(c, labels));
    if (is_missing(ic)) throw Error(ErrorCode::kInvalidArgument, "composite alpha is degenerate (no defined IC)");
    return ic;
  };
  const Matrix cand = zscored(candidate_values);
  return composite_ic(&cand) - composite_ic(nullptr);
}

}  // namespace alphaforge
