// SPDX-License-Identifier: Apache-2.0
#include "alphaforge/alphaforge.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "alphaforge/bench.hpp"
#include "alphaforge/config.hpp"
#include "alphaforge/data.hpp"
#include "alphaforge/decompiler.hpp"
#include "alphaforge/engine.hpp"
#include "alphaforge/gp.hpp"
#include "alphaforge/metrics.hpp"
#include "alphaforge/pool.hpp"
#include "alphaforge/semantics.hpp"

using namespace alphaforge;

struct af_config {
  RunConfig cfg;
};

struct af_panel {
  Panel panel;
  std::optional<LabelMatrix> labels;
};

struct af_alpha {
  AlphaMatrix alpha;
};

struct af_pool {
  AlphaPool pool;
};

namespace {

thread_local std::string g_last_error;

af_status to_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::kInvalidArgument: return AF_ERR_INVALID_ARGUMENT;
    case ErrorCode::kIo: return AF_ERR_IO;
    case ErrorCode::kParse: return AF_ERR_PARSE;
    case ErrorCode::kUnit: return AF_ERR_UNIT;
    case ErrorCode::kSemantic: return AF_ERR_SEMANTIC;
    case ErrorCode::kConfig: return AF_ERR_CONFIG;
    case ErrorCode::kNetwork: return AF_ERR_NETWORK;
    case ErrorCode::kRuntime: return AF_ERR_RUNTIME;
  }
  return AF_ERR_RUNTIME;
}

template <class F>
af_status guard(F&& f) {
  try {
    f();
    g_last_error.clear();
    return AF_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return AF_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return AF_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return AF_ERR_RUNTIME;
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.data(), s.size());
  p[s.size()] = '\0';
  return p;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

template <class T>
void require(const T* p, const char* what) {
  if (!p) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

const RunConfig& config_or_default(const af_config* cfg) {
  static const RunConfig defaults;
  return cfg ? cfg->cfg : defaults;
}

Error verdict_error(const ValidationReport& rep) {
  ErrorCode code = ErrorCode::kSemantic;
  if (rep.verdict == Verdict::kSyntaxError) code = ErrorCode::kParse;
  if (rep.verdict == Verdict::kUnitError) code = ErrorCode::kUnit;
  return Error(code, rep.to_line());
}

Expr checked_expr(const char* text) {
  require(text, "expr");
  const auto rep = validate(text);
  if (!rep.valid()) throw verdict_error(rep);
  return parse(text);
}

SyntheticData synthesize(const RunConfig& c) {
  if (!c.seed_set) throw Error(ErrorCode::kConfig, "a seed is required for synthetic data (set 'seed' or --seed)");
  SynthOptions so = c.synth;
  so.horizon = c.horizon;
  so.lag = c.lag;
  return generate_synthetic(so);
}

nlohmann::ordered_json json_number(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json metrics_json(const AlphaMetrics& m) {
  nlohmann::ordered_json j;
  j["mean_ic"] = json_number(m.mean_ic);
  j["ic_ir"] = json_number(m.ic_ir);
  j["sharpe"] = json_number(m.sharpe);
  j["annual_return"] = json_number(m.annual_return);
  return j;
}

nlohmann::ordered_json match_json(const std::optional<CorrelationMatch>& m) {
  if (!m) return nullptr;
  return {{"id", m->id}, {"corr", json_number(m->corr)}};
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    std::size_t b = 0;
    while (b < line.size() && (line[b] == ' ' || line[b] == '\t')) ++b;
    line.erase(0, b);
    if (!line.empty()) out.push_back(std::move(line));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

std::vector<Expr> parse_seed_lines(std::string_view text) {
  std::vector<Expr> seeds;
  int lineno = 0;
  for (const auto& line : split_lines(text)) {
    ++lineno;
    if (line[0] == '#') continue;
    std::string expr = line;
    if (line[0] == '{') {
      try {
        expr = nlohmann::json::parse(line).at("expression").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, "seed line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    const auto rep = validate(expr);
    if (!rep.valid()) {
      const Error err = verdict_error(rep);
      throw Error(err.code(), "seed line " + std::to_string(lineno) + " '" + expr + "': " + err.what());
    }
    seeds.push_back(parse(expr));
  }
  return seeds;
}

}  // namespace

extern "C" {

const char* af_last_error(void) { return g_last_error.c_str(); }

const char* af_status_name(af_status status) {
  switch (status) {
    case AF_OK: return "ok";
    case AF_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case AF_ERR_IO: return "io_error";
    case AF_ERR_PARSE: return "syntax_error";
    case AF_ERR_UNIT: return "unit_error";
    case AF_ERR_SEMANTIC: return "semantic_error";
    case AF_ERR_CONFIG: return "config_error";
    case AF_ERR_NETWORK: return "network_error";
    case AF_ERR_RUNTIME: return "runtime_error";
  }
  return "unknown";
}

const char* af_version(void) { return "0.1.0"; }

void af_string_free(char* s) { std::free(s); }

// ---- configuration ---------------------------------------------------------

af_status af_config_new(af_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new af_config{};
  });
}

af_status af_config_load(const char* path, af_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    auto c = std::make_unique<af_config>();
    c->cfg = load_config(path);
    *out = c.release();
  });
}

af_status af_config_set(af_config* cfg, const char* key, const char* value) {
  return guard([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    cfg->cfg.set(key, value);
  });
}

af_status af_config_to_json(const af_config* cfg, char** out_json) {
  return guard([&] { put(out_json, config_or_default(cfg).to_json()); });
}

af_status af_config_seed(const af_config* cfg, uint64_t* seed, int* is_set) {
  return guard([&] {
    const auto& c = config_or_default(cfg);
    if (seed) *seed = c.seed;
    if (is_set) *is_set = c.seed_set ? 1 : 0;
  });
}

void af_config_free(af_config* cfg) { delete cfg; }

// ---- panels ----------------------------------------------------------------

af_status af_panel_load_csv(const char* path, int strict, af_panel** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    auto p = std::make_unique<af_panel>();
    p->panel = load_csv(path, strict != 0);
    *out = p.release();
  });
}

af_status af_panel_synthetic(const af_config* cfg, af_panel** out) {
  return guard([&] {
    require(out, "out");
    auto data = synthesize(config_or_default(cfg));
    auto p = std::make_unique<af_panel>();
    p->panel = std::move(data.panel);
    if (config_or_default(cfg).synth.plant) p->labels = std::move(data.labels);
    *out = p.release();
  });
}

af_status af_panel_from_config(const af_config* cfg, af_panel** out) {
  const auto& c = config_or_default(cfg);
  if (c.data_path.empty()) return af_panel_synthetic(cfg, out);
  return af_panel_load_csv(c.data_path.string().c_str(), c.strict ? 1 : 0, out);
}

af_status af_panel_write_csv(const af_panel* panel, const char* path) {
  return guard([&] {
    require(panel, "panel");
    require(path, "path");
    write_csv(panel->panel, path);
  });
}

af_status af_panel_shape(const af_panel* panel, size_t* n_dates, size_t* n_instruments) {
  return guard([&] {
    require(panel, "panel");
    if (n_dates) *n_dates = panel->panel.n_dates();
    if (n_instruments) *n_instruments = panel->panel.n_instruments();
  });
}

af_status af_panel_fingerprint(const af_panel* panel, char** out_hex) {
  return guard([&] {
    require(panel, "panel");
    put(out_hex, panel->panel.fingerprint());
  });
}

void af_panel_free(af_panel* panel) { delete panel; }

// ---- expressions -------------------------------------------------------------

af_status af_validate(const char* expr, int* valid, char** report_line, char** report_json) {
  return guard([&] {
    require(expr, "expr");
    const auto rep = validate(expr);
    std::string line = rep.to_line();
    std::string json = rep.to_json();
    if (valid) *valid = rep.valid() ? 1 : 0;
    char* l = report_line ? dup_string(line) : nullptr;
    try {
      put(report_json, json);
    } catch (...) {
      std::free(l);
      throw;
    }
    if (report_line) *report_line = l;
  });
}

af_status af_eval(const char* expr, const af_panel* panel, int streaming, int threads, af_alpha** out) {
  return guard([&] {
    require(panel, "panel");
    require(out, "out");
    const Expr e = checked_expr(expr);
    auto a = std::make_unique<af_alpha>();
    a->alpha = streaming ? eval_streaming(e, panel->panel) : eval_batch(e, panel->panel, threads < 1 ? 1 : threads);
    *out = a.release();
  });
}

af_status af_alpha_shape(const af_alpha* alpha, size_t* rows, size_t* cols) {
  return guard([&] {
    require(alpha, "alpha");
    if (rows) *rows = alpha->alpha.values.rows;
    if (cols) *cols = alpha->alpha.values.cols;
  });
}

af_status af_alpha_values(const af_alpha* alpha, const double** data) {
  return guard([&] {
    require(alpha, "alpha");
    require(data, "data");
    *data = alpha->alpha.values.data.data();
  });
}

af_status af_alpha_to_csv(const af_alpha* alpha, const af_panel* panel, char** out_csv) {
  return guard([&] {
    require(alpha, "alpha");
    require(panel, "panel");
    put(out_csv, alpha_to_csv(alpha->alpha, panel->panel));
  });
}

af_status af_alpha_write_csv(const af_alpha* alpha, const af_panel* panel, const char* path) {
  return guard([&] {
    require(alpha, "alpha");
    require(panel, "panel");
    require(path, "path");
    write_alpha_csv(alpha->alpha, panel->panel, path);
  });
}

void af_alpha_free(af_alpha* alpha) { delete alpha; }

af_status af_backtest(const char* expr, const af_panel* panel, const af_config* cfg, char** out_text,
                      char** out_json) {
  return guard([&] {
    require(panel, "panel");
    const auto& c = config_or_default(cfg);
    const Expr e = checked_expr(expr);
    const auto alpha = eval_batch(e, panel->panel, c.threads < 1 ? 1 : c.threads);
    const auto rep = quantile_backtest(alpha.values, panel->panel, c.horizon, c.lag, c.quantiles, c.cost_rate);
    std::string text = "expr=" + print_expr(e) + "\n" + rep.to_text();
    auto j = nlohmann::ordered_json::parse(rep.to_json());
    nlohmann::ordered_json top;
    top["expr"] = print_expr(e);
    for (auto& [k, v] : j.items()) top[k] = v;
    char* t = out_text ? dup_string(text) : nullptr;
    try {
      put(out_json, top.dump(2));
    } catch (...) {
      std::free(t);
      throw;
    }
    if (out_text) *out_text = t;
  });
}

// ---- search ----------------------------------------------------------------

af_status af_search(const af_config* cfg, const af_panel* panel, const char* seeds, char** out_result_json,
                    char** out_hall_of_fame_jsonl) {
  return guard([&] {
    require(panel, "panel");
    const auto& c = config_or_default(cfg);
    if (!c.seed_set) throw Error(ErrorCode::kConfig, "search requires a seed (set 'seed' or --seed)");
    const std::vector<Expr> seed_exprs = seeds ? parse_seed_lines(seeds) : std::vector<Expr>{};
    const LabelMatrix labels = panel->labels ? *panel->labels : forward_returns(panel->panel, c.horizon, c.lag);
    std::vector<Expr> pool_exprs;
    if (!c.pool_dir.empty() && std::filesystem::exists(c.pool_dir / "header.json")) {
      const auto pool = AlphaPool::open(c.pool_dir);
      for (const auto& r : pool.records()) pool_exprs.push_back(parse(r.expression));
    }
    const auto res = evolve(c.gp, panel->panel, labels, seed_exprs, pool_exprs);
    std::string json = res.to_json();
    std::string hof = res.hall_of_fame_jsonl();
    char* r = out_result_json ? dup_string(json) : nullptr;
    try {
      put(out_hall_of_fame_jsonl, hof);
    } catch (...) {
      std::free(r);
      throw;
    }
    if (out_result_json) *out_result_json = r;
  });
}

// ---- pool --------------------------------------------------------------------

af_status af_pool_open(const char* dir, const af_panel* reference, const af_config* cfg, int create, af_pool** out) {
  return guard([&] {
    require(dir, "dir");
    require(out, "out");
    const auto& c = config_or_default(cfg);
    const std::filesystem::path p(dir);
    const bool exists = std::filesystem::exists(p / "header.json");
    std::optional<AlphaPool> pool;
    if (exists) {
      pool.emplace(AlphaPool::open(p));
      if (reference) pool->check_reference(reference->panel);
    } else if (create) {
      require(reference, "reference");
      pool.emplace(AlphaPool::create(p, reference->panel, c.corr_cap, c.n_planes));
    } else {
      throw Error(ErrorCode::kIo, "no alpha store at '" + p.string() + "'");
    }
    *out = new af_pool{std::move(*pool)};
  });
}

af_status af_pool_size(const af_pool* pool, size_t* size) {
  return guard([&] {
    require(pool, "pool");
    require(size, "size");
    *size = pool->pool.size();
  });
}

af_status af_pool_add(af_pool* pool, const af_panel* reference, const af_config* cfg, const char* expr,
                      const char* name, const char* description, int* accepted, char** out_json) {
  return guard([&] {
    require(pool, "pool");
    require(reference, "reference");
    require(expr, "expr");
    const auto& c = config_or_default(cfg);
    pool->pool.check_reference(reference->panel);
    const AlphaRecord rec =
        make_record(expr, reference->panel, name ? name : "", description ? description : "", {}, c.horizon, c.lag);
    const auto outcome = pool->pool.insert(rec, cfg ? std::optional<double>(c.corr_cap) : std::nullopt);
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["expression"] = rec.expression;
    j["accepted"] = outcome.accepted;
    j["reason"] = outcome.reason;
    j["nearest"] = match_json(outcome.nearest);
    j["metrics"] = metrics_json(rec.metrics);
    j["pool_size"] = pool->pool.size();
    if (accepted) *accepted = outcome.accepted ? 1 : 0;
    put(out_json, j.dump(2));
  });
}

af_status af_pool_check(const af_pool* pool, const af_panel* reference, const af_config* cfg, const char* expr,
                        char** out_json) {
  return guard([&] {
    require(pool, "pool");
    require(reference, "reference");
    require(expr, "expr");
    const auto& c = config_or_default(cfg);
    pool->pool.check_reference(reference->panel);
    const AlphaRecord rec = make_record(expr, reference->panel, "", "", {}, c.horizon, c.lag);
    const double cap = cfg ? c.corr_cap : pool->pool.header().corr_cap;
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["expression"] = rec.expression;
    j["corr_cap"] = cap;
    if (pool->pool.contains(rec.id)) {
      j["nearest"] = {{"id", rec.id}, {"corr", 1.0}};
      j["would_accept"] = false;
      j["reason"] = "duplicate id";
    } else if (pool->pool.size() == 0) {
      j["nearest"] = nullptr;
      j["would_accept"] = true;
      j["reason"] = "";
    } else {
      const auto m = pool->pool.max_correlation(rec.reference_values, c.use_lsh);
      const bool ok = !(std::abs(m.corr) > cap);
      j["nearest"] = match_json(m);
      j["would_accept"] = ok;
      j["reason"] = ok ? "" : "correlation above cap";
    }
    j["metrics"] = metrics_json(rec.metrics);
    put(out_json, j.dump(2));
  });
}

af_status af_pool_score(const af_pool* pool, const af_panel* reference, const af_config* cfg, const char* expr,
                        const char* member_ids, double* score, char** out_json) {
  return guard([&] {
    require(pool, "pool");
    require(reference, "reference");
    require(expr, "expr");
    const auto& c = config_or_default(cfg);
    pool->pool.check_reference(reference->panel);
    std::vector<std::string> ids = member_ids ? split_lines(member_ids) : std::vector<std::string>{};
    if (ids.empty())
      for (const auto& r : pool->pool.records()) ids.push_back(r.id);
    const AlphaRecord rec = make_record(expr, reference->panel, "", "", {}, c.horizon, c.lag);
    const auto labels = forward_returns(reference->panel, c.horizon, c.lag);
    const double s = marginal_score(pool->pool, rec.reference_values, ids, labels.values);
    if (score) *score = s;
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["expression"] = rec.expression;
    j["members"] = ids.size();
    j["marginal_mean_ic"] = json_number(s);
    put(out_json, j.dump(2));
  });
}

void af_pool_free(af_pool* pool) { delete pool; }

// ---- mining ----------------------------------------------------------------

af_status af_mine(const char* idea, const af_config* cfg, const char* transcript, char** out_json) {
  std::string partial;
  const af_status st = guard([&] {
    require(idea, "idea");
    const auto& c = config_or_default(cfg);
    HashingEmbedder embedder;
    std::vector<KnowledgeDoc> library;
    if (!c.knowledge.empty()) library = load_library(c.knowledge, embedder);
    std::unique_ptr<ChatClient> client;
    std::filesystem::path tpath = transcript && *transcript ? std::filesystem::path(transcript) : c.transcript;
    if (!tpath.empty()) {
      client = std::make_unique<ScriptedClient>(ScriptedClient::from_file(tpath));
    } else {
      client = std::make_unique<HttpChatClient>(c.llm);
    }
    try {
      put(out_json, mining_loop(idea, *client, library, embedder, c.mining).to_json());
    } catch (const MiningError& e) {
      partial = e.partial().to_json();
      throw;
    }
  });
  if (st != AF_OK && !partial.empty() && out_json) {
    try {
      *out_json = dup_string(partial);
    } catch (...) {
    }
  }
  return st;
}

// ---- synthetic data and benchmarks ---------------------------------------------

af_status af_synth_write(const af_config* cfg, const char* path, char** out_meta_json) {
  return guard([&] {
    require(path, "path");
    const auto& c = config_or_default(cfg);
    const auto data = synthesize(c);
    write_csv(data.panel, path);
    nlohmann::ordered_json j;
    j["seed"] = c.synth.seed;
    j["n_dates"] = c.synth.n_dates;
    j["n_instruments"] = c.synth.n_instruments;
    j["n_sectors"] = c.synth.n_sectors;
    j["plant"] = c.synth.plant ? nlohmann::ordered_json(*c.synth.plant) : nlohmann::ordered_json(nullptr);
    j["plant_strength"] = c.synth.plant_strength;
    j["horizon"] = c.horizon;
    j["lag"] = c.lag;
    j["fingerprint"] = data.panel.fingerprint();
    const std::string meta = j.dump(2);
    const std::string meta_path = std::string(path) + ".meta.json";
    std::ofstream f(meta_path, std::ios::binary);
    if (!(f << meta << '\n')) throw Error(ErrorCode::kIo, "cannot write '" + meta_path + "'");
    put(out_meta_json, meta);
  });
}

af_status af_bench(const char* expr, int n_dates, int n_instruments, const int* threads, size_t n_threads,
                   uint64_t seed, int repeats, int include_streaming, char** out_markdown, char** out_json) {
  return guard([&] {
    const Expr e = checked_expr(expr);
    BenchOptions opt;
    opt.n_dates = n_dates;
    opt.n_instruments = n_instruments;
    if (threads && n_threads > 0) opt.threads.assign(threads, threads + n_threads);
    opt.seed = seed;
    opt.repeats = repeats;
    opt.include_streaming = include_streaming != 0;
    const auto rep = bench_eval(e, opt);
    std::string md = rep.to_markdown();
    std::string js = rep.to_json();
    char* m = out_markdown ? dup_string(md) : nullptr;
    try {
      put(out_json, js);
    } catch (...) {
      std::free(m);
      throw;
    }
    if (out_markdown) *out_markdown = m;
  });
}

}  // extern "C"
