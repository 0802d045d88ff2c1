// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "alphaforge/alphaforge.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitRejected = 2;

/// Thrown to unwind to main with a ready-made exit code.
struct Exit {
  int code;
};

int exit_code_for(af_status st) {
  switch (st) {
    case AF_OK: return kExitOk;
    case AF_ERR_PARSE:
    case AF_ERR_UNIT:
    case AF_ERR_SEMANTIC: return kExitRejected;
    default: return kExitError;
  }
}

void check(af_status st, const std::string& context) {
  if (st == AF_OK) return;
  std::cerr << "error: " << context << ": " << af_status_name(st) << ": " << af_last_error() << "\n";
  throw Exit{exit_code_for(st)};
}

[[noreturn]] void fail(const std::string& msg, int code = kExitError) {
  std::cerr << "error: " << msg << "\n";
  throw Exit{code};
}

struct Str {
  char* p = nullptr;
  ~Str() { af_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Free(p); }
};
using ConfigH = Handle<af_config, af_config_free>;
using PanelH = Handle<af_panel, af_panel_free>;
using AlphaH = Handle<af_alpha, af_alpha_free>;
using PoolH = Handle<af_pool, af_pool_free>;

void require_file(const std::string& path, const char* what) {
  if (!path.empty() && !fs::exists(path)) fail(std::string(what) + " '" + path + "' does not exist");
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary);
  if (!(f << text)) fail("cannot write '" + path.string() + "'");
}

/// Options shared by every command that reads a run config.
struct ConfigOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::string seed;
  std::string data;
  int threads = 0;
  bool lenient = false;

  void add_to(CLI::App* app, bool with_data) {
    app->add_option("--config", config_path, "TOML run config");
    app->add_option("--set", sets, "Override a config key (key=value); repeatable");
    app->add_option("--seed", seed, "Seed for randomized steps");
    app->add_option("--threads", threads, "Evaluation threads");
    if (with_data) {
      app->add_option("--data", data, "Panel CSV (date,symbol,open,high,low,close,volume[,vwap][,sector])");
      app->add_flag("--lenient", lenient, "Turn bad prices/volumes into missing cells instead of failing");
    }
  }

  /// Defaults < config file < flags.
  void load(ConfigH& cfg) const {
    require_file(config_path, "config");
    if (!config_path.empty()) {
      check(af_config_load(config_path.c_str(), &cfg.p), "loading config");
    } else {
      check(af_config_new(&cfg.p), "creating config");
    }
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) fail("--set expects key=value, got '" + kv + "'");
      check(af_config_set(cfg.p, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv);
    }
    if (!seed.empty()) check(af_config_set(cfg.p, "seed", seed.c_str()), "--seed");
    if (threads > 0) {
      const std::string t = std::to_string(threads);
      check(af_config_set(cfg.p, "threads", t.c_str()), "--threads");
      check(af_config_set(cfg.p, "gp.workers", t.c_str()), "--threads");
    }
    if (!data.empty()) check(af_config_set(cfg.p, "data.path", ("\"" + data + "\"").c_str()), "--data");
    if (lenient) check(af_config_set(cfg.p, "data.strict", "false"), "--lenient");
  }
};

nlohmann::json config_json(const ConfigH& cfg) {
  Str s;
  check(af_config_to_json(cfg.p, &s.p), "reading config");
  return nlohmann::json::parse(s.str());
}

/// Loads the configured data panel; the path must exist.
void load_data_panel(const ConfigH& cfg, PanelH& panel) {
  const auto j = config_json(cfg);
  const std::string path = j["data"]["path"];
  if (path.empty()) fail("no data given (use --data or data.path in the config)");
  require_file(path, "data file");
  check(af_panel_load_csv(path.c_str(), j["data"]["strict"].get<bool>() ? 1 : 0, &panel.p), "loading " + path);
}

int cmd_validate(const std::string& expr, bool json) {
  int valid = 0;
  Str line, js;
  check(af_validate(expr.c_str(), &valid, &line.p, &js.p), "validating");
  std::cout << (json ? js.str() : line.str()) << "\n";
  return valid ? kExitOk : kExitRejected;
}

int cmd_eval(const ConfigOpts& co, const std::string& expr, const std::string& out, bool streaming) {
  ConfigH cfg;
  co.load(cfg);
  PanelH panel;
  load_data_panel(cfg, panel);
  const int threads = config_json(cfg)["threads"];
  AlphaH alpha;
  check(af_eval(expr.c_str(), panel.p, streaming ? 1 : 0, threads, &alpha.p), "evaluating '" + expr + "'");
  if (out.empty() || out == "-") {
    Str csv;
    check(af_alpha_to_csv(alpha.p, panel.p, &csv.p), "rendering CSV");
    std::cout << csv.str();
  } else {
    check(af_alpha_write_csv(alpha.p, panel.p, out.c_str()), "writing " + out);
    size_t rows = 0, cols = 0;
    af_alpha_shape(alpha.p, &rows, &cols);
    std::cerr << "wrote " << rows << "x" << cols << " alpha to " << out << "\n";
  }
  return kExitOk;
}

int cmd_backtest(const ConfigOpts& co, const std::string& expr, const std::string& report) {
  ConfigH cfg;
  co.load(cfg);
  PanelH panel;
  load_data_panel(cfg, panel);
  Str text, json;
  check(af_backtest(expr.c_str(), panel.p, cfg.p, &text.p, &json.p), "backtesting '" + expr + "'");
  std::cout << text.str();
  if (!report.empty()) write_file(report, json.str() + "\n");
  return kExitOk;
}

int cmd_search(const ConfigOpts& co, const std::string& seeds_path, std::string out_dir) {
  ConfigH cfg;
  co.load(cfg);
  require_file(seeds_path, "seeds file");
  const auto j = config_json(cfg);
  PanelH panel;
  if (!j["data"]["path"].get<std::string>().empty()) {
    load_data_panel(cfg, panel);
  } else {
    check(af_panel_synthetic(cfg.p, &panel.p), "generating synthetic panel");
  }
  const std::string seeds = seeds_path.empty() ? std::string() : read_file(seeds_path);
  Str result, hof;
  check(af_search(cfg.p, panel.p, seeds.empty() ? nullptr : seeds.c_str(), &result.p, &hof.p), "search");
  if (out_dir.empty()) out_dir = j["output"]["dir"].get<std::string>();
  const fs::path dir(out_dir.empty() ? "." : out_dir);
  write_file(dir / "search_result.json", result.str() + "\n");
  write_file(dir / "hall_of_fame.jsonl", hof.str());

  const auto r = nlohmann::json::parse(result.str());
  std::cout << "seed=" << r["seed"].dump() << " generations_run=" << r["generations_run"].dump()
            << " early_stopped=" << r["early_stopped"].dump() << "\n";
  int rank = 1;
  for (const auto& e : r["hall_of_fame"]) {
    std::cout << rank++ << "\t" << e["validation_mean_ic"].dump() << "\t" << e["expression"].get<std::string>() << "\n";
  }
  std::cerr << "wrote " << (dir / "search_result.json").string() << " and " << (dir / "hall_of_fame.jsonl").string()
            << "\n";
  return kExitOk;
}

struct PoolOpts {
  std::string dir;
  std::string expr;
  std::string name;
  std::string description;
  std::string members;
  bool create = true;
};

int cmd_pool(const ConfigOpts& co, const PoolOpts& po, const std::string& action) {
  ConfigH cfg;
  co.load(cfg);
  PanelH panel;
  load_data_panel(cfg, panel);
  std::string dir = po.dir;
  if (dir.empty()) dir = config_json(cfg)["pool"]["dir"].get<std::string>();
  if (dir.empty()) fail("no store directory (use --dir or pool.dir)");
  PoolH pool;
  check(af_pool_open(dir.c_str(), panel.p, cfg.p, action == "add" ? 1 : 0, &pool.p), "opening store " + dir);
  Str out;
  if (action == "add") {
    int accepted = 0;
    check(af_pool_add(pool.p, panel.p, cfg.p, po.expr.c_str(), po.name.c_str(), po.description.c_str(), &accepted,
                      &out.p),
          "adding '" + po.expr + "'");
    std::cout << out.str() << "\n";
    return accepted ? kExitOk : kExitRejected;
  }
  if (action == "check") {
    check(af_pool_check(pool.p, panel.p, cfg.p, po.expr.c_str(), &out.p), "checking '" + po.expr + "'");
    std::cout << out.str() << "\n";
    return kExitOk;
  }
  std::string ids = po.members;
  for (auto& c : ids)
    if (c == ',') c = '\n';
  double score = 0.0;
  check(af_pool_score(pool.p, panel.p, cfg.p, po.expr.c_str(), ids.empty() ? nullptr : ids.c_str(), &score, &out.p),
        "scoring '" + po.expr + "'");
  std::cout << out.str() << "\n";
  return kExitOk;
}

int cmd_mine(const ConfigOpts& co, const std::string& idea, const std::string& transcript, const std::string& out) {
  ConfigH cfg;
  co.load(cfg);
  require_file(transcript, "transcript");
  const auto j = config_json(cfg);
  require_file(j["llm"]["transcript"].get<std::string>(), "transcript");
  require_file(j["llm"]["knowledge"].get<std::string>(), "knowledge library");
  Str result;
  const af_status st = af_mine(idea.c_str(), cfg.p, transcript.empty() ? nullptr : transcript.c_str(), &result.p);
  if (!result.str().empty() && !out.empty()) write_file(out, result.str() + "\n");
  if (st != AF_OK && !result.str().empty()) {
    const auto r = nlohmann::json::parse(result.str());
    std::cerr << "partial result: " << r["alphas"].size() << " valid alphas after " << r["rounds"].dump()
              << " rounds\n";
  }
  check(st, "mining");
  const auto r = nlohmann::json::parse(result.str());
  std::cout << "rounds=" << r["rounds"].dump() << " valid=" << r["alphas"].size() << "\n";
  for (const auto& a : r["alphas"]) {
    std::cout << a["name"].get<std::string>() << "\t" << a["expression"].get<std::string>()
              << "\tmissing_fraction=" << a["missing_fraction"].dump()
              << "\tzero_variance_bar_fraction=" << a["zero_variance_bar_fraction"].dump() << "\n";
  }
  for (const auto& d : r["diagnostics"]) std::cerr << "note: " << d.get<std::string>() << "\n";
  return kExitOk;
}

int cmd_synth(const ConfigOpts& co, const std::string& out) {
  ConfigH cfg;
  co.load(cfg);
  Str meta;
  check(af_synth_write(cfg.p, out.c_str(), &meta.p), "writing " + out);
  std::cout << meta.str() << "\n";
  return kExitOk;
}

struct BenchOpts {
  std::string expr = "ts_mean(close, 20)";
  int dates = 1000;
  int instruments = 500;
  std::vector<int> threads{1, 2, 4};
  std::uint64_t seed = 0;
  int repeats = 3;
  bool no_streaming = false;
  std::string json_out;
};

int cmd_bench(const BenchOpts& bo) {
  Str md, js;
  check(af_bench(bo.expr.c_str(), bo.dates, bo.instruments, bo.threads.data(), bo.threads.size(), bo.seed, bo.repeats,
                 bo.no_streaming ? 0 : 1, &md.p, &js.p),
        "bench");
  std::cout << md.str();
  if (!bo.json_out.empty()) write_file(bo.json_out, js.str() + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alphaforge: formulaic alpha research toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", af_version());

  std::string expr, out, report, seeds, idea, transcript, action;
  bool json = false, streaming = false;
  ConfigOpts co;
  PoolOpts po;
  BenchOpts bo;

  auto* validate = app.add_subcommand("validate", "Check syntax, units and semantics of an expression");
  validate->add_option("expr", expr, "Expression")->required();
  validate->add_flag("--json", json, "Print the report as JSON");

  auto* eval = app.add_subcommand("eval", "Evaluate an expression over a panel");
  eval->add_option("--expr", expr, "Expression")->required();
  eval->add_option("--out", out, "Output CSV ('-' or omitted: stdout)");
  eval->add_flag("--streaming", streaming, "Use the bar-by-bar evaluator");
  co.add_to(eval, true);

  auto* backtest = app.add_subcommand("backtest", "Quantile long-short backtest of an expression");
  backtest->add_option("--expr", expr, "Expression")->required();
  backtest->add_option("--report", report, "Write the report as JSON");
  co.add_to(backtest, true);

  auto* search = app.add_subcommand("search", "Genetic search for alphas");
  search->add_option("--seeds", seeds, "Seed expressions: one per line, or hall-of-fame JSONL");
  search->add_option("--out", out, "Output directory (default: output.dir)");
  co.add_to(search, true);

  auto* pool = app.add_subcommand("pool", "Alpha store operations");
  pool->add_option("action", action, "add | check | score")->required()->check(CLI::IsMember({"add", "check", "score"}));
  pool->add_option("--dir", po.dir, "Store directory (default: pool.dir)");
  pool->add_option("--expr", po.expr, "Expression")->required();
  pool->add_option("--name", po.name, "Record name (add)");
  pool->add_option("--desc", po.description, "Record description (add)");
  pool->add_option("--members", po.members, "Comma-separated member ids (score; default: all)");
  co.add_to(pool, true);

  auto* mine = app.add_subcommand("mine", "Turn a trading idea into validated alphas via a chat model");
  mine->add_option("--idea", idea, "Idea text")->required();
  mine->add_option("--transcript", transcript, "Replay a scripted transcript instead of calling the endpoint");
  mine->add_option("--out", out, "Write the full result JSON");
  co.add_to(mine, false);

  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic panel");
  synth->add_option("--out", out, "Output CSV")->required();
  co.add_to(synth, false);

  auto* bench = app.add_subcommand("bench", "Time batch evaluation across thread counts");
  bench->add_option("--expr", bo.expr, "Expression");
  bench->add_option("--dates", bo.dates, "Bars");
  bench->add_option("--instruments", bo.instruments, "Instruments");
  bench->add_option("--threads", bo.threads, "Thread counts")->delimiter(',');
  bench->add_option("--seed", bo.seed, "Data seed");
  bench->add_option("--repeats", bo.repeats, "Timed repeats per case (best is reported)");
  bench->add_flag("--no-streaming", bo.no_streaming, "Skip the streaming case");
  bench->add_option("--json", bo.json_out, "Write the report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitError;
  }

  try {
    if (*validate) return cmd_validate(expr, json);
    if (*eval) return cmd_eval(co, expr, out, streaming);
    if (*backtest) return cmd_backtest(co, expr, report);
    if (*search) return cmd_search(co, seeds, out);
    if (*pool) return cmd_pool(co, po, action);
    if (*mine) return cmd_mine(co, idea, transcript, out);
    if (*synth) return cmd_synth(co, out);
    if (*bench) return cmd_bench(bo);
  } catch (const Exit& e) {
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
