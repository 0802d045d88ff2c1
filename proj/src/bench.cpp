// SPDX-License-Identifier: Apache-2.0
#include "alphaforge/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <set>

#include <json.hpp>

#include "alphaforge/data.hpp"
#include "alphaforge/engine.hpp"
#include "alphaforge/semantics.hpp"

namespace alphaforge {

namespace {

bool bit_identical(const Matrix& a, const Matrix& b) {
  return a.same_shape(b) && std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

template <class F>
double best_time(int repeats, F&& f) {
  double best = 0.0;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r == 0 || s < best) best = s;
  }
  return best;
}

}  // namespace

BenchReport bench_eval(const Expr& e, const BenchOptions& opt) {
  if (opt.n_dates < 1 || opt.n_instruments < 1) throw Error(ErrorCode::kInvalidArgument, "bench dimensions must be positive");
  if (opt.repeats < 1) throw Error(ErrorCode::kInvalidArgument, "repeats must be >= 1");
  infer_unit(e);
  std::vector<int> threads{1};
  std::set<int> seen{1};
  for (int t : opt.threads) {
    if (t < 1) throw Error(ErrorCode::kInvalidArgument, "thread counts must be >= 1");
    if (seen.insert(t).second) threads.push_back(t);
  }

  SynthOptions so;
  so.n_dates = opt.n_dates;
  so.n_instruments = opt.n_instruments;
  so.seed = opt.seed;
  const std::vector<std::string> needed = referenced_fields(e);
  so.fields.assign(needed.begin(), needed.end());
  const Panel panel = generate_synthetic(so).panel;

  BenchReport rep;
  rep.expr_text = print_expr(e);
  rep.n_dates = opt.n_dates;
  rep.n_instruments = opt.n_instruments;
  rep.seed = opt.seed;
  rep.repeats = opt.repeats;
  const double cells = static_cast<double>(opt.n_dates) * opt.n_instruments;

  Matrix reference;
  double base = 0.0;
  for (int t : threads) {
    Matrix out;
    const double s = best_time(opt.repeats, [&] { out = eval_batch(e, panel, t).values; });
    if (t == 1) {
      reference = std::move(out);
      base = s;
    } else if (!bit_identical(reference, out)) {
      rep.outputs_identical = false;
      throw Error(ErrorCode::kRuntime, "batch output at " + std::to_string(t) +
                                           " threads differs from the 1-thread output");
    }
    rep.cases.push_back({"batch", t, s, s > 0 ? cells / s : 0.0, t == 1 ? 1.0 : (s > 0 ? base / s : 0.0)});
  }
  if (opt.include_streaming) {
    const double s = best_time(opt.repeats, [&] { eval_streaming(e, panel); });
    rep.cases.push_back({"streaming", 1, s, s > 0 ? cells / s : 0.0, s > 0 ? base / s : 0.0});
  }
  return rep;
}

std::string BenchReport::to_markdown() const {
  std::string out = "expr: `" + expr_text + "`  dims: " + std::to_string(n_dates) + "x" + std::to_string(n_instruments) +
                    "  seed: " + std::to_string(seed) + "  repeats: " + std::to_string(repeats) + "\n\n";
  out += "| case | threads | wall_s | cells_per_s | speedup |\n|---|---:|---:|---:|---:|\n";
  char buf[256];
  for (const auto& c : cases) {
    std::snprintf(buf, sizeof buf, "| %s | %d | %.6f | %.4g | %.3f |\n", c.name.c_str(), c.threads, c.wall_seconds,
                  c.cells_per_second, c.speedup);
    out += buf;
  }
  out += std::string("\noutputs_identical: ") + (outputs_identical ? "true" : "false") + "\n";
  return out;
}

std::string BenchReport::to_json() const {
  nlohmann::ordered_json j;
  j["expr"] = expr_text;
  j["n_dates"] = n_dates;
  j["n_instruments"] = n_instruments;
  j["seed"] = seed;
  j["repeats"] = repeats;
  j["outputs_identical"] = outputs_identical;
  j["cases"] = nlohmann::ordered_json::array();
  for (const auto& c : cases) {
    nlohmann::ordered_json cj;
    cj["case"] = c.name;
    cj["threads"] = c.threads;
    cj["wall_seconds"] = c.wall_seconds;
    cj["cells_per_second"] = c.cells_per_second;
    cj["speedup"] = c.speedup;
    j["cases"].push_back(std::move(cj));
  }
  return j.dump(2);
}

}  // namespace alphaforge
