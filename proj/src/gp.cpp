// SPDX-License-Identifier: Apache-2.0
#include "alphaforge/gp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "alphaforge/engine.hpp"
#include "alphaforge/metrics.hpp"
#include "alphaforge/parallel.hpp"

namespace alphaforge {

void GpConfig::check() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfig, "gp config: " + m); };
  if (population_size < 2) fail("population_size must be >= 2");
  if (generations < 1) fail("generations must be >= 1");
  if (tournament_k < 1) fail("tournament_k must be >= 1");
  if (p_crossover < 0 || p_mutation < 0 || p_reproduction < 0) fail("probabilities must be >= 0");
  if (std::abs(p_crossover + p_mutation + p_reproduction - 1.0) > 1e-9) fail("probabilities must sum to 1");
  if (max_depth < 3 || max_depth > kDefaultMaxDepth) fail("max_depth must be in [3, 10]");
  if (init_depth_min < 1 || init_depth_max < init_depth_min || init_depth_max > max_depth - 1) {
    fail("init_depth_range must satisfy 1 <= min <= max <= max_depth - 1");
  }
  if (!(parsimony >= 0)) fail("parsimony must be >= 0");
  if (!(diversity_corr_cap > 0 && diversity_corr_cap <= 1)) fail("diversity_corr_cap must be in (0, 1]");
  if (patience < 1) fail("patience must be >= 1");
  if (!(train_fraction > 0 && train_fraction < 1)) fail("train_fraction must be in (0, 1)");
  if (elitism_count < 0 || elitism_count >= population_size) fail("elitism_count must be in [0, population_size)");
  if (max_invalid_retries < 0) fail("max_invalid_retries must be >= 0");
  if (max_window < 2 || max_window > kMaxWindow) fail("max_window must be in [2, 250]");
  if (hall_of_fame_size < 1) fail("hall_of_fame_size must be >= 1");
  if (workers < 1) fail("workers must be >= 1");
  if (min_obs < 3) fail("min_obs must be >= 3");
}

namespace {

const Unit kAnyUnits[] = {kPriceUnit, kVolumeUnit, kDimensionless};
const double kLiterals[] = {-1.0, 0.5, 1.0, 2.0, 3.0, 10.0};
const char* const kFallback = "cs_rank(ts_delta(close, 1))";

bool unit_in_bounds(const Unit& u) {
  return std::abs(u.price) <= Unit::kMaxExponent && std::abs(u.volume) <= Unit::kMaxExponent;
}

Unit random_unit(Rng& rng) { return kAnyUnits[rng.index(3)]; }

std::int64_t random_window(Op op, const GpConfig& cfg, Rng& rng) {
  const int lo = op_info(op).min_window;
  return rng.uniform_int(lo, std::max(lo, cfg.max_window));
}

std::optional<Expr> terminal(const Unit& u, Rng& rng) {
  if (u == kPriceUnit) return Expr::field_ref(std::string(kPriceFields[rng.index(std::size(kPriceFields))]));
  if (u == kVolumeUnit) return Expr::field_ref("volume");
  if (u == kDimensionless) return Expr::num_lit(kLiterals[rng.index(std::size(kLiterals))]);
  return std::nullopt;
}

bool has_terminal(const Unit& u) { return u == kPriceUnit || u == kVolumeUnit || u == kDimensionless; }

Expr windowed(Op op, std::vector<Expr> args, const GpConfig& cfg, Rng& rng) {
  const auto& info = op_info(op);
  args.insert(args.begin() + info.window_slot, Expr::int_lit(random_window(op, cfg, rng)));
  return Expr::call(op, std::move(args));
}

enum class Prod { kAddSub, kMul, kDiv, kUnaryKeep, kTsKeep, kDimUnary, kTsRank, kTsCorr };

std::optional<Expr> grow(const Unit& u, int d, bool full, const GpConfig& cfg, Rng& rng) {
  if (!unit_in_bounds(u)) return std::nullopt;
  if (d <= 1) return terminal(u, rng);
  if (!full && has_terminal(u) && rng.bernoulli(0.3)) return terminal(u, rng);

  std::vector<Prod> prods = {Prod::kAddSub, Prod::kMul, Prod::kDiv, Prod::kUnaryKeep, Prod::kTsKeep};
  if (u == kDimensionless) {
    prods.insert(prods.end(), {Prod::kDimUnary, Prod::kDimUnary, Prod::kTsRank, Prod::kTsCorr});
  }
  const Prod p = prods[rng.index(prods.size())];
  auto sub = [&](const Unit& cu) { return grow(cu, d - 1, full, cfg, rng); };
  switch (p) {
    case Prod::kAddSub: {
      auto a = sub(u);
      auto b = sub(u);
      if (!a || !b) return std::nullopt;
      return Expr::call(rng.bernoulli(0.5) ? Op::kAdd : Op::kSub, {std::move(*a), std::move(*b)});
    }
    case Prod::kMul: {
      const Unit a_unit = random_unit(rng);
      const Unit b_unit{u.price - a_unit.price, u.volume - a_unit.volume};
      auto a = sub(a_unit);
      auto b = sub(b_unit);
      if (!a || !b) return std::nullopt;
      return Expr::call(Op::kMul, {std::move(*a), std::move(*b)});
    }
    case Prod::kDiv: {
      const Unit b_unit = random_unit(rng);
      const Unit a_unit{u.price + b_unit.price, u.volume + b_unit.volume};
      auto a = sub(a_unit);
      auto b = sub(b_unit);
      if (!a || !b) return std::nullopt;
      return Expr::call(Op::kDiv, {std::move(*a), std::move(*b)});
    }
    case Prod::kUnaryKeep: {
      static const Op ops[] = {Op::kAbs, Op::kGroupMean, Op::kGroupNeutralize};
      auto a = sub(u);
      if (!a) return std::nullopt;
      return Expr::call(ops[rng.index(3)], {std::move(*a)});
    }
    case Prod::kTsKeep: {
      static const Op ops[] = {Op::kTsDelay, Op::kTsDelta, Op::kTsMean, Op::kTsStd, Op::kTsMin, Op::kTsMax};
      auto a = sub(u);
      if (!a) return std::nullopt;
      return windowed(ops[rng.index(6)], {std::move(*a)}, cfg, rng);
    }
    case Prod::kDimUnary: {
      static const Op ops[] = {Op::kSign, Op::kLog, Op::kCsRank, Op::kCsZscore};
      const Op op = ops[rng.index(4)];
      auto a = sub(op == Op::kLog ? kPriceUnit : random_unit(rng));
      if (!a) return std::nullopt;
      return Expr::call(op, {std::move(*a)});
    }
    case Prod::kTsRank: {
      auto a = sub(random_unit(rng));
      if (!a) return std::nullopt;
      return windowed(Op::kTsRank, {std::move(*a)}, cfg, rng);
    }
    case Prod::kTsCorr: {
      auto a = sub(random_unit(rng));
      auto b = sub(random_unit(rng));
      if (!a || !b) return std::nullopt;
      return windowed(Op::kTsCorr, {std::move(*a), std::move(*b)}, cfg, rng);
    }
  }
  return std::nullopt;
}

Unit random_root_unit(Rng& rng) {
  const double r = rng.uniform();
  if (r < 0.6) return kDimensionless;
  if (r < 0.85) return kPriceUnit;
  return kVolumeUnit;
}

struct Site {
  Expr* node;
  int level;  // root = 1
};

void collect_sites(Expr& e, int level, std::vector<Site>& out) {
  out.push_back({&e, level});
  if (!e.is_call()) return;
  const int slot = op_info(e.op).window_slot;
  for (std::size_t k = 0; k < e.args.size(); ++k) {
    if (static_cast<int>(k) == slot) continue;
    collect_sites(e.args[k], level + 1, out);
  }
}

std::vector<Site> sites_of(Expr& e) {
  std::vector<Site> out;
  collect_sites(e, 1, out);
  return out;
}

bool structurally_ok(const Expr& e, int max_depth) {
  try {
    check_structure(e, max_depth);
  } catch (const Error&) {
    return false;
  }
  return try_infer_unit(e).has_value();
}

}  // namespace

std::optional<Expr> grow_typed(const Unit& target, int max_depth, bool full, const GpConfig& cfg, Rng& rng) {
  auto e = grow(target, max_depth, full, cfg, rng);
  if (!e) return std::nullopt;
  return e;
}

Expr grow_unconstrained(int max_depth, const GpConfig& cfg, Rng& rng) {
  if (max_depth <= 1 || rng.bernoulli(0.3)) {
    if (rng.bernoulli(0.2)) return Expr::num_lit(kLiterals[rng.index(std::size(kLiterals))]);
    return Expr::field_ref(std::string(kStandardFields[rng.index(std::size(kStandardFields))]));
  }
  const auto& info = operator_table()[rng.index(kOperatorCount)];
  std::vector<Expr> args;
  for (int k = 0; k < info.arity; ++k) {
    if (k == info.window_slot) {
      args.push_back(Expr::int_lit(random_window(info.op, cfg, rng)));
    } else {
      args.push_back(grow_unconstrained(max_depth - 1, cfg, rng));
    }
  }
  return Expr::call(info.op, std::move(args));
}

std::vector<Expr> init_population(const GpConfig& cfg, const std::vector<Expr>& seeds, Rng& rng) {
  if (seeds.size() > static_cast<std::size_t>(cfg.population_size)) {
    throw Error(ErrorCode::kInvalidArgument, "more seeds than population_size");
  }
  std::vector<Expr> pop;
  for (const auto& s : seeds) {
    const auto rep = validate_expr(s);
    if (!rep.valid()) {
      throw Error(ErrorCode::kInvalidArgument, "seed '" + print_expr(s) + "' is invalid: " + rep.to_line());
    }
    pop.push_back(s);
  }
  const int lo = cfg.init_depth_min;
  const int span = cfg.init_depth_max - cfg.init_depth_min + 1;
  const int n_random = cfg.population_size - static_cast<int>(seeds.size());
  for (int j = 0; j < n_random; ++j) {
    const int d = lo + j % span;
    const bool full = (j / span) % 2 == 0;
    std::optional<Expr> chosen;
    for (int attempt = 0; attempt <= cfg.max_invalid_retries && !chosen; ++attempt) {
      auto cand = grow_typed(random_root_unit(rng), d, full, cfg, rng);
      if (cand && validate_expr(*cand).valid()) chosen = std::move(cand);
    }
    pop.push_back(chosen ? std::move(*chosen) : parse(kFallback));
  }
  return pop;
}

Expr crossover(const Expr& a, const Expr& b, const GpConfig& cfg, Rng& rng) {
  Expr donor_tree = b;
  auto donors = sites_of(donor_tree);
  std::vector<std::optional<Unit>> donor_units;
  std::vector<int> donor_depths;
  for (const auto& s : donors) {
    donor_units.push_back(try_infer_unit(*s.node));
    donor_depths.push_back(depth(*s.node));
  }
  for (int attempt = 0; attempt < std::max(cfg.max_invalid_retries, 1); ++attempt) {
    Expr child = a;
    auto targets = sites_of(child);
    const Site target = targets[rng.index(targets.size())];
    const auto unit = try_infer_unit(*target.node);
    if (!unit) continue;
    std::vector<std::size_t> ok;
    for (std::size_t k = 0; k < donors.size(); ++k) {
      if (donor_units[k] && *donor_units[k] == *unit && target.level - 1 + donor_depths[k] <= cfg.max_depth) {
        ok.push_back(k);
      }
    }
    if (ok.empty()) continue;
    *target.node = *donors[ok[rng.index(ok.size())]].node;
    if (structurally_ok(child, cfg.max_depth)) return child;
  }
  return a;
}

namespace {

std::optional<Expr> mutate_once(const Expr& e, MutationKind kind, const GpConfig& cfg, Rng& rng) {
  Expr child = e;
  auto sites = sites_of(child);
  switch (kind) {
    case MutationKind::kSubtree: {
      const Site s = sites[rng.index(sites.size())];
      const auto unit = try_infer_unit(*s.node);
      if (!unit) return std::nullopt;
      const int budget = std::min(cfg.max_depth - s.level + 1, 4);
      if (budget < 1) return std::nullopt;
      auto repl = grow_typed(*unit, static_cast<int>(rng.uniform_int(1, budget)), false, cfg, rng);
      if (!repl) return std::nullopt;
      *s.node = std::move(*repl);
      return child;
    }
    case MutationKind::kTerminal: {
      std::vector<Site> leaves;
      for (const auto& s : sites)
        if (s.node->kind == Expr::Kind::kField || s.node->kind == Expr::Kind::kNum) leaves.push_back(s);
      if (leaves.empty()) return std::nullopt;
      Expr& leaf = *leaves[rng.index(leaves.size())].node;
      if (leaf.kind == Expr::Kind::kNum) {
        leaf = Expr::num_lit(kLiterals[rng.index(std::size(kLiterals))]);
      } else {
        const Unit u = field_unit(leaf.field);
        auto repl = terminal(u, rng);
        if (!repl || repl->kind != Expr::Kind::kField) return std::nullopt;
        leaf = std::move(*repl);
      }
      return child;
    }
    case MutationKind::kWindow: {
      std::vector<Site> win;
      for (const auto& s : sites)
        if (s.node->is_call() && op_info(s.node->op).window_slot >= 0) win.push_back(s);
      if (win.empty()) return std::nullopt;
      Expr& node = *win[rng.index(win.size())].node;
      const auto slot = static_cast<std::size_t>(op_info(node.op).window_slot);
      node.args[slot] = Expr::int_lit(random_window(node.op, cfg, rng));
      return child;
    }
    case MutationKind::kOperator: {
      std::vector<Site> calls;
      for (const auto& s : sites)
        if (s.node->is_call()) calls.push_back(s);
      if (calls.empty()) return std::nullopt;
      Expr& node = *calls[rng.index(calls.size())].node;
      const auto& info = op_info(node.op);
      std::vector<Op> alts;
      for (const auto& o : operator_table()) {
        if (o.op != info.op && o.arity == info.arity && o.window_slot == info.window_slot &&
            o.unit_rule == info.unit_rule) {
          alts.push_back(o.op);
        }
      }
      if (alts.empty()) return std::nullopt;
      node.op = alts[rng.index(alts.size())];
      return child;
    }
  }
  return std::nullopt;
}

}  // namespace

Expr mutate(const Expr& e, const GpConfig& cfg, Rng& rng, std::optional<MutationKind> kind) {
  static const MutationKind kinds[] = {MutationKind::kSubtree, MutationKind::kTerminal, MutationKind::kWindow,
                                       MutationKind::kOperator};
  for (int attempt = 0; attempt < std::max(cfg.max_invalid_retries, 1); ++attempt) {
    const MutationKind k = kind ? *kind : kinds[rng.index(4)];
    auto child = mutate_once(e, k, cfg, rng);
    if (child && structurally_ok(*child, cfg.max_depth)) return std::move(*child);
  }
  return e;
}

namespace {

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
  Matrix out(end - begin, m.cols);
  std::copy(m.data.begin() + static_cast<std::ptrdiff_t>(begin * m.cols),
            m.data.begin() + static_cast<std::ptrdiff_t>(end * m.cols), out.data.begin());
  return out;
}

double ic_fitness(double ic, int complexity_nodes, double parsimony) {
  if (is_missing(ic)) return kNegInf;
  return std::abs(ic) - parsimony * complexity_nodes;
}

}  // namespace

double fitness(const Expr& e, const Panel& train_panel, const Matrix& train_labels, const GpConfig& cfg) {
  AlphaMatrix a;
  try {
    a = eval_batch(e, train_panel, 1);
  } catch (const Error&) {
    return kNegInf;
  }
  const double ic = mean_ic(ic_series(a.values, train_labels, IcKind::kPearson, cfg.min_obs));
  return ic_fitness(ic, complexity(e), cfg.parsimony);
}

double alpha_correlation(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::kInvalidArgument, "alpha matrices differ in shape");
  return pearson(a.data, b.data, 2);
}

namespace {

struct Scored {
  Expr expr;
  std::string text;
  double fitness = kNegInf;   // after overrides, before diversity penalty
  double train_ic = kMissing;  // signed
  double val_ic = kMissing;    // signed, same orientation as train_ic
  Matrix train_alpha;
};

struct Split {
  std::size_t split = 0;
  Matrix train_labels;
  Matrix val_labels;
};

double oriented(double ic, double train_ic) {
  if (is_missing(ic)) return 0.0;
  return (!is_missing(train_ic) && train_ic < 0) ? -ic : ic;
}

Scored score(const Expr& e, const Panel& panel, const Split& sp, const GpConfig& cfg, const EvolveHooks& hooks) {
  Scored s;
  s.expr = e;
  s.text = print_expr(e);
  Matrix full;
  try {
    full = eval_batch(e, panel, 1).values;
  } catch (const Error&) {
    full = Matrix(panel.n_dates(), panel.n_instruments());
  }
  s.train_alpha = slice_rows(full, 0, sp.split);
  const Matrix val_alpha = slice_rows(full, sp.split, full.rows);
  s.train_ic = mean_ic(ic_series(s.train_alpha, sp.train_labels, IcKind::kPearson, cfg.min_obs));
  s.val_ic = mean_ic(ic_series(val_alpha, sp.val_labels, IcKind::kPearson, cfg.min_obs));
  s.fitness = ic_fitness(s.train_ic, complexity(e), cfg.parsimony);
  if (hooks.fitness_override) s.fitness = hooks.fitness_override(e, s.fitness);
  if (hooks.validation_override) s.val_ic = hooks.validation_override(e, oriented(s.val_ic, s.train_ic));
  else s.val_ic = oriented(s.val_ic, s.train_ic);
  return s;
}

Expr orient(const Expr& e, double train_ic) {
  if (!is_missing(train_ic) && train_ic < 0) return Expr::call(Op::kMul, {Expr::num_lit(-1.0), e});
  return e;
}

std::size_t tournament(const std::vector<double>& fit, int k, Rng& rng) {
  std::size_t best = rng.index(fit.size());
  for (int j = 1; j < k; ++j) {
    const std::size_t c = rng.index(fit.size());
    if (fit[c] > fit[best] || (fit[c] == fit[best] && c < best)) best = c;
  }
  return best;
}

nlohmann::ordered_json num_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace

SearchResult evolve(const GpConfig& cfg, const Panel& panel, const LabelMatrix& labels,
                    const std::vector<Expr>& seeds, const std::vector<Expr>& pool_exprs,
                    const EvolveHooks& hooks) {
  cfg.check();
  if (labels.values.rows != panel.n_dates() || labels.values.cols != panel.n_instruments()) {
    throw Error(ErrorCode::kInvalidArgument, "labels do not match the panel shape");
  }
  const std::size_t T = panel.n_dates();
  Split sp;
  sp.split = static_cast<std::size_t>(std::floor(static_cast<double>(T) * cfg.train_fraction));
  if (sp.split == 0 || sp.split >= T) throw Error(ErrorCode::kInvalidArgument, "train/validation split leaves an empty slice");
  sp.train_labels = slice_rows(labels.values, 0, sp.split);
  const std::size_t embargo = static_cast<std::size_t>(std::max(0, labels.horizon + labels.lag));
  for (std::size_t t = sp.split > embargo ? sp.split - embargo : 0; t < sp.split; ++t)
    for (std::size_t i = 0; i < sp.train_labels.cols; ++i) sp.train_labels(t, i) = kMissing;
  sp.val_labels = slice_rows(labels.values, sp.split, T);

  // Operators work one level below the cap so the sign wrapper always fits.
  GpConfig work = cfg;
  work.max_depth = cfg.max_depth - 1;

  std::vector<Matrix> pool_alphas;
  for (const auto& p : pool_exprs) pool_alphas.push_back(slice_rows(eval_batch(p, panel, 1).values, 0, sp.split));

  Rng rng(cfg.seed);
  std::vector<Expr> pop = init_population(work, seeds, rng);
  std::vector<Scored> hof;
  SearchResult result;
  result.seed = cfg.seed;
  double best_val = kNegInf;
  int stale = 0;

  for (int gen = 1; gen <= cfg.generations; ++gen) {
    if (hooks.on_member)
      for (const auto& m : pop) hooks.on_member(m);

    // Score unique members in parallel; everything random stays on this thread.
    std::map<std::string, std::size_t> unique_index;
    std::vector<const Expr*> unique;
    std::vector<std::size_t> member_slot(pop.size());
    for (std::size_t k = 0; k < pop.size(); ++k) {
      auto [it, inserted] = unique_index.emplace(print_expr(pop[k]), unique.size());
      if (inserted) unique.push_back(&pop[k]);
      member_slot[k] = it->second;
    }
    std::vector<Scored> scored(unique.size());
    parallel_for(unique.size(), cfg.workers, [&](std::size_t b, std::size_t e) {
      for (std::size_t k = b; k < e; ++k) scored[k] = score(*unique[k], panel, sp, cfg, hooks);
    });

    // Diversity: greedy hall-of-fame rebuild over (hall of fame U population).
    std::vector<double> unique_fit(scored.size());
    for (std::size_t k = 0; k < scored.size(); ++k) {
      double f = scored[k].fitness;
      for (const auto& pa : pool_alphas) {
        if (!std::isfinite(f)) break;
        const double c = alpha_correlation(scored[k].train_alpha, pa);
        if (!is_missing(c) && std::abs(c) > cfg.diversity_corr_cap) f = kNegInf;
      }
      unique_fit[k] = f;
    }
    struct Cand {
      const Scored* s;
      double fit;
      int unique_idx;  // -1 for carried hall-of-fame entries
    };
    std::vector<Cand> cands;
    for (const auto& h : hof) {
      if (!unique_index.count(h.text)) cands.push_back({&h, h.fitness, -1});
    }
    for (std::size_t k = 0; k < scored.size(); ++k) cands.push_back({&scored[k], unique_fit[k], static_cast<int>(k)});
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
      if (x.fit != y.fit) return x.fit > y.fit;
      return x.s->text < y.s->text;
    });
    std::vector<const Scored*> accepted;
    for (const auto& c : cands) {
      if (!std::isfinite(c.fit)) break;
      bool clash = false;
      for (const Scored* a : accepted) {
        const double r = alpha_correlation(c.s->train_alpha, a->train_alpha);
        if (!is_missing(r) && std::abs(r) > cfg.diversity_corr_cap) {
          clash = true;
          break;
        }
      }
      if (clash) {
        if (c.unique_idx >= 0) unique_fit[static_cast<std::size_t>(c.unique_idx)] = kNegInf;
      } else if (accepted.size() < static_cast<std::size_t>(cfg.hall_of_fame_size)) {
        accepted.push_back(c.s);
      }
    }
    std::vector<Scored> next_hof;
    next_hof.reserve(accepted.size());
    for (const Scored* a : accepted) next_hof.push_back(*a);
    hof = std::move(next_hof);

    std::vector<double> fit(pop.size());
    for (std::size_t k = 0; k < pop.size(); ++k) fit[k] = unique_fit[member_slot[k]];

    GenerationStats gs;
    gs.generation = gen;
    std::size_t best = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < pop.size(); ++k) {
      if (fit[k] > fit[best]) best = k;
      if (std::isfinite(fit[k])) {
        sum += fit[k];
        ++gs.finite_members;
      }
    }
    gs.best_fitness = fit[best];
    gs.mean_fitness = gs.finite_members > 0 ? sum / gs.finite_members : kNegInf;
    gs.best_validation_ic = std::isfinite(fit[best]) ? scored[member_slot[best]].val_ic : kNegInf;
    result.history.push_back(gs);
    result.generations_run = gen;

    if (gs.best_validation_ic > best_val) {
      best_val = gs.best_validation_ic;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
    if (gen == cfg.generations) break;

    // Breed the next generation.
    std::vector<std::size_t> order(pop.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return fit[x] > fit[y]; });
    std::vector<Expr> next;
    next.reserve(pop.size());
    for (int k = 0; k < cfg.elitism_count && std::isfinite(fit[order[static_cast<std::size_t>(k)]]); ++k) {
      next.push_back(pop[order[static_cast<std::size_t>(k)]]);
    }
    while (next.size() < pop.size()) {
      const double r = rng.uniform();
      std::optional<Expr> child;
      std::size_t parent = 0;
      if (r < cfg.p_crossover) {
        parent = tournament(fit, cfg.tournament_k, rng);
        const std::size_t other = tournament(fit, cfg.tournament_k, rng);
        for (int attempt = 0; attempt <= cfg.max_invalid_retries && !child; ++attempt) {
          Expr c = crossover(pop[parent], pop[other], work, rng);
          if (validate_expr(c).valid()) child = std::move(c);
        }
      } else if (r < cfg.p_crossover + cfg.p_mutation) {
        parent = tournament(fit, cfg.tournament_k, rng);
        for (int attempt = 0; attempt <= cfg.max_invalid_retries && !child; ++attempt) {
          Expr c = mutate(pop[parent], work, rng);
          if (validate_expr(c).valid()) child = std::move(c);
        }
      } else {
        parent = tournament(fit, cfg.tournament_k, rng);
      }
      next.push_back(child ? std::move(*child) : pop[parent]);
    }
    pop = std::move(next);
  }

  for (const auto& h : hof) {
    HallOfFameEntry e;
    e.expr = orient(h.expr, h.train_ic);
    e.text = print_expr(e.expr);
    e.train_fitness = h.fitness;
    e.train_mean_ic = is_missing(h.train_ic) ? 0.0 : std::abs(h.train_ic);
    e.validation_mean_ic = h.val_ic;
    e.complexity = complexity(e.expr);
    result.hall_of_fame.push_back(std::move(e));
  }
  std::stable_sort(result.hall_of_fame.begin(), result.hall_of_fame.end(),
                   [](const HallOfFameEntry& a, const HallOfFameEntry& b) {
                     if (a.validation_mean_ic != b.validation_mean_ic) return a.validation_mean_ic > b.validation_mean_ic;
                     return a.text < b.text;
                   });
  return result;
}

std::string SearchResult::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["generations_run"] = generations_run;
  j["early_stopped"] = early_stopped;
  auto hist = nlohmann::ordered_json::array();
  for (const auto& g : history) {
    nlohmann::ordered_json h;
    h["generation"] = g.generation;
    h["best_fitness"] = num_or_null(g.best_fitness);
    h["mean_fitness"] = num_or_null(g.mean_fitness);
    h["best_validation_ic"] = num_or_null(g.best_validation_ic);
    h["finite_members"] = g.finite_members;
    hist.push_back(std::move(h));
  }
  j["history"] = std::move(hist);
  auto hof = nlohmann::ordered_json::array();
  for (const auto& e : hall_of_fame) {
    nlohmann::ordered_json h;
    h["expression"] = e.text;
    h["train_fitness"] = num_or_null(e.train_fitness);
    h["train_mean_ic"] = num_or_null(e.train_mean_ic);
    h["validation_mean_ic"] = num_or_null(e.validation_mean_ic);
    h["complexity"] = e.complexity;
    hof.push_back(std::move(h));
  }
  j["hall_of_fame"] = std::move(hof);
  return j.dump(2);
}

std::string SearchResult::hall_of_fame_jsonl() const {
  std::string out;
  int rank = 1;
  for (const auto& e : hall_of_fame) {
    nlohmann::ordered_json j;
    j["id"] = sha256_hex(e.text);
    j["name"] = "gp_" + std::to_string(seed) + "_" + std::to_string(rank++);
    j["expression"] = e.text;
    j["description"] = "genetic programming hall-of-fame member";
    j["tags"] = {"gp"};
    nlohmann::ordered_json m;
    m["mean_ic"] = num_or_null(e.validation_mean_ic);
    m["train_mean_ic"] = num_or_null(e.train_mean_ic);
    m["train_fitness"] = num_or_null(e.train_fitness);
    j["metrics"] = std::move(m);
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace alphaforge
