// SPDX-License-Identifier: Apache-2.0
#include "alphaforge/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "alphaforge/parallel.hpp"
#include "alphaforge/rolling.hpp"

namespace alphaforge {

int lookback(const Expr& e) {
  if (!e.is_call()) return 0;
  const auto& info = op_info(e.op);
  int child = 0;
  for (int k = 0; k < info.arity; ++k) {
    if (k == info.window_slot) continue;
    child = std::max(child, lookback(e.args[static_cast<std::size_t>(k)]));
  }
  if (info.window_slot < 0) return child;
  const int w = static_cast<int>(e.args[static_cast<std::size_t>(info.window_slot)].int_value);
  const bool period = e.op == Op::kTsDelay || e.op == Op::kTsDelta;
  return child + (period ? w : w - 1);
}

// ---------------------------------------------------------------------------
// Row kernels
// ---------------------------------------------------------------------------

namespace {

double apply_unary(Op op, double x) {
  if (is_missing(x)) return kMissing;
  switch (op) {
    case Op::kAbs: return std::abs(x);
    case Op::kLog: return x > 0.0 ? finite_or_missing(std::log(x)) : kMissing;
    case Op::kSign: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    default: return kMissing;
  }
}

double apply_binary(Op op, double a, double b) {
  switch (op) {
    case Op::kAdd: return finite_or_missing(a + b);
    case Op::kSub: return finite_or_missing(a - b);
    case Op::kMul: return finite_or_missing(a * b);
    case Op::kDiv: return b == 0.0 ? kMissing : finite_or_missing(a / b);
    default: return kMissing;
  }
}

}  // namespace

void cs_rank_row(std::span<const double> in, std::span<double> out) {
  std::vector<std::size_t> idx;
  idx.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i)
    if (!is_missing(in[i])) idx.push_back(i);
  std::fill(out.begin(), out.end(), kMissing);
  const int n = static_cast<int>(idx.size());
  if (n < 2) return;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return in[a] < in[b]; });
  std::size_t p = 0;
  while (p < idx.size()) {
    std::size_t q = p + 1;
    while (q < idx.size() && in[idx[q]] == in[idx[p]]) ++q;
    const double r = scaled_rank(static_cast<int>(p), static_cast<int>(q - p), n);
    for (std::size_t k = p; k < q; ++k) out[idx[k]] = r;
    p = q;
  }
}

void cs_zscore_row(std::span<const double> in, std::span<double> out) {
  std::fill(out.begin(), out.end(), kMissing);
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : in) {
    if (is_missing(v)) continue;
    sum += v;
    ++n;
  }
  if (n < 2) return;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : in)
    if (!is_missing(v)) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0) || !std::isfinite(sd)) return;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (!is_missing(in[i])) out[i] = finite_or_missing((in[i] - mean) / sd);
}

namespace {

std::vector<double> group_means(std::span<const double> in, std::span<const int> groups,
                                int n_groups) {
  std::vector<double> sum(static_cast<std::size_t>(n_groups), 0.0);
  std::vector<int> count(static_cast<std::size_t>(n_groups), 0);
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (is_missing(in[i])) continue;
    sum[static_cast<std::size_t>(groups[i])] += in[i];
    ++count[static_cast<std::size_t>(groups[i])];
  }
  for (std::size_t g = 0; g < sum.size(); ++g)
    sum[g] = count[g] >= 2 ? sum[g] / count[g] : kMissing;
  return sum;
}

}  // namespace

void group_mean_row(std::span<const double> in, std::span<const int> groups, int n_groups,
                    std::span<double> out) {
  const auto means = group_means(in, groups, n_groups);
  for (std::size_t i = 0; i < in.size(); ++i)
    out[i] = is_missing(in[i]) ? kMissing : finite_or_missing(means[static_cast<std::size_t>(groups[i])]);
}

void group_neutralize_row(std::span<const double> in, std::span<const int> groups,
                          int n_groups, std::span<double> out) {
  const auto means = group_means(in, groups, n_groups);
  for (std::size_t i = 0; i < in.size(); ++i)
    out[i] = is_missing(in[i]) ? kMissing
                               : finite_or_missing(in[i] - means[static_cast<std::size_t>(groups[i])]);
}

// ---------------------------------------------------------------------------
// Batch evaluation
// ---------------------------------------------------------------------------

namespace {

struct BatchContext {
  const Panel& panel;
  int threads;
};

Matrix eval_node(const Expr& e, const BatchContext& ctx);

void ts_column(Op op, int w, const Matrix& x, const Matrix* y, Matrix& out, std::size_t i) {
  const std::size_t T = x.rows;
  auto at = [&](std::size_t t) { return x(t, i); };
  switch (op) {
    case Op::kTsDelay:
      for (std::size_t t = 0; t < T; ++t)
        out(t, i) = t >= static_cast<std::size_t>(w) ? at(t - w) : kMissing;
      break;
    case Op::kTsDelta:
      for (std::size_t t = 0; t < T; ++t)
        out(t, i) = t >= static_cast<std::size_t>(w) ? finite_or_missing(at(t) - at(t - w)) : kMissing;
      break;
    case Op::kTsMean:
    case Op::kTsStd: {
      RollingMoments m(w);
      for (std::size_t t = 0; t < T; ++t) {
        m.push(at(t));
        out(t, i) = op == Op::kTsMean ? m.mean() : m.stddev();
      }
      break;
    }
    case Op::kTsMin:
    case Op::kTsMax: {
      const bool is_max = op == Op::kTsMax;
      for (std::size_t t = 0; t < T; ++t) {
        if (t + 1 < static_cast<std::size_t>(w)) {
          out(t, i) = kMissing;
          continue;
        }
        double best = kMissing;
        bool any_missing = false;
        for (std::size_t s = t + 1 - w; s <= t; ++s) {
          const double v = at(s);
          if (is_missing(v)) {
            any_missing = true;
            break;
          }
          if (is_missing(best) || (is_max ? v >= best : v <= best)) best = v;
        }
        out(t, i) = any_missing ? kMissing : best;
      }
      break;
    }
    case Op::kTsRank:
      for (std::size_t t = 0; t < T; ++t) {
        if (t + 1 < static_cast<std::size_t>(w)) {
          out(t, i) = kMissing;
          continue;
        }
        const double v = at(t);
        int less = 0, equal = 0;
        bool any_missing = false;
        for (std::size_t s = t + 1 - w; s <= t; ++s) {
          const double u = at(s);
          if (is_missing(u)) {
            any_missing = true;
            break;
          }
          if (u < v) ++less;
          else if (u == v) ++equal;
        }
        out(t, i) = any_missing ? kMissing : scaled_rank(less, equal, w);
      }
      break;
    case Op::kTsCorr: {
      RollingComoments c(w);
      for (std::size_t t = 0; t < T; ++t) {
        c.push(at(t), (*y)(t, i));
        out(t, i) = c.corr();
      }
      break;
    }
    default:
      break;
  }
}

Matrix eval_call(const Expr& e, const BatchContext& ctx) {
  const auto& info = op_info(e.op);
  const std::size_t T = ctx.panel.n_dates(), N = ctx.panel.n_instruments();
  switch (info.category) {
    case OpCategory::kElementwise: {
      if (info.arity == 1) {
        Matrix out = eval_node(e.args[0], ctx);
        for (double& v : out.data) v = apply_unary(e.op, v);
        return out;
      }
      Matrix out = eval_node(e.args[0], ctx);
      const Matrix b = eval_node(e.args[1], ctx);
      for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = apply_binary(e.op, out.data[k], b.data[k]);
      return out;
    }
    case OpCategory::kTimeSeries: {
      const Matrix x = eval_node(e.args[0], ctx);
      Matrix y;
      if (e.op == Op::kTsCorr) y = eval_node(e.args[1], ctx);
      const int w = static_cast<int>(e.args[static_cast<std::size_t>(info.window_slot)].int_value);
      Matrix out(T, N);
      parallel_for(N, ctx.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) ts_column(e.op, w, x, e.op == Op::kTsCorr ? &y : nullptr, out, i);
      });
      return out;
    }
    case OpCategory::kCrossSectional:
    case OpCategory::kGroup: {
      const Matrix x = eval_node(e.args[0], ctx);
      Matrix out(T, N);
      const auto& groups = ctx.panel.sector_ids();
      const int n_groups = ctx.panel.n_sectors();
      parallel_for(T, ctx.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
          switch (e.op) {
            case Op::kCsRank: cs_rank_row(x.row(t), out.row(t)); break;
            case Op::kCsZscore: cs_zscore_row(x.row(t), out.row(t)); break;
            case Op::kGroupMean: group_mean_row(x.row(t), groups, n_groups, out.row(t)); break;
            default: group_neutralize_row(x.row(t), groups, n_groups, out.row(t)); break;
          }
        }
      });
      return out;
    }
  }
  return Matrix(T, N);
}

Matrix eval_node(const Expr& e, const BatchContext& ctx) {
  const std::size_t T = ctx.panel.n_dates(), N = ctx.panel.n_instruments();
  switch (e.kind) {
    case Expr::Kind::kField:
      if (!ctx.panel.has_field(e.field)) {
        throw Error(ErrorCode::kInvalidArgument, "unknown field '" + e.field + "'");
      }
      return ctx.panel.field(e.field);
    case Expr::Kind::kNum:
      return Matrix(T, N, finite_or_missing(e.num_value));
    case Expr::Kind::kInt:
      return Matrix(T, N, static_cast<double>(e.int_value));
    case Expr::Kind::kCall:
      return eval_call(e, ctx);
  }
  return Matrix(T, N);
}

}  // namespace

AlphaMatrix eval_batch(const Expr& e, const Panel& panel, int threads) {
  check_structure(e);
  BatchContext ctx{panel, std::max(threads, 1)};
  AlphaMatrix out;
  out.values = eval_node(e, ctx);
  out.expr_text = print_expr(e);
  return out;
}

// ---------------------------------------------------------------------------
// Streaming evaluation
// ---------------------------------------------------------------------------

struct StreamEvaluator::Impl {
  struct Node {
    Expr::Kind kind;
    Op op = Op::kAdd;
    int window = 0;
    int field_index = -1;
    double constant = 0.0;
    std::vector<int> children;  // indices into nodes (window literals excluded)
    std::vector<double> out;
    std::vector<RingBuffer> rings;
    std::vector<RollingMoments> moments;
    std::vector<RollingComoments> comoments;
    std::vector<MonotonicWindow> extrema;
    std::vector<SortedWindow> ranks;
  };

  std::vector<int> groups;
  int n_groups = 0;
  std::vector<std::string> fields;
  std::vector<Node> nodes;  // post-order; root last
  std::size_t bars = 0;

  int compile(const Expr& e) {
    const std::size_t N = groups.size();
    Node node;
    node.kind = e.kind;
    node.out.assign(N, kMissing);
    switch (e.kind) {
      case Expr::Kind::kField:
        node.field_index = static_cast<int>(
            std::lower_bound(fields.begin(), fields.end(), e.field) - fields.begin());
        break;
      case Expr::Kind::kNum:
        node.constant = finite_or_missing(e.num_value);
        std::fill(node.out.begin(), node.out.end(), node.constant);
        break;
      case Expr::Kind::kInt:
        node.constant = static_cast<double>(e.int_value);
        std::fill(node.out.begin(), node.out.end(), node.constant);
        break;
      case Expr::Kind::kCall: {
        const auto& info = op_info(e.op);
        node.op = e.op;
        for (int k = 0; k < info.arity; ++k) {
          if (k == info.window_slot) {
            node.window = static_cast<int>(e.args[static_cast<std::size_t>(k)].int_value);
            continue;
          }
          node.children.push_back(compile(e.args[static_cast<std::size_t>(k)]));
        }
        const int w = node.window;
        switch (e.op) {
          case Op::kTsDelay:
          case Op::kTsDelta:
            node.rings.assign(N, RingBuffer(static_cast<std::size_t>(w) + 1));
            break;
          case Op::kTsMean:
          case Op::kTsStd:
            node.moments.assign(N, RollingMoments(w));
            break;
          case Op::kTsMin:
          case Op::kTsMax:
            node.extrema.assign(N, MonotonicWindow(w, e.op == Op::kTsMax));
            break;
          case Op::kTsRank:
            node.ranks.assign(N, SortedWindow(w));
            break;
          case Op::kTsCorr:
            node.comoments.assign(N, RollingComoments(w));
            break;
          default:
            break;
        }
        break;
      }
    }
    nodes.push_back(std::move(node));
    return static_cast<int>(nodes.size() - 1);
  }

  void step(Node& n, std::span<const std::span<const double>> rows) {
    const std::size_t N = groups.size();
    if (n.kind == Expr::Kind::kField) {
      const auto src = rows[static_cast<std::size_t>(n.field_index)];
      std::copy(src.begin(), src.end(), n.out.begin());
      return;
    }
    if (n.kind != Expr::Kind::kCall) return;
    const auto& a = nodes[static_cast<std::size_t>(n.children[0])].out;
    switch (n.op) {
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kDiv: {
        const auto& b = nodes[static_cast<std::size_t>(n.children[1])].out;
        for (std::size_t i = 0; i < N; ++i) n.out[i] = apply_binary(n.op, a[i], b[i]);
        break;
      }
      case Op::kAbs:
      case Op::kLog:
      case Op::kSign:
        for (std::size_t i = 0; i < N; ++i) n.out[i] = apply_unary(n.op, a[i]);
        break;
      case Op::kTsDelay:
      case Op::kTsDelta:
        for (std::size_t i = 0; i < N; ++i) {
          auto& r = n.rings[i];
          r.push(a[i]);
          if (!r.full()) {
            n.out[i] = kMissing;
          } else if (n.op == Op::kTsDelay) {
            n.out[i] = r.back(static_cast<std::size_t>(n.window));
          } else {
            n.out[i] = finite_or_missing(r.back(0) - r.back(static_cast<std::size_t>(n.window)));
          }
        }
        break;
      case Op::kTsMean:
      case Op::kTsStd:
        for (std::size_t i = 0; i < N; ++i) {
          n.moments[i].push(a[i]);
          n.out[i] = n.op == Op::kTsMean ? n.moments[i].mean() : n.moments[i].stddev();
        }
        break;
      case Op::kTsMin:
      case Op::kTsMax:
        for (std::size_t i = 0; i < N; ++i) {
          n.extrema[i].push(a[i]);
          n.out[i] = n.extrema[i].value();
        }
        break;
      case Op::kTsRank:
        for (std::size_t i = 0; i < N; ++i) {
          n.ranks[i].push(a[i]);
          n.out[i] = n.ranks[i].rank_of_latest();
        }
        break;
      case Op::kTsCorr: {
        const auto& b = nodes[static_cast<std::size_t>(n.children[1])].out;
        for (std::size_t i = 0; i < N; ++i) {
          n.comoments[i].push(a[i], b[i]);
          n.out[i] = n.comoments[i].corr();
        }
        break;
      }
      case Op::kCsRank: cs_rank_row(a, n.out); break;
      case Op::kCsZscore: cs_zscore_row(a, n.out); break;
      case Op::kGroupMean: group_mean_row(a, groups, n_groups, n.out); break;
      case Op::kGroupNeutralize: group_neutralize_row(a, groups, n_groups, n.out); break;
    }
  }
};

StreamEvaluator::StreamEvaluator(const Expr& e, std::vector<int> sector_ids)
    : impl_(std::make_unique<Impl>()) {
  check_structure(e);
  impl_->groups = std::move(sector_ids);
  for (int g : impl_->groups) {
    if (g < 0) throw Error(ErrorCode::kInvalidArgument, "negative sector id");
    impl_->n_groups = std::max(impl_->n_groups, g + 1);
  }
  impl_->fields = referenced_fields(e);
  impl_->compile(e);
}

StreamEvaluator::~StreamEvaluator() = default;
StreamEvaluator::StreamEvaluator(StreamEvaluator&&) noexcept = default;
StreamEvaluator& StreamEvaluator::operator=(StreamEvaluator&&) noexcept = default;

const std::vector<std::string>& StreamEvaluator::fields() const { return impl_->fields; }
std::size_t StreamEvaluator::n_instruments() const { return impl_->groups.size(); }
std::size_t StreamEvaluator::bars_seen() const { return impl_->bars; }

std::span<const double> StreamEvaluator::push_bar(std::span<const std::span<const double>> rows) {
  if (rows.size() != impl_->fields.size()) {
    throw Error(ErrorCode::kInvalidArgument, "push_bar expects " + std::to_string(impl_->fields.size()) +
                                                 " field rows, got " + std::to_string(rows.size()));
  }
  for (const auto& r : rows) {
    if (r.size() != impl_->groups.size()) {
      throw Error(ErrorCode::kInvalidArgument, "push_bar row width does not match instrument count");
    }
  }
  for (auto& n : impl_->nodes) impl_->step(n, rows);
  ++impl_->bars;
  return impl_->nodes.back().out;
}

AlphaMatrix eval_streaming(const Expr& e, const Panel& panel, std::optional<std::size_t> stop_after) {
  StreamEvaluator ev(e, panel.sector_ids());
  std::vector<const Matrix*> sources;
  for (const auto& name : ev.fields()) {
    if (!panel.has_field(name)) throw Error(ErrorCode::kInvalidArgument, "unknown field '" + name + "'");
    sources.push_back(&panel.field(name));
  }
  const std::size_t T = panel.n_dates(), N = panel.n_instruments();
  AlphaMatrix out;
  out.values = Matrix(T, N);
  out.expr_text = print_expr(e);
  std::vector<std::span<const double>> rows(sources.size());
  for (std::size_t t = 0; t < T; ++t) {
    if (stop_after && t > *stop_after) break;
    for (std::size_t k = 0; k < sources.size(); ++k) rows[k] = sources[k]->row(t);
    const auto row = ev.push_bar(rows);
    std::copy(row.begin(), row.end(), out.values.row(t).begin());
  }
  return out;
}

std::string alpha_to_csv(const AlphaMatrix& alpha, const Panel& panel) {
  if (alpha.values.rows != panel.n_dates() || alpha.values.cols != panel.n_instruments()) {
    throw Error(ErrorCode::kInvalidArgument, "alpha shape does not match panel");
  }
  std::string out = "date";
  for (const auto& s : panel.instruments()) {
    out += ',';
    out += s;
  }
  out += '\n';
  for (std::size_t t = 0; t < alpha.values.rows; ++t) {
    out += format_date(panel.dates()[t]);
    for (std::size_t i = 0; i < alpha.values.cols; ++i) {
      out += ',';
      out += format_double(alpha.values(t, i));
    }
    out += '\n';
  }
  return out;
}

void write_alpha_csv(const AlphaMatrix& alpha, const Panel& panel, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  f << alpha_to_csv(alpha, panel);
  if (!f) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

}  // namespace alphaforge
