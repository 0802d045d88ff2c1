// SPDX-License-Identifier: Apache-2.0
#include "alphaforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <json.hpp>

namespace alphaforge {

namespace {

void average_ranks(std::span<const double> v, std::vector<double>& out) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  out.assign(n, 0.0);
  std::size_t p = 0;
  while (p < n) {
    std::size_t q = p + 1;
    while (q < n && v[idx[q]] == v[idx[p]]) ++q;
    const double r = 0.5 * static_cast<double>(p + 1 + q);  // mean of ranks p+1..q
    for (std::size_t k = p; k < q; ++k) out[idx[k]] = r;
    p = q;
  }
}

double product_moment(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - mx, dy = y[k] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return kMissing;
  const double r = sxy / std::sqrt(sxx * syy);
  return std::isfinite(r) ? std::clamp(r, -1.0, 1.0) : kMissing;
}

void joint(std::span<const double> x, std::span<const double> y, std::vector<double>& a,
           std::vector<double>& b) {
  if (x.size() != y.size()) throw Error(ErrorCode::kInvalidArgument, "correlation inputs differ in length");
  a.clear();
  b.clear();
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (is_missing(x[k]) || is_missing(y[k])) continue;
    a.push_back(x[k]);
    b.push_back(y[k]);
  }
}

double sample_std(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y, int min_obs) {
  std::vector<double> a, b;
  joint(x, y, a, b);
  if (a.size() < static_cast<std::size_t>(std::max(min_obs, 2))) return kMissing;
  return product_moment(a, b);
}

double spearman(std::span<const double> x, std::span<const double> y, int min_obs) {
  std::vector<double> a, b;
  joint(x, y, a, b);
  if (a.size() < static_cast<std::size_t>(std::max(min_obs, 2))) return kMissing;
  std::vector<double> ra, rb;
  average_ranks(a, ra);
  average_ranks(b, rb);
  return product_moment(ra, rb);
}

IcSeries ic_series(const Matrix& alpha, const Matrix& labels, IcKind kind, int min_obs) {
  if (!alpha.same_shape(labels)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha shape " + std::to_string(alpha.rows) + "x" +
                                                 std::to_string(alpha.cols) + " does not match labels " +
                                                 std::to_string(labels.rows) + "x" + std::to_string(labels.cols));
  }
  if (min_obs < 3) throw Error(ErrorCode::kInvalidArgument, "min_obs must be >= 3");
  IcSeries s;
  s.kind = kind;
  s.min_obs = std::max(3, std::min(min_obs, static_cast<int>(alpha.cols)));
  s.values.assign(alpha.rows, kMissing);
  for (std::size_t t = 0; t < alpha.rows; ++t) {
    s.values[t] = kind == IcKind::kPearson ? pearson(alpha.row(t), labels.row(t), s.min_obs)
                                           : spearman(alpha.row(t), labels.row(t), s.min_obs);
  }
  return s;
}

double mean_ic(const IcSeries& series) {
  double sum = 0.0;
  int n = 0;
  for (double v : series.values) {
    if (is_missing(v)) continue;
    sum += v;
    ++n;
  }
  return n == 0 ? kMissing : sum / n;
}

IcSummary ic_summary(const IcSeries& series) {
  std::vector<double> defined;
  for (double v : series.values)
    if (!is_missing(v)) defined.push_back(v);
  if (defined.empty()) throw Error(ErrorCode::kInvalidArgument, "IC series has no defined bars");
  if (defined.size() < 2) throw Error(ErrorCode::kInvalidArgument, "ic_ir needs at least two defined bars");
  IcSummary out;
  out.n_bars = static_cast<int>(defined.size());
  out.mean_ic = mean_of(defined);
  const double sd = sample_std(defined, out.mean_ic);
  out.ic_ir = sd > 0.0 ? out.mean_ic / sd : kMissing;
  return out;
}

double annualized_return(std::span<const double> daily) {
  if (daily.empty()) return kMissing;
  return mean_of(daily) * kTradingDays;
}

double sharpe_ratio(std::span<const double> daily) {
  if (daily.size() < 2) return kMissing;
  const double m = mean_of(daily);
  const double sd = sample_std(daily, m);
  if (!(sd > 0.0)) return kMissing;
  return m / sd * std::sqrt(kTradingDays);
}

double max_drawdown(std::span<const double> daily) {
  double equity = 0.0, peak = 0.0, worst = 0.0;
  for (double r : daily) {
    equity += r;
    peak = std::max(peak, equity);
    worst = std::min(worst, equity - peak);
  }
  return worst;
}

BacktestReport quantile_backtest_returns(const Matrix& alpha, const Matrix& forward, int horizon,
                                         int quantiles, double cost_rate) {
  if (!alpha.same_shape(forward)) throw Error(ErrorCode::kInvalidArgument, "alpha and forward returns differ in shape");
  if (quantiles < 2) throw Error(ErrorCode::kInvalidArgument, "quantiles must be >= 2");
  if (horizon < 1) throw Error(ErrorCode::kInvalidArgument, "horizon must be >= 1");
  if (!(cost_rate >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "cost_rate must be >= 0");
  const std::size_t T = alpha.rows, N = alpha.cols;
  const std::size_t need = 2 * static_cast<std::size_t>(quantiles);

  auto defined_names = [&](std::size_t t) {
    std::vector<std::size_t> names;
    for (std::size_t i = 0; i < N; ++i)
      if (!is_missing(alpha(t, i)) && !is_missing(forward(t, i))) names.push_back(i);
    return names;
  };

  std::size_t start = T;
  for (std::size_t t = 0; t < T; ++t) {
    if (defined_names(t).size() >= need) {
      start = t;
      break;
    }
  }
  if (start == T) {
    throw Error(ErrorCode::kInvalidArgument, "no bar has " + std::to_string(need) +
                                                 " instruments with defined alpha and forward return");
  }
  std::size_t last_forward = 0;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < N; ++i)
      if (!is_missing(forward(t, i))) last_forward = t;

  BacktestReport rep;
  rep.quantiles = quantiles;
  rep.cost_rate = cost_rate;
  rep.horizon = horizon;
  std::vector<double> prev(N, 0.0);
  for (std::size_t t = start; t <= last_forward; t += static_cast<std::size_t>(horizon)) {
    std::vector<double> w(N, 0.0);
    double gross = 0.0;
    auto names = defined_names(t);
    if (names.size() >= need) {
      std::stable_sort(names.begin(), names.end(),
                       [&](std::size_t a, std::size_t b) { return alpha(t, a) < alpha(t, b); });
      const std::size_t k = names.size() / static_cast<std::size_t>(quantiles);
      double long_sum = 0.0, short_sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t lo = names[j], hi = names[names.size() - 1 - j];
        w[lo] = -1.0 / static_cast<double>(k);
        w[hi] = 1.0 / static_cast<double>(k);
        short_sum += forward(t, lo);
        long_sum += forward(t, hi);
      }
      gross = long_sum / static_cast<double>(k) - short_sum / static_cast<double>(k);
    }
    double turnover = 0.0;
    for (std::size_t i = 0; i < N; ++i) turnover += std::abs(w[i] - prev[i]);
    const double net = gross - cost_rate * turnover;
    rep.rebalance_bars.push_back(t);
    rep.period_gross.push_back(gross);
    rep.period_turnover.push_back(turnover);
    rep.period_net.push_back(net);
    for (int d = 0; d < horizon; ++d) rep.daily_ls_returns.push_back(net / horizon);
    prev = std::move(w);
  }

  rep.annual_return = annualized_return(rep.daily_ls_returns);
  rep.sharpe = sharpe_ratio(rep.daily_ls_returns);
  rep.max_drawdown = max_drawdown(rep.daily_ls_returns);
  rep.avg_turnover = mean_of(rep.period_turnover);
  const auto ic = ic_series(alpha, forward, IcKind::kPearson);
  const auto ric = ic_series(alpha, forward, IcKind::kSpearman);
  rep.mean_ic = mean_ic(ic);
  rep.rank_ic_mean = mean_ic(ric);
  try {
    rep.ic_ir = ic_summary(ic).ic_ir;
  } catch (const Error&) {
    rep.ic_ir = kMissing;
  }
  return rep;
}

BacktestReport quantile_backtest(const Matrix& alpha, const Panel& panel, int horizon, int lag,
                                 int quantiles, double cost_rate) {
  if (alpha.rows != panel.n_dates() || alpha.cols != panel.n_instruments()) {
    throw Error(ErrorCode::kInvalidArgument, "alpha shape does not match panel");
  }
  const auto fwd = forward_returns(panel, horizon, lag);
  auto rep = quantile_backtest_returns(alpha, fwd.values, horizon, quantiles, cost_rate);
  rep.lag = lag;
  return rep;
}

namespace {

std::string num(double v) { return is_missing(v) ? "nan" : format_double(v); }

nlohmann::ordered_json json_num(double v) {
  if (is_missing(v)) return nullptr;
  return v;
}

}  // namespace

std::string BacktestReport::to_text() const {
  std::string out;
  auto kv = [&](const char* k, const std::string& v) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  };
  kv("mean_ic", num(mean_ic));
  kv("ic_ir", num(ic_ir));
  kv("rank_ic_mean", num(rank_ic_mean));
  kv("annual_return", num(annual_return));
  kv("sharpe", num(sharpe));
  kv("max_drawdown", num(max_drawdown));
  kv("avg_turnover", num(avg_turnover));
  kv("quantiles", std::to_string(quantiles));
  kv("cost_rate", num(cost_rate));
  kv("horizon", std::to_string(horizon));
  kv("lag", std::to_string(lag));
  kv("rebalances", std::to_string(rebalance_bars.size()));
  return out;
}

std::string BacktestReport::to_json() const {
  nlohmann::ordered_json j;
  j["mean_ic"] = json_num(mean_ic);
  j["ic_ir"] = json_num(ic_ir);
  j["rank_ic_mean"] = json_num(rank_ic_mean);
  j["annual_return"] = json_num(annual_return);
  j["sharpe"] = json_num(sharpe);
  j["max_drawdown"] = json_num(max_drawdown);
  j["avg_turnover"] = json_num(avg_turnover);
  j["quantiles"] = quantiles;
  j["cost_rate"] = cost_rate;
  j["horizon"] = horizon;
  j["lag"] = lag;
  auto arr = nlohmann::ordered_json::array();
  for (double v : daily_ls_returns) arr.push_back(json_num(v));
  j["daily_ls_returns"] = std::move(arr);
  return j.dump();
}

bool no_lookahead_audit(const Expr& e, const Panel& panel, std::size_t t) {
  return no_lookahead_audit(e, panel, t, [](const Expr& x, const Panel& p) { return eval_batch(x, p, 1); });
}

bool no_lookahead_audit(const Expr& e, const Panel& panel, std::size_t t, const Evaluator& eval) {
  if (panel.n_dates() < 2 || t + 1 >= panel.n_dates()) {
    throw Error(ErrorCode::kInvalidArgument, "audit bar must satisfy 0 <= t < T-1");
  }
  const AlphaMatrix base = eval(e, panel);
  Panel perturbed = panel;
  for (const auto& [name, m] : panel.fields()) {
    Matrix bumped = m;
    for (std::size_t s = t + 1; s < bumped.rows; ++s)
      for (std::size_t i = 0; i < bumped.cols; ++i) bumped(s, i) *= 1.1;
    perturbed = perturbed.with_field(name, std::move(bumped));
  }
  const AlphaMatrix moved = eval(e, perturbed);
  if (!base.values.same_shape(moved.values)) return false;
  for (std::size_t s = 0; s <= t; ++s) {
    const auto a = base.values.row(s), b = moved.values.row(s);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0 && !(is_missing(a[i]) && is_missing(b[i]))) {
        return false;
      }
    }
  }
  return true;
}

std::string ic_series_to_csv(const IcSeries& series, const Panel& panel) {
  if (series.values.size() != panel.n_dates()) throw Error(ErrorCode::kInvalidArgument, "IC series length does not match panel");
  std::string out = "date,ic\n";
  for (std::size_t t = 0; t < series.values.size(); ++t) {
    out += format_date(panel.dates()[t]);
    out += ',';
    out += format_double(series.values[t]);
    out += '\n';
  }
  return out;
}

}  // namespace alphaforge
