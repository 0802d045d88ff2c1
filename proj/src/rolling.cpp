// SPDX-License-Identifier: Apache-2.0
#include "alphaforge/rolling.hpp"

#include <cmath>

namespace alphaforge {

RollingMoments::RollingMoments(int window)
    : w_(std::max(window, 1)), buf_(static_cast<std::size_t>(std::max(window, 1))) {}

void RollingMoments::push(double v) noexcept {
  const bool was_full = buf_.full();
  const double out = buf_.push(v);
  if (is_missing(v)) {
    ++missing_;
  } else {
    if (is_missing(shift_)) shift_ = v;
    const double d = v - shift_;
    s1_.add(d);
    s2_.add(d * d);
  }
  if (was_full) {
    if (is_missing(out)) {
      --missing_;
    } else {
      const double d = out - shift_;
      s1_.add(-d);
      s2_.add(-(d * d));
    }
  }
  if (!is_missing(v) && v == last_) {
    ++run_;
  } else {
    run_ = is_missing(v) ? 0 : 1;
  }
  last_ = v;
  ++pushes_;
  if (pushes_ % kRecomputeInterval == 0) rebuild();
}

void RollingMoments::rebuild() noexcept {
  s1_.reset();
  s2_.reset();
  const std::size_t n = buf_.size();
  bool shifted = false;
  for (std::size_t k = n; k-- > 0;) {
    const double v = buf_.back(k);
    if (is_missing(v)) continue;
    if (!shifted) {
      shift_ = v;
      shifted = true;
    }
    const double d = v - shift_;
    s1_.add(d);
    s2_.add(d * d);
  }
}

double RollingMoments::mean() const noexcept {
  if (!ready()) return kMissing;
  if (constant()) return last_;
  return finite_or_missing(shift_ + s1_.value() / w_);
}

double RollingMoments::stddev() const noexcept {
  if (!ready() || w_ < 2) return kMissing;
  if (constant()) return 0.0;
  const double s1 = s1_.value();
  const double var = (s2_.value() - s1 * s1 / w_) / (w_ - 1);
  return finite_or_missing(var > 0.0 ? std::sqrt(var) : 0.0);
}

RollingComoments::RollingComoments(int window)
    : w_(std::max(window, 2)),
      xs_(static_cast<std::size_t>(std::max(window, 2))),
      ys_(static_cast<std::size_t>(std::max(window, 2))) {}

void RollingComoments::push(double x, double y) noexcept {
  const bool was_full = xs_.full();
  const bool in_ok = !is_missing(x) && !is_missing(y);
  // Store incomplete pairs as missing on both sides so sums stay paired.
  const double xi = in_ok ? x : kMissing;
  const double yi = in_ok ? y : kMissing;
  const double xo = xs_.push(xi);
  const double yo = ys_.push(yi);
  if (!in_ok) {
    ++missing_;
  } else {
    if (is_missing(kx_)) {
      kx_ = x;
      ky_ = y;
    }
    const double dx = x - kx_, dy = y - ky_;
    sx_.add(dx);
    sy_.add(dy);
    sxx_.add(dx * dx);
    syy_.add(dy * dy);
    sxy_.add(dx * dy);
  }
  if (was_full) {
    if (is_missing(xo)) {
      --missing_;
    } else {
      const double dx = xo - kx_, dy = yo - ky_;
      sx_.add(-dx);
      sy_.add(-dy);
      sxx_.add(-(dx * dx));
      syy_.add(-(dy * dy));
      sxy_.add(-(dx * dy));
    }
  }
  if (in_ok && x == last_x_) ++run_x_;
  else run_x_ = in_ok ? 1 : 0;
  if (in_ok && y == last_y_) ++run_y_;
  else run_y_ = in_ok ? 1 : 0;
  last_x_ = xi;
  last_y_ = yi;
  ++pushes_;
  if (pushes_ % kRecomputeInterval == 0) rebuild();
}

void RollingComoments::rebuild() noexcept {
  sx_.reset();
  sy_.reset();
  sxx_.reset();
  syy_.reset();
  sxy_.reset();
  bool shifted = false;
  for (std::size_t k = xs_.size(); k-- > 0;) {
    const double x = xs_.back(k), y = ys_.back(k);
    if (is_missing(x)) continue;
    if (!shifted) {
      kx_ = x;
      ky_ = y;
      shifted = true;
    }
    const double dx = x - kx_, dy = y - ky_;
    sx_.add(dx);
    sy_.add(dy);
    sxx_.add(dx * dx);
    syy_.add(dy * dy);
    sxy_.add(dx * dy);
  }
}

double RollingComoments::corr() const noexcept {
  if (!xs_.full() || missing_ > 0) return kMissing;
  const auto w = static_cast<std::uint64_t>(w_);
  if (run_x_ >= w || run_y_ >= w) return kMissing;
  const double n = w_;
  const double sx = sx_.value(), sy = sy_.value();
  const double vx = sxx_.value() - sx * sx / n;
  const double vy = syy_.value() - sy * sy / n;
  const double cxy = sxy_.value() - sx * sy / n;
  if (!(vx > 0.0) || !(vy > 0.0)) return kMissing;
  const double r = cxy / std::sqrt(vx * vy);
  if (!std::isfinite(r)) return kMissing;
  return std::clamp(r, -1.0, 1.0);
}

void MonotonicWindow::push(double v) {
  ++t_;
  if (is_missing(v)) {
    last_missing_ = t_;
  } else {
    while (!dq_.empty() && (is_max_ ? dq_.back().second <= v : dq_.back().second >= v)) {
      dq_.pop_back();
    }
    dq_.emplace_back(t_, v);
  }
  while (!dq_.empty() && dq_.front().first <= t_ - w_) dq_.pop_front();
}

double MonotonicWindow::value() const noexcept {
  if (t_ + 1 < w_ || last_missing_ > t_ - w_ || dq_.empty()) return kMissing;
  return dq_.front().second;
}

void SortedWindow::push(double v) {
  const bool was_full = ring_.full();
  const double out = ring_.push(v);
  if (was_full) {
    if (is_missing(out)) {
      --missing_;
    } else {
      sorted_.erase(std::lower_bound(sorted_.begin(), sorted_.end(), out));
    }
  }
  if (is_missing(v)) {
    ++missing_;
  } else {
    sorted_.insert(std::upper_bound(sorted_.begin(), sorted_.end(), v), v);
  }
}

double SortedWindow::rank_of_latest() const noexcept {
  if (!ring_.full() || missing_ > 0) return kMissing;
  const double v = ring_.back(0);
  const auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), v);
  const auto hi = std::upper_bound(lo, sorted_.end(), v);
  return scaled_rank(static_cast<int>(lo - sorted_.begin()), static_cast<int>(hi - lo), w_);
}

}  // namespace alphaforge
