// SPDX-License-Identifier: Apache-2.0
#pragma once

// Incremental window state shared by the batch column sweeps and the
// streaming evaluator. Both drive these accumulators with the same per-
// instrument push sequence, so their outputs agree bit-for-bit.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <vector>

#include "alphaforge/common.hpp"

namespace alphaforge {

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }
  void reset() noexcept { sum_ = comp_ = 0.0; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Fixed-capacity ring of the most recent values (missing included).
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity = 1) : buf_(std::max<std::size_t>(capacity, 1), kMissing) {}

  /// Appends and returns the value that fell out (missing while filling).
  double push(double v) noexcept {
    const double out = buf_[head_];
    buf_[head_] = v;
    head_ = (head_ + 1) % buf_.size();
    if (size_ < buf_.size()) {
      ++size_;
      return kMissing;
    }
    return out;
  }
  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return buf_.size(); }
  bool full() const noexcept { return size_ == buf_.size(); }
  /// k = 0 is the newest value.
  double back(std::size_t k) const noexcept {
    return buf_[(head_ + buf_.size() - 1 - k) % buf_.size()];
  }

 private:
  std::vector<double> buf_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

inline constexpr std::uint64_t kRecomputeInterval = 4096;

/// Rolling first/second moments over a trailing window, strict on missing.
/// Sums are kept shifted by a reference value and compensated; they are
/// rebuilt exactly from the window every kRecomputeInterval pushes.
class RollingMoments {
 public:
  explicit RollingMoments(int window = 1);

  void push(double v) noexcept;

  bool ready() const noexcept { return window_full() && missing_ == 0; }
  double mean() const noexcept;
  /// Sample standard deviation (n - 1); exactly 0 on a constant window.
  double stddev() const noexcept;
  bool constant() const noexcept { return run_ >= static_cast<std::uint64_t>(w_); }

 private:
  bool window_full() const noexcept { return buf_.full(); }
  void rebuild() noexcept;

  int w_;
  RingBuffer buf_;
  int missing_ = 0;
  double shift_ = kMissing;
  CompensatedSum s1_, s2_;
  std::uint64_t pushes_ = 0;
  std::uint64_t run_ = 0;  // length of the trailing run of equal values
  double last_ = kMissing;
};

/// Rolling Pearson correlation of two aligned series.
class RollingComoments {
 public:
  explicit RollingComoments(int window = 2);

  void push(double x, double y) noexcept;
  /// Missing when the window is short, holds any missing pair, or either
  /// side has zero variance.
  double corr() const noexcept;

 private:
  void rebuild() noexcept;

  int w_;
  RingBuffer xs_, ys_;
  int missing_ = 0;
  double kx_ = kMissing, ky_ = kMissing;
  CompensatedSum sx_, sy_, sxx_, syy_, sxy_;
  std::uint64_t pushes_ = 0;
  std::uint64_t run_x_ = 0, run_y_ = 0;
  double last_x_ = kMissing, last_y_ = kMissing;
};

/// Monotonic deque for trailing min (or max) with strict missing handling.
class MonotonicWindow {
 public:
  MonotonicWindow(int window, bool is_max) : w_(window), is_max_(is_max) {}

  void push(double v);
  double value() const noexcept;

 private:
  int w_;
  bool is_max_;
  std::int64_t t_ = -1;
  std::int64_t last_missing_ = -1;
  std::deque<std::pair<std::int64_t, double>> dq_;
};

/// Sorted copy of the trailing window for order statistics.
class SortedWindow {
 public:
  explicit SortedWindow(int window) : w_(window), ring_(static_cast<std::size_t>(window)) {}

  void push(double v);
  /// Average rank of the newest value scaled to [0, 1]; 0.5 for window 1.
  double rank_of_latest() const noexcept;

 private:
  int w_;
  RingBuffer ring_;
  int missing_ = 0;
  std::vector<double> sorted_;  // finite values only
};

/// Average-rank scaling used by ts_rank and cs_rank: (r - 1) / (n - 1).
inline double scaled_rank(int less, int equal, int n) noexcept {
  if (n <= 1) return 0.5;
  const double avg_rank = less + 0.5 * (equal + 1);  // 1-based average rank
  return (avg_rank - 1.0) / (n - 1.0);
}

}  // namespace alphaforge
