// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace alphaforge {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kParse,
  kUnit,
  kSemantic,
  kConfig,
  kNetwork,
  kRuntime,
};

const char* error_code_name(ErrorCode code);

/// Base exception for the library. Every failure surfaced across the C API
/// maps onto one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) noexcept { return std::isnan(v); }

/// Maps inf/nan onto the missing marker.
inline double finite_or_missing(double v) noexcept {
  return std::isfinite(v) ? v : kMissing;
}

/// Dense row-major matrix (rows = bars, cols = instruments).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = kMissing)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t t, std::size_t i) { return data[t * cols + i]; }
  double operator()(std::size_t t, std::size_t i) const { return data[t * cols + i]; }

  std::span<double> row(std::size_t t) { return {data.data() + t * cols, cols}; }
  std::span<const double> row(std::size_t t) const {
    return {data.data() + t * cols, cols};
  }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
};

/// Shortest decimal text that parses back to exactly `v`. Missing renders empty.
std::string format_double(double v);

/// Parses a full string as a double; throws kParse on trailing garbage.
double parse_double(std::string_view text);

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

}  // namespace alphaforge
