#pragma once

// Exact summation for tests and accuracy reports, and the analytic error
// bounds of conventional and reproducible summation.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

#include "repro/float_core.hpp"

namespace repro {

/// Fixed-point accumulator over the whole binary64 range (floats convert
/// exactly). Digits are radix-2^32 limbs kept in int64 so additions can run
/// for 2^30 steps before carries must be resolved. Limb i weighs 2^(32i-1074).
class ExactAccumulator {
 public:
  ExactAccumulator() noexcept { limbs_.fill(0); }

  void add(double x);
  void add(float x) { add(static_cast<double>(x)); }
  void add(std::span<const double> xs) {
    for (const double x : xs) add(x);
  }
  void add(std::span<const float> xs) {
    for (const float x : xs) add(x);
  }
  void merge(const ExactAccumulator& other);
  void negate();
  void clear() noexcept;

  /// Correctly rounded (nearest-even) value of the exact sum in `fmt`.
  /// Throws OverflowError when the sum is beyond the format's finite range.
  double round(FloatFormat fmt = kBinary64) const;
  double to_double() const { return round(kBinary64); }
  float to_float() const { return static_cast<float>(round(kBinary32)); }

  int sign() const;
  bool is_zero() const { return sign() == 0; }

  /// Exact equality of the represented values.
  friend bool operator==(const ExactAccumulator& a, const ExactAccumulator& b);

 private:
  static constexpr int kLimbs = 70;
  static constexpr int kBias = 1074;
  static constexpr std::uint32_t kNormalizeEvery = 1u << 30;

  void normalize() const;

  mutable std::array<std::int64_t, kLimbs> limbs_;
  mutable std::uint32_t pending_ = 0;
};

/// Correctly rounded sum of `values`.
template <std::floating_point T>
T exact_sum(std::span<const T> values) {
  ExactAccumulator acc;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw DomainError("non-finite summand", i);
    acc.add(values[i]);
  }
  return static_cast<T>(acc.round(format_of<T>));
}

/// |approx - exact| rounded to nearest double.
double abs_error(const ExactAccumulator& exact, double approx);

/// Unit roundoff 2^(-m-1) of round-to-nearest.
constexpr double unit_roundoff(FloatFormat fmt) noexcept {
  double e = 0.5;
  for (int i = 0; i < fmt.m; ++i) e *= 0.5;
  return e;
}

/// (n-1) * eps * sum|b|.
double conv_error_bound(std::uint64_t n, double sum_abs, FloatFormat fmt = kBinary64);

/// n * 2^((1-L)W-1) * max|b|.
double rsum_error_bound(std::uint64_t n, double max_abs, int levels, int width);

template <std::floating_point T>
double conv_error_bound(std::span<const T> values) {
  double s = 0;
  for (const T v : values) s += std::fabs(static_cast<double>(v));
  return conv_error_bound(values.size(), s, format_of<T>);
}

template <std::floating_point T>
double rsum_error_bound(std::span<const T> values, int levels, int width) {
  double mx = 0;
  for (const T v : values) mx = std::fmax(mx, std::fabs(static_cast<double>(v)));
  return rsum_error_bound(values.size(), mx, levels, width);
}

}  // namespace repro
