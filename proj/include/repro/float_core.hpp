#pragma once

// Bit-level floating-point primitives shared by every summation layer:
// ufp/ulp, the arithmetic policies the kernels are written against, and the
// error-free extraction step.

#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>

#include "repro/errors.hpp"

namespace repro {

/// Binary floating-point layout: `m` fractional mantissa bits and the normal
/// exponent range [e_min, e_max].
struct FloatFormat {
  int m = 52;
  int e_min = -1022;
  int e_max = 1023;

  constexpr bool valid() const noexcept { return m >= 2 && e_min < e_max; }
  friend constexpr bool operator==(const FloatFormat&, const FloatFormat&) = default;
};

inline constexpr FloatFormat kBinary16{10, -14, 15};
inline constexpr FloatFormat kBinary32{23, -126, 127};
inline constexpr FloatFormat kBinary64{52, -1022, 1023};

template <std::floating_point T>
inline constexpr FloatFormat format_of = sizeof(T) == 4 ? kBinary32 : kBinary64;

template <std::floating_point T>
using bits_t = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

template <std::floating_point T>
constexpr bits_t<T> to_bits(T x) noexcept {
  return std::bit_cast<bits_t<T>>(x);
}

template <std::floating_point T>
constexpr T from_bits(bits_t<T> b) noexcept {
  return std::bit_cast<T>(b);
}

/// Unit in the first place: 2^E for x = M*2^E with M in [1,2). ufp(+-0) is +0.
template <std::floating_point T>
T ufp(T x) {
  static_assert(std::numeric_limits<T>::is_iec559);
  if (!std::isfinite(x)) throw DomainError("ufp of a non-finite value");
  constexpr int m = format_of<T>.m;
  constexpr bits_t<T> exp_mask = ((bits_t<T>{1} << (sizeof(T) * 8 - 1)) - 1) & ~((bits_t<T>{1} << m) - 1);
  const bits_t<T> bits = to_bits(x);
  if (bits & exp_mask) return from_bits<T>(bits & exp_mask);
  // Zero or subnormal: the leading set mantissa bit is itself a subnormal power of two.
  return from_bits<T>(std::bit_floor(bits & ((bits_t<T>{1} << m) - 1)));
}

/// Unit in the last place of x in `fmt`: 2^(E-m), or 2^(e_min-m) below the
/// normal range. Values of toy formats travel as doubles.
template <std::floating_point T>
T ulp(T x, FloatFormat fmt = format_of<T>) {
  if (!std::isfinite(x) || x == 0) throw DomainError("ulp needs a finite nonzero value");
  int e = std::ilogb(x);
  if (e < fmt.e_min) e = fmt.e_min;
  return std::ldexp(T{1}, e - fmt.m);
}

// ---------------------------------------------------------------------------
// Arithmetic policies. The summation kernels are templates over one of these,
// so the same code runs on hardware float/double and on the small emulated
// formats used for worked examples.

template <std::floating_point T>
struct NativeArith {
  using value_type = T;
  static constexpr FloatFormat format = format_of<T>;

  static T add(T a, T b) noexcept { return a + b; }
  static T sub(T a, T b) noexcept { return a - b; }

  /// Forces the last mantissa bit to 1. The extraction adds the sticky copy
  /// of the remainder so a value never lands exactly halfway between two grid
  /// points of the extractor.
  static T sticky(T x) noexcept { return from_bits<T>(to_bits(x) | bits_t<T>{1}); }

  /// floor(log2|x|) for finite nonzero x, subnormals included.
  static int exponent(T x) noexcept { return std::ilogb(x); }

  /// Exponent of a normal number straight from its bits.
  static int normal_exponent(T x) noexcept {
    constexpr int bias = format.e_max;
    return static_cast<int>((to_bits(x) >> format.m) & ((bits_t<T>{1} << (sizeof(T) * 8 - 1 - format.m)) - 1)) - bias;
  }

  static T pow2(int e) noexcept {
    if (e >= format.e_min && e <= format.e_max)
      return from_bits<T>(static_cast<bits_t<T>>(e + format.e_max) << format.m);
    return std::ldexp(T{1}, e);
  }

  static constexpr T max_finite() noexcept { return std::numeric_limits<T>::max(); }
};

/// Software-emulated binary format with M fractional mantissa bits and
/// round-to-nearest-even, carried in doubles. Intended for small M; every sum
/// of two representable values must be exact in double, which holds while
/// (EMax - EMin + 2M) < 53.
template <int M, int EMin = -20, int EMax = 20>
struct ToyArith {
  static_assert(M >= 2 && EMin < EMax && EMax - EMin + 2 * M < 53);
  using value_type = double;
  static constexpr FloatFormat format{M, EMin, EMax};

  static double round(double x) noexcept {
    if (x == 0 || !std::isfinite(x)) return x;
    const double u = grid(x);
    const double y = std::nearbyint(x / u) * u;
    if (std::fabs(y) > max_finite()) return std::copysign(std::numeric_limits<double>::infinity(), x);
    return y;
  }

  static double add(double a, double b) noexcept { return round(a + b); }
  static double sub(double a, double b) noexcept { return round(a - b); }

  static double sticky(double x) noexcept {
    if (x == 0) return std::copysign(std::ldexp(1.0, EMin - M), x);
    const double u = grid(x);
    if (std::fmod(std::fabs(x) / u, 2.0) == 0.0) return x + std::copysign(u, x);
    return x;
  }

  static int exponent(double x) noexcept { return std::ilogb(x); }
  static int normal_exponent(double x) noexcept { return std::ilogb(x); }
  static double pow2(int e) noexcept { return std::ldexp(1.0, e); }
  static constexpr double max_finite() noexcept {
    double v = 2.0 - 1.0 / static_cast<double>(1ULL << M);
    for (int i = 0; i < EMax; ++i) v *= 2;
    return v;
  }

 private:
  static double grid(double x) noexcept {
    int e = std::ilogb(x);
    if (e < EMin) e = EMin;
    return std::ldexp(1.0, e - M);
  }
};

template <class A>
concept Arithmetic = requires(typename A::value_type x, int e) {
  { A::add(x, x) } -> std::same_as<typename A::value_type>;
  { A::sub(x, x) } -> std::same_as<typename A::value_type>;
  { A::sticky(x) } -> std::same_as<typename A::value_type>;
  { A::exponent(x) } -> std::same_as<int>;
  { A::pow2(e) } -> std::same_as<typename A::value_type>;
  { A::format } -> std::convertible_to<FloatFormat>;
};

template <class T>
struct Extraction {
  T q;  ///< contribution, a multiple of ulp(extractor)
  T r;  ///< remainder, b - q
};

/// Error-free transformation of b against an extractor:
/// q := (extractor + b) - extractor, r := b - q, each operation rounded in
/// the policy's format. Exactness of q + r = b is the caller's precondition
/// (|b| small enough relative to the extractor).
template <Arithmetic A>
Extraction<typename A::value_type> eft_extract(typename A::value_type extractor, typename A::value_type b) {
  if (!std::isfinite(extractor) || !std::isfinite(b)) throw DomainError("eft_extract of a non-finite value");
  const auto q = A::sub(A::add(extractor, b), extractor);
  return {q, A::sub(b, q)};
}

template <std::floating_point T>
Extraction<T> eft_extract(T extractor, T b) {
  return eft_extract<NativeArith<T>>(extractor, b);
}

}  // namespace repro
