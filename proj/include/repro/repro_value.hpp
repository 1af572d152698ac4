#pragma once

// Fixed-configuration reproducible accumulator: a value type with
// += scalar, += other accumulator, and read-out. L, W and f are template
// parameters so every instance of one type shares the exponent lattice and
// instances can be merged without a runtime parameter check.

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <span>

#include "repro/rsum.hpp"

namespace repro {

template <Arithmetic A, int L, int W, int F>
class BasicReproValue {
  using K = detail::Levels<A, L>;

 public:
  using value_type = typename A::value_type;
  using T = value_type;
  using arithmetic = A;
  static constexpr int kLevels = L;
  static constexpr int kWidth = W;
  static constexpr int kFirstExponent = F;
  static constexpr std::size_t kSerializedSize = 2 * L * sizeof(T);

  BasicReproValue() noexcept { K::init(sums_.data(), carries_.data(), F, W); }

  static RSumParams params(LaneConfig lanes = {1, 1}) noexcept {
    return {L, W, F, A::format, lanes.lanes, lanes.block};
  }

  BasicReproValue& operator+=(T x) {
    if (!std::isfinite(x)) throw DomainError("non-finite summand");
    K::add_one(sums_.data(), carries_.data(), x, W);
    return *this;
  }

  BasicReproValue& operator+=(const BasicReproValue& other) {
    K::merge(sums_.data(), carries_.data(), other.sums_.data(), other.carries_.data(), W);
    return *this;
  }

  /// Per-element path over a whole sequence.
  void add_scalar(std::span<const T> values) { K::add_scalar(sums_.data(), carries_.data(), values, W); }

  /// Lane-parallel path; the lane configuration never changes the bits.
  void add(std::span<const T> values, LaneConfig lanes) {
    validate_lane_config(lanes, A::format, W);
    add_unchecked(values, lanes);
  }

  void add(std::span<const T> values) { add_unchecked(values, default_lanes()); }

  T value() const noexcept { return K::finalize(sums_.data(), carries_.data(), W); }

  std::span<const T, L> sums() const noexcept { return std::span<const T, L>(sums_); }
  std::span<const T, L> carries() const noexcept { return std::span<const T, L>(carries_); }

  bool bitwise_equal(const BasicReproValue& o) const noexcept {
    return std::memcmp(sums_.data(), o.sums_.data(), sizeof(sums_)) == 0 &&
           std::memcmp(carries_.data(), o.carries_.data(), sizeof(carries_)) == 0;
  }

  /// Little-endian S[0..L) followed by C[0..L).
  std::array<std::byte, kSerializedSize> serialize() const noexcept {
    std::array<std::byte, kSerializedSize> out{};
    std::byte* p = out.data();
    for (const T v : sums_) p = put(p, v);
    for (const T v : carries_) p = put(p, v);
    return out;
  }

  static BasicReproValue deserialize(std::span<const std::byte> bytes) {
    if (bytes.size() != kSerializedSize) throw ContractError("serialized accumulator has the wrong size");
    std::array<T, L> s{};
    std::array<T, L> c{};
    const std::byte* p = bytes.data();
    for (T& v : s) p = get(p, v);
    for (T& v : c) p = get(p, v);
    // Reuse the runtime state's invariant check.
    RSumState<A>::from_levels(params(), s, c);
    BasicReproValue out;
    out.sums_ = s;
    out.carries_ = c;
    return out;
  }

 private:
  static LaneConfig default_lanes() noexcept {
    if constexpr (std::is_same_v<A, NativeArith<T>>)
      return default_lane_config<T>();
    else
      return {1, 1};
  }

  void add_unchecked(std::span<const T> values, LaneConfig lanes) {
    detail::with_lanes(lanes.lanes, [&]<int V>() {
      K::template add_lanes<V>(sums_.data(), carries_.data(), values, W, lanes.block);
    });
  }

  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

  static std::byte* put(std::byte* p, T v) noexcept {
    Bits b = std::bit_cast<Bits>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i, b >>= 8) *p++ = static_cast<std::byte>(b & 0xff);
    return p;
  }

  static const std::byte* get(const std::byte* p, T& v) noexcept {
    Bits b = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) b |= static_cast<Bits>(std::to_integer<unsigned>(p[i])) << (8 * i);
    v = std::bit_cast<T>(b);
    return p + sizeof(T);
  }

  std::array<T, L> sums_;
  std::array<T, L> carries_;
};

template <std::floating_point T, int L = 2>
using ReproValue = BasicReproValue<NativeArith<T>, L, kDefaultWidth<T>, kDefaultFirstExponent<T>>;

}  // namespace repro
