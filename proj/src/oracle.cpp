#include "repro/oracle.hpp"

#include <bit>

namespace repro {

void ExactAccumulator::add(double x) {
  if (!std::isfinite(x)) throw DomainError("non-finite summand");
  if (x == 0) return;
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  const int biased = static_cast<int>((bits >> 52) & 0x7ff);
  std::uint64_t mant = bits & ((std::uint64_t{1} << 52) - 1);
  int pos = 0;  // weight of the mantissa's lowest bit is 2^(pos - 1074)
  if (biased != 0) {
    mant |= std::uint64_t{1} << 52;
    pos = biased - 1;
  }
  const int idx = pos / 32;
  const unsigned __int128 v = static_cast<unsigned __int128>(mant) << (pos % 32);
  const std::int64_t parts[3] = {static_cast<std::int64_t>(v & 0xffffffffu),
                                 static_cast<std::int64_t>((v >> 32) & 0xffffffffu),
                                 static_cast<std::int64_t>(v >> 64)};
  if (bits >> 63) {
    for (int i = 0; i < 3; ++i) limbs_[idx + i] -= parts[i];
  } else {
    for (int i = 0; i < 3; ++i) limbs_[idx + i] += parts[i];
  }
  if (++pending_ >= kNormalizeEvery) normalize();
}

void ExactAccumulator::normalize() const {
  for (int i = 0; i + 1 < kLimbs; ++i) {
    const std::int64_t carry = limbs_[i] >> 32;  // floor division
    limbs_[i] -= carry * (std::int64_t{1} << 32);
    limbs_[i + 1] += carry;
  }
  pending_ = 0;
}

void ExactAccumulator::merge(const ExactAccumulator& other) {
  normalize();
  other.normalize();
  for (int i = 0; i < kLimbs; ++i) limbs_[i] += other.limbs_[i];
  pending_ = 2;
}

void ExactAccumulator::negate() {
  for (auto& l : limbs_) l = -l;
}

void ExactAccumulator::clear() noexcept {
  limbs_.fill(0);
  pending_ = 0;
}

int ExactAccumulator::sign() const {
  normalize();
  if (limbs_[kLimbs - 1] != 0) return limbs_[kLimbs - 1] < 0 ? -1 : 1;
  for (int i = kLimbs - 2; i >= 0; --i)
    if (limbs_[i] != 0) return 1;
  return 0;
}

bool operator==(const ExactAccumulator& a, const ExactAccumulator& b) {
  a.normalize();
  b.normalize();
  return a.limbs_ == b.limbs_;
}

double ExactAccumulator::round(FloatFormat fmt) const {
  const int s = sign();
  if (s == 0) return 0.0;
  std::array<std::int64_t, kLimbs> mag = limbs_;
  if (s < 0) {
    for (auto& l : mag) l = -l;
    for (int i = 0; i + 1 < kLimbs; ++i) {
      const std::int64_t carry = mag[i] >> 32;
      mag[i] -= carry * (std::int64_t{1} << 32);
      mag[i + 1] += carry;
    }
  }
  int top = kLimbs - 1;
  while (mag[top] == 0) --top;
  const int lead = top * 32 + std::bit_width(static_cast<std::uint64_t>(mag[top])) - 1;
  auto bit = [&](int k) -> bool { return (mag[k / 32] >> (k % 32)) & 1; };
  auto any_below = [&](int k) -> bool {
    if (k <= 0) return false;
    for (int i = 0; i < k / 32; ++i)
      if (mag[i] != 0) return true;
    return (mag[k / 32] & ((std::int64_t{1} << (k % 32)) - 1)) != 0;
  };

  const int e = lead - kBias;
  const int grid = std::max(e - fmt.m, fmt.e_min - fmt.m);
  const int gi = std::max(grid + kBias, 0);
  std::uint64_t q = 0;
  for (int k = lead; k >= gi; --k) q = (q << 1) | static_cast<std::uint64_t>(bit(k));
  const bool guard = gi > 0 && bit(gi - 1);
  const bool sticky = any_below(gi - 1);
  if (guard && (sticky || (q & 1))) ++q;

  const double mag_value = std::ldexp(static_cast<double>(q), gi - kBias);
  const double max_finite = std::ldexp(2.0 - std::ldexp(1.0, -fmt.m), fmt.e_max);
  if (!std::isfinite(mag_value) || mag_value > max_finite) throw OverflowError("exact sum outside the finite range");
  return s < 0 ? -mag_value : mag_value;
}

double abs_error(const ExactAccumulator& exact, double approx) {
  ExactAccumulator d = exact;
  d.add(-approx);
  return std::fabs(d.to_double());
}

double conv_error_bound(std::uint64_t n, double sum_abs, FloatFormat fmt) {
  if (n <= 1) return 0.0;
  return static_cast<double>(n - 1) * unit_roundoff(fmt) * sum_abs;
}

double rsum_error_bound(std::uint64_t n, double max_abs, int levels, int width) {
  return static_cast<double>(n) * std::ldexp(max_abs, (1 - levels) * width - 1);
}

}  // namespace repro
