#pragma once

// Reproducible summation state machine.
//
// A state holds L running sums S[l] and carry counters C[l]. Level l uses the
// running sum as extractor: every input is split into a contribution that is a
// multiple of ulp(S[l]) and a remainder handed to level l+1. Contributions add
// without rounding, so the per-level totals (and therefore the state) depend
// only on the multiset of inputs, never on their order, chunking, lane count
// or merge tree.
//
// Invariants after every public operation:
//   * S[l] in [1.5 ufp(S[l]), 1.75 ufp(S[l]))
//   * exponent(S[l]) = exponent(S[0]) - l*W, and exponent(S[0]) = f (mod W)
//   * every C[l] is an integer with |C[l]| < 2^(m-1)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "repro/float_core.hpp"

namespace repro {

inline constexpr int kMaxLevels = 4;

/// Largest number of additions per lane between two carry propagations for
/// which a running sum cannot leave its binade: 2^(m-W-2).
constexpr int max_block_length(FloatFormat fmt, int width) noexcept {
  const int e = fmt.m - width - 2;
  if (e < 0) return 0;
  return e >= 30 ? (1 << 30) : (1 << e);
}

template <std::floating_point T>
inline constexpr int kDefaultWidth = sizeof(T) == 4 ? 18 : 40;

/// Lowest first-level exponent that keeps all kMaxLevels levels inside the
/// normal range. Shared by every run of a precision so that results agree.
template <std::floating_point T>
inline constexpr int kDefaultFirstExponent =
    format_of<T>.e_min + format_of<T>.m + (kMaxLevels - 1) * kDefaultWidth<T>;

template <std::floating_point T>
inline constexpr int kDefaultLanes = sizeof(T) == 4 ? 8 : 4;

template <std::floating_point T>
inline constexpr int kDefaultBlock = std::min(256, max_block_length(format_of<T>, kDefaultWidth<T>));

/// Lane count V and carry-propagation block length NB of the lane-parallel
/// kernel. Neither affects result bits.
struct LaneConfig {
  int lanes = 4;
  int block = 256;

  friend constexpr bool operator==(const LaneConfig&, const LaneConfig&) = default;
};

template <std::floating_point T>
constexpr LaneConfig default_lane_config() noexcept {
  return {kDefaultLanes<T>, kDefaultBlock<T>};
}

inline bool is_supported_lane_count(int v) noexcept {
  return v == 1 || v == 2 || v == 4 || v == 8 || v == 16;
}

void validate_lane_config(const LaneConfig& lanes, FloatFormat fmt, int width);

struct RSumParams {
  int levels = 2;          ///< L
  int width = 40;          ///< W, log2 of the ratio between consecutive extractors
  int first_exponent = 0;  ///< f, exponent of the initial first-level extractor
  FloatFormat format = kBinary64;
  int lanes = 4;    ///< V
  int block = 256;  ///< NB

  /// Throws ContractError naming the first violated constraint.
  void validate() const;

  LaneConfig lane_config() const noexcept { return {lanes, block}; }

  friend bool operator==(const RSumParams&, const RSumParams&) = default;
};

template <std::floating_point T>
RSumParams default_params(int levels = 2) {
  return {levels, kDefaultWidth<T>, kDefaultFirstExponent<T>, format_of<T>, kDefaultLanes<T>, kDefaultBlock<T>};
}

namespace detail {

template <std::floating_point T>
std::pair<std::size_t, bool> first_non_finite(std::span<const T> values) noexcept {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i])) return {i, true};
  return {0, false};
}

/// Bits of the largest |v| in [p, p+n). Magnitudes order like their
/// sign-cleared bit patterns, and an integer max vectorizes; NaN and Inf
/// come out at or above the bits of infinity.
template <std::floating_point T>
bits_t<T> max_abs_bits(const T* p, std::size_t n) noexcept {
  constexpr bits_t<T> magnitude = ~bits_t<T>{0} >> 1;
  bits_t<T> mx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bits_t<T> a = to_bits(p[i]) & magnitude;
    mx = a > mx ? a : mx;
  }
  return mx;
}

/// Largest magnitude in `values`; throws DomainError on the first NaN/Inf.
template <std::floating_point T>
T checked_max_abs(std::span<const T> values) {
  const bits_t<T> mx = max_abs_bits(values.data(), values.size());
  if (mx >= to_bits(std::numeric_limits<T>::infinity()))
    throw DomainError("non-finite summand", first_non_finite(values).first);
  return from_bits<T>(mx);
}

/// Fixed-L kernels. Lane arrays are laid out as S[l * stride + v].
template <Arithmetic A, int L>
struct Levels {
  static_assert(L >= 1 && L <= kMaxLevels);
  using T = typename A::value_type;
  static constexpr int m = A::format.m;

  static int top_exponent(const T* S) noexcept { return A::normal_exponent(S[0]); }

  static T level_ufp(int top, int l, int W) noexcept { return A::pow2(top - l * W); }

  /// Inputs with |b| at or above this value need a coarser first level.
  static T threshold(int top, int W) noexcept { return A::pow2(top - m + W - 1); }

  static void init(T* S, T* C, int first_exponent, int W) noexcept {
    for (int l = 0; l < L; ++l) {
      S[l] = T(1.5) * level_ufp(first_exponent, l, W);
      C[l] = 0;
    }
  }

  /// Smallest lattice exponent top + k*W whose threshold exceeds abs_max.
  static int raised_top(int top, T abs_max, int W) {
    if (!(abs_max >= threshold(top, W))) return top;
    const int need = A::exponent(abs_max) + m - W + 2;
    const long long k = (need - top + W - 1) / W;
    const long long raised = top + k * W;
    if (raised > A::format.e_max)
      throw OverflowError("summand magnitude requires a first level above the format's exponent range");
    return static_cast<int>(raised);
  }

  /// Demotes every level (new_top - top)/W times: levels slide down, the
  /// lowest ones are discarded, fresh levels enter at the top.
  static void demote(T* S, T* C, int stride, int lanes, int top, int new_top, int W) noexcept {
    const int k = (new_top - top) / W;
    if (k <= 0) return;
    for (int l = L - 1; l >= 0; --l) {
      if (l >= k) {
        for (int v = 0; v < lanes; ++v) {
          S[l * stride + v] = S[(l - k) * stride + v];
          C[l * stride + v] = C[(l - k) * stride + v];
        }
      } else {
        const T fresh = T(1.5) * level_ufp(new_top, l, W);
        for (int v = 0; v < lanes; ++v) {
          S[l * stride + v] = fresh;
          C[l * stride + v] = 0;
        }
      }
    }
  }

  /// Moves s back into [1.5u, 1.75u) in steps of u/4 and books the steps in c.
  /// Valid for s in [u, 2u]; returns the step count d.
  static T renormalize(T& s, T& c, T u) noexcept {
    const T quarter = u * T(0.25);
    const T dev = A::sub(s, T(1.5) * u);
    const T d = T(dev >= quarter) + T(dev >= quarter + quarter) - T(dev < 0) - T(dev < -quarter);
    s = A::sub(s, d * quarter);
    c = A::add(c, d);
    return d;
  }

  static T carry_limit() noexcept { return A::pow2(m - 1); }

  static void check_carries(const T* C, int count) {
    bool over = false;
    for (int i = 0; i < count; ++i) over |= !(std::fabs(C[i]) < carry_limit());
    if (over) throw OverflowError("carry counter left the exactly representable range");
  }

  /// One element through all levels, then carry propagation (scalar path).
  /// Precondition: b finite; the raised top (if any) is in range.
  static void add_one(T* S, T* C, T b, int W) {
    int top = top_exponent(S);
    const T mag = std::fabs(b);
    if (mag >= threshold(top, W)) {
      const int raised = raised_top(top, mag, W);
      demote(S, C, 1, 1, top, raised, W);
      top = raised;
    }
    T r = b;
    for (int l = 0; l < L; ++l) {
      const T s = S[l];
      const T t = A::add(s, A::sticky(r));
      const T q = A::sub(t, s);
      S[l] = t;
      r = A::sub(r, q);
    }
    for (int l = 0; l < L; ++l) renormalize(S[l], C[l], level_ufp(top, l, W));
    check_carries(C, L);
  }

  static void add_scalar(T* S, T* C, std::span<const T> values, int W) {
    if (values.empty()) return;
    const T mx = checked_max_abs(values);
    raised_top(top_exponent(S), mx, W);  // throws before any mutation
    for (const T b : values) add_one(S, C, b, W);
  }

  /// Lane-parallel summation: V independent lane states, one level check per
  /// block of V*NB inputs, one carry propagation per block, then a fold of
  /// the lanes back into S/C. The last partial block is padded with zeros.
  template <int V>
  static void add_lanes(T* S, T* C, std::span<const T> values, int W, int NB) {
    if (values.empty()) return;
    const T mx_all = checked_max_abs(values);
    raised_top(top_exponent(S), mx_all, W);

    alignas(64) T s[L][V];
    alignas(64) T c[L][V];
    int top = top_exponent(S);
    for (int l = 0; l < L; ++l) {
      const T fresh = T(1.5) * level_ufp(top, l, W);
      s[l][0] = S[l];
      c[l][0] = C[l];
      for (int v = 1; v < V; ++v) {
        s[l][v] = fresh;
        c[l][v] = 0;
      }
    }
    T thr = threshold(top, W);

    const std::size_t n = values.size();
    const std::size_t block = static_cast<std::size_t>(V) * static_cast<std::size_t>(NB);
    const T* data = values.data();
    for (std::size_t i = 0; i < n; i += block) {
      const std::size_t len = std::min(block, n - i);
      const T* b = data + i;
      const T mx = from_bits<T>(max_abs_bits(b, len));
      if (mx >= thr) {
        const int raised = raised_top(top, mx, W);
        demote(&s[0][0], &c[0][0], V, V, top, raised, W);
        top = raised;
        thr = threshold(top, W);
      }
      // Work on a copy whose address never escapes so it can stay in registers.
      alignas(64) T ls[L][V];
      std::copy(&s[0][0], &s[0][0] + L * V, &ls[0][0]);
      std::size_t j = 0;
      for (; j + V <= len; j += V) lane_step<V>(ls, b + j);
      if (j < len) {
        alignas(64) T pad[V] = {};
        std::copy(b + j, b + len, pad);
        lane_step<V>(ls, pad);
      }
      std::copy(&ls[0][0], &ls[0][0] + L * V, &s[0][0]);
      for (int l = 0; l < L; ++l) {
        const T u = level_ufp(top, l, W);
        for (int v = 0; v < V; ++v) renormalize(s[l][v], c[l][v], u);
      }
      check_carries(&c[0][0], L * V);
    }

    T out_s[L];
    T out_c[L];
    for (int l = 0; l < L; ++l) {
      const T u = level_ufp(top, l, W);
      out_s[l] = s[l][0];
      out_c[l] = c[l][0];
      for (int v = 1; v < V; ++v) {
        out_s[l] = A::add(out_s[l], A::sub(s[l][v], T(1.5) * u));
        out_c[l] = A::add(out_c[l], c[l][v]);
        renormalize(out_s[l], out_c[l], u);
      }
    }
    check_carries(out_c, L);
    std::copy(out_s, out_s + L, S);
    std::copy(out_c, out_c + L, C);
  }

  template <int V>
  static void lane_step(T (&s)[L][V], const T* b) noexcept {
    T r[V];
    for (int v = 0; v < V; ++v) r[v] = b[v];
    for (int l = 0; l < L; ++l) {
      for (int v = 0; v < V; ++v) {
        const T t = A::add(s[l][v], A::sticky(r[v]));
        const T q = A::sub(t, s[l][v]);
        s[l][v] = t;
        r[v] = A::sub(r[v], q);
      }
    }
  }

  /// Sum of the level values, folded from the finest level up to the coarsest.
  static T finalize(const T* S, const T* C, int W) noexcept {
    const int top = top_exponent(S);
    T q = 0;
    for (int l = L - 1; l >= 0; --l) {
      const T u = level_ufp(top, l, W);
      const T term = A::add(A::sub(S[l], T(1.5) * u), (u * T(0.25)) * C[l]);
      q = l == L - 1 ? term : A::add(q, term);
    }
    return q;
  }

  /// dst += src for two normalized states on the same exponent lattice.
  static void merge(T* dS, T* dC, const T* sS, const T* sC, int W) {
    T tS[L];
    T tC[L];
    std::copy(sS, sS + L, tS);
    std::copy(sC, sC + L, tC);
    const int dtop = top_exponent(dS);
    const int stop = top_exponent(tS);
    if ((dtop - stop) % W != 0) throw ContractError("merging states built on different exponent lattices");
    T outS[L];
    T outC[L];
    std::copy(dS, dS + L, outS);
    std::copy(dC, dC + L, outC);
    int top = dtop;
    if (stop > dtop) {
      demote(outS, outC, 1, 1, dtop, stop, W);
      top = stop;
    } else if (dtop > stop) {
      demote(tS, tC, 1, 1, stop, dtop, W);
    }
    for (int l = 0; l < L; ++l) {
      const T u = level_ufp(top, l, W);
      outS[l] = A::add(outS[l], A::sub(tS[l], T(1.5) * u));
      outC[l] = A::add(outC[l], tC[l]);
      renormalize(outS[l], outC[l], u);
    }
    check_carries(outC, L);
    std::copy(outS, outS + L, dS);
    std::copy(outC, outC + L, dC);
  }
};

template <class F>
decltype(auto) with_levels(int levels, F&& f) {
  switch (levels) {
    case 1: return f.template operator()<1>();
    case 2: return f.template operator()<2>();
    case 3: return f.template operator()<3>();
    case 4: return f.template operator()<4>();
  }
  throw ContractError("unsupported level count " + std::to_string(levels));
}

template <class F>
decltype(auto) with_lanes(int lanes, F&& f) {
  switch (lanes) {
    case 1: return f.template operator()<1>();
    case 2: return f.template operator()<2>();
    case 4: return f.template operator()<4>();
    case 8: return f.template operator()<8>();
    case 16: return f.template operator()<16>();
  }
  throw ContractError("unsupported lane count " + std::to_string(lanes));
}

}  // namespace detail

/// Carry-propagation step for a single level with unit-in-first-place u:
/// finds d with sum - d*u/4 in [1.5u, 1.75u), applies it, adds d to carry.
template <Arithmetic A = NativeArith<double>>
int propagate_carry(typename A::value_type& sum, typename A::value_type& carry, typename A::value_type u) {
  return static_cast<int>(detail::Levels<A, 1>::renormalize(sum, carry, u));
}

/// Folds V lane states into one, level by level. `lane_sums` and
/// `lane_carries` are [level][lane] arrays of levels*lanes elements; every
/// lane of a level must share one exponent. The exact lane total of each
/// level is returned carry-normalized: S in [1.5u, 1.75u) with the
/// overflow booked in C.
template <Arithmetic A>
void horizontal_reduce(std::span<const typename A::value_type> lane_sums,
                       std::span<const typename A::value_type> lane_carries, int lanes,
                       std::span<typename A::value_type> sums_out, std::span<typename A::value_type> carries_out) {
  using T = typename A::value_type;
  const std::size_t levels = sums_out.size();
  if (lanes < 1 || lane_sums.size() != levels * lanes || lane_carries.size() != lane_sums.size() ||
      carries_out.size() != levels)
    throw ContractError("horizontal_reduce: inconsistent lane/level extents");
  using K = detail::Levels<A, 1>;
  for (std::size_t l = 0; l < levels; ++l) {
    const T* s = lane_sums.data() + l * lanes;
    const T* c = lane_carries.data() + l * lanes;
    const T u = A::pow2(A::exponent(s[0]));
    T acc_s = s[0];
    T acc_c = c[0];
    K::renormalize(acc_s, acc_c, u);
    for (int v = 1; v < lanes; ++v) {
      if (A::exponent(s[v]) != A::exponent(s[0])) throw ContractError("horizontal_reduce: lanes differ in exponent");
      T lane_s = s[v];
      T lane_c = c[v];
      K::renormalize(lane_s, lane_c, u);
      acc_s = A::add(acc_s, A::sub(lane_s, T(1.5) * u));
      acc_c = A::add(acc_c, lane_c);
      K::renormalize(acc_s, acc_c, u);
    }
    sums_out[l] = acc_s;
    carries_out[l] = acc_c;
  }
}

/// Runtime-configured summation state (L, W, f, V, NB chosen at run time).
template <Arithmetic A>
class RSumState {
 public:
  using value_type = typename A::value_type;
  using T = value_type;

  explicit RSumState(const RSumParams& params) : params_(params) {
    params_.validate();
    if (params_.format != A::format) throw ContractError("RSumParams format does not match the arithmetic policy");
    with_levels([&]<int L>() { detail::Levels<A, L>::init(sums_.data(), carries_.data(), params_.first_exponent, params_.width); });
  }

  static RSumState init(const RSumParams& params) { return RSumState(params); }

  /// Rebuilds a state from stored levels; throws ContractError if the
  /// sums/carries break a state invariant.
  static RSumState from_levels(const RSumParams& params, std::span<const T> sums, std::span<const T> carries) {
    RSumState st(params);
    if (sums.size() != static_cast<std::size_t>(params.levels) || carries.size() != sums.size())
      throw ContractError("level count mismatch");
    std::copy(sums.begin(), sums.end(), st.sums_.begin());
    std::copy(carries.begin(), carries.end(), st.carries_.begin());
    st.check_invariants();
    return st;
  }

  /// Raises the first level until |b| < 2^(W-1) ulp(S[0]).
  void level_shift(T b) {
    if (!std::isfinite(b)) throw DomainError("level_shift of a non-finite value");
    with_levels([&]<int L>() {
      using K = detail::Levels<A, L>;
      const int top = K::top_exponent(sums_.data());
      const int raised = K::raised_top(top, std::fabs(b), params_.width);
      K::demote(sums_.data(), carries_.data(), 1, 1, top, raised, params_.width);
    });
  }

  void carry_propagate() {
    with_levels([&]<int L>() {
      using K = detail::Levels<A, L>;
      const int top = K::top_exponent(sums_.data());
      for (int l = 0; l < L; ++l) K::renormalize(sums_[l], carries_[l], K::level_ufp(top, l, params_.width));
    });
  }

  void add_scalar(std::span<const T> values) {
    with_levels([&]<int L>() { detail::Levels<A, L>::add_scalar(sums_.data(), carries_.data(), values, params_.width); });
  }

  void add_lanes(std::span<const T> values) {
    with_levels([&]<int L>() {
      detail::with_lanes(params_.lanes, [&]<int V>() {
        detail::Levels<A, L>::template add_lanes<V>(sums_.data(), carries_.data(), values, params_.width, params_.block);
      });
    });
  }

  T finalize() const {
    return with_levels([&]<int L>() { return detail::Levels<A, L>::finalize(sums_.data(), carries_.data(), params_.width); });
  }

  void merge(const RSumState& src) {
    if (!same_lattice(src)) throw ContractError("merging states with different parameters");
    with_levels([&]<int L>() {
      detail::Levels<A, L>::merge(sums_.data(), carries_.data(), src.sums_.data(), src.carries_.data(), params_.width);
    });
  }

  const RSumParams& params() const noexcept { return params_; }
  std::span<const T> sums() const noexcept { return {sums_.data(), static_cast<std::size_t>(params_.levels)}; }
  std::span<const T> carries() const noexcept { return {carries_.data(), static_cast<std::size_t>(params_.levels)}; }
  int top_exponent() const noexcept { return A::normal_exponent(sums_[0]); }

  /// Bitwise equality of the stored levels.
  bool same_bits(const RSumState& o) const noexcept {
    if (params_.levels != o.params_.levels) return false;
    for (int l = 0; l < params_.levels; ++l) {
      if (std::bit_cast<bits_t<T>>(sums_[l]) != std::bit_cast<bits_t<T>>(o.sums_[l])) return false;
      if (std::bit_cast<bits_t<T>>(carries_[l]) != std::bit_cast<bits_t<T>>(o.carries_[l])) return false;
    }
    return true;
  }

  /// Lane count and block length never affect bits; everything else must match.
  bool same_lattice(const RSumState& o) const noexcept {
    return params_.levels == o.params_.levels && params_.width == o.params_.width &&
           params_.first_exponent == o.params_.first_exponent && params_.format == o.params_.format;
  }

  void check_invariants() const {
    const int W = params_.width;
    const int top = A::exponent(sums_[0]);
    if (((top - params_.first_exponent) % W + W) % W != 0) throw ContractError("first level off the exponent lattice");
    for (int l = 0; l < params_.levels; ++l) {
      const T u = A::pow2(top - l * W);
      if (!(sums_[l] >= T(1.5) * u && sums_[l] < T(1.75) * u)) throw ContractError("running sum outside [1.5, 1.75) ufp");
      if (carries_[l] != std::trunc(carries_[l]) || !(std::fabs(carries_[l]) < A::pow2(A::format.m - 1)))
        throw ContractError("carry counter is not an exact integer");
    }
  }

 private:
  template <class F>
  decltype(auto) with_levels(F&& f) const {
    return detail::with_levels(params_.levels, std::forward<F>(f));
  }

  std::array<T, kMaxLevels> sums_{};
  std::array<T, kMaxLevels> carries_{};
  RSumParams params_;
};

using RSumState32 = RSumState<NativeArith<float>>;
using RSumState64 = RSumState<NativeArith<double>>;

/// Convenience: one-shot reproducible sum of `values` with `params`.
template <std::floating_point T>
T reproducible_sum(std::span<const T> values, const RSumParams& params = default_params<T>()) {
  RSumState<NativeArith<T>> st(params);
  st.add_lanes(values);
  return st.finalize();
}

}  // namespace repro
