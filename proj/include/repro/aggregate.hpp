#pragma once

// GroupBy SUM: open-addressing hash aggregation, stable parallel radix
// partitioning and the partition-then-aggregate driver.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "repro/repro_value.hpp"
#include "repro/sum_buffer.hpp"

namespace repro {

enum class AccumulatorKind { plain, decimal, repro, buffered };
enum class HashKind { identity, multiplicative };

const char* to_string(AccumulatorKind k) noexcept;
const char* to_string(HashKind h) noexcept;
AccumulatorKind parse_accumulator_kind(const std::string& s);
HashKind parse_hash_kind(const std::string& s);

inline bool is_reproducible(AccumulatorKind k) noexcept {
  return k == AccumulatorKind::repro || k == AccumulatorKind::buffered;
}

template <class T>
struct Record {
  std::uint32_t key;
  T value;
};

inline std::uint32_t hash_key(std::uint32_t key, HashKind h) noexcept {
  return h == HashKind::identity ? key : key * 0x9E3779B1u;
}

// ---------------------------------------------------------------------------
// Accumulator stores. A store defines the per-group slot of a private table
// (Slot), the value merged into the shared result (Shared), and how one
// becomes the other.

template <std::floating_point T>
struct PlainStore {
  using value_type = T;
  using Slot = T;
  using Shared = T;

  void init(Slot& s) noexcept { s = 0; }
  void add(Slot& s, T v) noexcept { s += v; }
  Shared finish(Slot& s) noexcept { return s; }
  void reset() noexcept {}
  static void init_shared(Shared& s) noexcept { s = 0; }
  static void combine(Shared& dst, const Shared& src) noexcept { dst += src; }
  static T read(const Shared& s) noexcept { return s; }
};

/// Fixed-point baseline: six decimal digits, 64-bit two's complement,
/// additions wrap on overflow.
template <std::floating_point T>
struct DecimalStore {
  using value_type = T;
  using Slot = std::int64_t;
  using Shared = std::int64_t;
  static constexpr double kScale = 1e6;

  static std::int64_t to_fixed(T v) noexcept {
    const double s = std::nearbyint(static_cast<double>(v) * kScale);
    if (s >= 0x1p63) return INT64_MAX;
    if (s < -0x1p63) return INT64_MIN;
    return static_cast<std::int64_t>(s);
  }
  static std::int64_t wrap_add(std::int64_t a, std::int64_t b) noexcept {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
  }

  void init(Slot& s) noexcept { s = 0; }
  void add(Slot& s, T v) noexcept { s = wrap_add(s, to_fixed(v)); }
  Shared finish(Slot& s) noexcept { return s; }
  void reset() noexcept {}
  static void init_shared(Shared& s) noexcept { s = 0; }
  static void combine(Shared& dst, const Shared& src) noexcept { dst = wrap_add(dst, src); }
  static T read(const Shared& s) noexcept { return static_cast<T>(static_cast<double>(s) / kScale); }
};

template <std::floating_point T, int L>
struct ReproStore {
  using value_type = T;
  using Slot = ReproValue<T, L>;
  using Shared = ReproValue<T, L>;

  void init(Slot& s) noexcept { s = Slot{}; }
  void add(Slot& s, T v) { s += v; }
  Shared finish(Slot& s) noexcept { return s; }
  void reset() noexcept {}
  static void init_shared(Shared& s) noexcept { s = Shared{}; }
  static void combine(Shared& dst, const Shared& src) { dst += src; }
  static T read(const Shared& s) noexcept { return s.value(); }
};

/// Reproducible slot plus a bsz-element staging buffer. Buffers are carved
/// from pages owned by the store, so growing the table never moves them.
template <std::floating_point T, int L>
class BufferedStore {
 public:
  using value_type = T;
  struct Slot {
    ReproValue<T, L> rv;
    T* buf = nullptr;
    std::uint32_t next = 0;
  };
  using Shared = ReproValue<T, L>;

  BufferedStore(std::size_t bsz, LaneConfig lanes) : bsz_(bsz), lanes_(lanes) {
    if (bsz_ == 0) throw ContractError("buffer size must be at least 1");
    validate_lane_config(lanes_, format_of<T>, kDefaultWidth<T>);
    per_page_ = std::max<std::size_t>(1, (std::size_t{1} << 16) / bsz_);
  }

  // Copies share configuration, never buffers.
  BufferedStore(const BufferedStore& o) : BufferedStore(o.bsz_, o.lanes_) {}
  BufferedStore& operator=(const BufferedStore&) = delete;
  BufferedStore(BufferedStore&&) noexcept = default;

  void init(Slot& s) {
    s.rv = ReproValue<T, L>{};
    s.next = 0;
    s.buf = allocate();
  }

  void add(Slot& s, T v) {
    s.buf[s.next++] = v;
    if (s.next == bsz_) {
      s.rv.add(std::span<const T>(s.buf, bsz_), lanes_);
      s.next = 0;
    }
  }

  Shared finish(Slot& s) {
    if (s.next != 0) {
      s.rv.add(std::span<const T>(s.buf, s.next), lanes_);
      s.next = 0;
    }
    return s.rv;
  }

  /// Releases every buffer for reuse; slots handed out before are invalid.
  void reset() noexcept { used_ = 0; }

  static void init_shared(Shared& s) noexcept { s = Shared{}; }
  static void combine(Shared& dst, const Shared& src) { dst += src; }
  static T read(const Shared& s) noexcept { return s.value(); }

  std::size_t buffer_size() const noexcept { return bsz_; }
  std::size_t allocated_bytes() const noexcept { return pages_.size() * per_page_ * bsz_ * sizeof(T); }

 private:
  T* allocate() {
    const std::size_t page = used_ / per_page_;
    const std::size_t within = used_ % per_page_;
    if (page == pages_.size()) pages_.push_back(std::make_unique<T[]>(per_page_ * bsz_));
    ++used_;
    return pages_[page].get() + within * bsz_;
  }

  std::size_t bsz_;
  LaneConfig lanes_;
  std::size_t per_page_ = 1;
  std::size_t used_ = 0;
  std::vector<std::unique_ptr<T[]>> pages_;
};

// ---------------------------------------------------------------------------

/// Open addressing with linear probing. The slot index is taken from the
/// key's hash shifted right by `shift` bits, so tables fed by a radix
/// partition do not reuse the bits the partition already fixed.
template <class Store>
class AggregationTable {
 public:
  using value_type = typename Store::value_type;
  using Slot = typename Store::Slot;

  explicit AggregationTable(Store store, std::size_t expected_groups = 0, HashKind hash = HashKind::identity,
                            int shift = 0)
      : store_(std::move(store)), hash_(hash), shift_(shift) {
    if (shift < 0 || shift >= 32) throw ContractError("hash shift must lie in [0, 32)");
    const std::size_t want = expected_groups ? 2 * expected_groups : 1024;
    allocate(std::bit_ceil(std::max<std::size_t>(want, 16)));
  }

  Slot& find_or_insert(std::uint32_t key) {
    std::size_t i = position(key);
    while (used_[i]) {
      if (keys_[i] == key) return slots_[i];
      i = (i + 1) & mask_;
    }
    if (2 * (size_ + 1) > capacity()) {
      grow();
      return find_or_insert(key);
    }
    used_[i] = 1;
    keys_[i] = key;
    store_.init(slots_[i]);
    ++size_;
    return slots_[i];
  }

  void add(std::uint32_t key, value_type v) { store_.add(find_or_insert(key), v); }

  template <class F>
  void for_each(F&& f) {
    for (std::size_t i = 0; i < keys_.size(); ++i)
      if (used_[i]) f(keys_[i], slots_[i]);
  }

  /// Empties the table; capacity and store pages are kept for reuse.
  void clear() {
    if (size_ != 0) std::fill(used_.begin(), used_.end(), std::uint8_t{0});
    size_ = 0;
    store_.reset();
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return keys_.size(); }
  Store& store() noexcept { return store_; }

 private:
  std::size_t position(std::uint32_t key) const noexcept { return (hash_key(key, hash_) >> shift_) & mask_; }

  void allocate(std::size_t cap) {
    keys_.assign(cap, 0);
    used_.assign(cap, 0);
    slots_.assign(cap, Slot{});
    mask_ = cap - 1;
  }

  void grow() {
    std::vector<std::uint32_t> old_keys = std::move(keys_);
    std::vector<std::uint8_t> old_used = std::move(used_);
    std::vector<Slot> old_slots = std::move(slots_);
    allocate(old_keys.size() * 2);
    for (std::size_t j = 0; j < old_keys.size(); ++j) {
      if (!old_used[j]) continue;
      std::size_t i = position(old_keys[j]);
      while (used_[i]) i = (i + 1) & mask_;
      used_[i] = 1;
      keys_[i] = old_keys[j];
      slots_[i] = std::move(old_slots[j]);
    }
  }

  Store store_;
  HashKind hash_;
  int shift_;
  std::vector<std::uint32_t> keys_;
  std::vector<std::uint8_t> used_;
  std::vector<Slot> slots_;
  std::size_t size_ = 0;
  std::size_t mask_ = 0;
};

namespace detail {

template <std::floating_point T>
void check_finite_values(std::span<const T> values) {
  if (max_abs_bits(values.data(), values.size()) < to_bits(std::numeric_limits<T>::infinity())) return;
  throw DomainError("non-finite aggregate input", first_non_finite(values).first);
}

}  // namespace detail

template <class Store>
void hash_aggregate(std::type_identity_t<std::span<const Record<typename Store::value_type>>> records,
                    AggregationTable<Store>& table) {
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!std::isfinite(records[i].value)) throw DomainError("non-finite aggregate input", i);
  for (const auto& r : records) table.add(r.key, r.value);
}

template <class Store>
void hash_aggregate(std::span<const std::uint32_t> keys,
                    std::type_identity_t<std::span<const typename Store::value_type>> values,
                    AggregationTable<Store>& table) {
  if (keys.size() != values.size()) throw ContractError("key and value columns differ in length");
  detail::check_finite_values(values);
  for (std::size_t i = 0; i < keys.size(); ++i) table.add(keys[i], values[i]);
}

// ---------------------------------------------------------------------------
// Threads

/// Runs fn(0..P-1) on P threads (the caller's thread is thread 0) and
/// rethrows the exception of the lowest-numbered failing thread.
template <class F>
void run_threads(int threads, F&& fn) {
  if (threads <= 1) {
    fn(0);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (int t = 1; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        fn(t);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  try {
    fn(0);
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// [begin, end) of thread t's static chunk of n items.
inline std::pair<std::size_t, std::size_t> static_chunk(std::size_t n, int threads, int t) noexcept {
  const std::size_t P = static_cast<std::size_t>(threads);
  return {n * t / P, n * (t + 1) / P};
}

// ---------------------------------------------------------------------------
// Partitioning

template <class T>
struct Partitions {
  std::vector<Record<T>> records;
  std::vector<std::size_t> offsets;  ///< count()+1 entries

  std::size_t count() const noexcept { return offsets.size() - 1; }
  std::span<const Record<T>> partition(std::size_t i) const noexcept {
    return {records.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
};

inline int fan_out_bits(int fan_out_base) {
  if (fan_out_base < 2 || fan_out_base > 256 || !std::has_single_bit(static_cast<unsigned>(fan_out_base)))
    throw ContractError("fan-out base must be a power of two in [2, 256]");
  return std::countr_zero(static_cast<unsigned>(fan_out_base));
}

/// Stable radix partitioning into F = base^depth partitions. Digit j of a
/// key is bits [j*b, (j+1)*b) of its hash; the partition index reads the
/// digits most significant first in pass order. The first pass splits the
/// input into static per-thread chunks and concatenates each partition's
/// runs in thread order; later passes refine one partition per task, tasks
/// dealt round-robin. depth 0 forwards the input as one partition.
template <class T>
Partitions<T> parallel_partition(std::span<const std::uint32_t> keys, std::span<const T> values, int depth,
                                 int threads, HashKind hash = HashKind::identity, int fan_out_base = 256) {
  if (keys.size() != values.size()) throw ContractError("key and value columns differ in length");
  if (threads < 1) throw ContractError("thread count must be positive");
  const int bits = fan_out_bits(fan_out_base);
  if (depth < 0 || bits * depth > 24) throw ContractError("partitioning depth out of range");
  const std::size_t n = keys.size();
  const std::size_t fan = std::size_t{1} << bits;
  const std::uint32_t digit_mask = static_cast<std::uint32_t>(fan - 1);

  Partitions<T> out;
  out.records.resize(n);
  if (depth == 0) {
    run_threads(threads, [&](int t) {
      const auto [b, e] = static_chunk(n, threads, t);
      for (std::size_t i = b; i < e; ++i) out.records[i] = {keys[i], values[i]};
    });
    out.offsets = {0, n};
    return out;
  }

  // Pass 1: per-thread histograms, then a (digit, thread)-ordered prefix sum.
  std::vector<std::size_t> hist(static_cast<std::size_t>(threads) * fan, 0);
  run_threads(threads, [&](int t) {
    const auto [b, e] = static_chunk(n, threads, t);
    std::size_t* h = hist.data() + static_cast<std::size_t>(t) * fan;
    for (std::size_t i = b; i < e; ++i) ++h[hash_key(keys[i], hash) & digit_mask];
  });
  out.offsets.assign(fan + 1, 0);
  {
    std::size_t run = 0;
    for (std::size_t d = 0; d < fan; ++d) {
      out.offsets[d] = run;
      for (int t = 0; t < threads; ++t) {
        std::size_t& c = hist[static_cast<std::size_t>(t) * fan + d];
        const std::size_t cnt = c;
        c = run;
        run += cnt;
      }
    }
    out.offsets[fan] = run;
  }
  run_threads(threads, [&](int t) {
    const auto [b, e] = static_chunk(n, threads, t);
    std::size_t* cur = hist.data() + static_cast<std::size_t>(t) * fan;
    for (std::size_t i = b; i < e; ++i) out.records[cur[hash_key(keys[i], hash) & digit_mask]++] = {keys[i], values[i]};
  });

  std::vector<Record<T>> scratch;
  for (int pass = 1; pass < depth; ++pass) {
    scratch.resize(n);
    const std::size_t parts = out.count();
    std::vector<std::size_t> next(parts * fan + 1, 0);
    const int shift = bits * pass;
    run_threads(threads, [&](int t) {
      std::vector<std::size_t> h(fan);
      for (std::size_t p = static_cast<std::size_t>(t); p < parts; p += threads) {
        const std::size_t b = out.offsets[p];
        const std::size_t e = out.offsets[p + 1];
        std::fill(h.begin(), h.end(), 0);
        for (std::size_t i = b; i < e; ++i) ++h[(hash_key(out.records[i].key, hash) >> shift) & digit_mask];
        std::size_t run = b;
        for (std::size_t d = 0; d < fan; ++d) {
          next[p * fan + d] = run;
          const std::size_t cnt = h[d];
          h[d] = run;
          run += cnt;
        }
        for (std::size_t i = b; i < e; ++i) {
          const auto& r = out.records[i];
          scratch[h[(hash_key(r.key, hash) >> shift) & digit_mask]++] = r;
        }
      }
    });
    next[parts * fan] = n;
    out.records.swap(scratch);
    out.offsets = std::move(next);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct AggConfig {
  int fan_out_base = 256;
  int depth = 0;
  int threads = 1;
  AccumulatorKind kind = AccumulatorKind::repro;
  int levels = 2;
  LaneConfig lanes{0, 0};  ///< {0, 0}: the precision's default
  std::size_t bsz = 0;     ///< 0: buffer size model
  BufferPolicy policy{};   ///< scalar_width is taken from the precision
  std::size_t expected_groups = 0;
  HashKind hash = HashKind::identity;

  std::uint64_t fan_out() const { return std::uint64_t{1} << (fan_out_bits(fan_out_base) * depth); }
  void validate() const;
};

/// Buffer length a buffered run of precision T uses under `cfg`. Without a
/// group-count hint the model has nothing to divide the cache by and the
/// maximum is used.
template <std::floating_point T>
std::size_t resolved_buffer_size(const AggConfig& cfg) {
  if (cfg.bsz != 0) return cfg.bsz;
  if (cfg.expected_groups == 0) return cfg.policy.bsz_max;
  BufferPolicy p = cfg.policy;
  p.scalar_width = sizeof(T);
  return choose_buffer_size(p, cfg.expected_groups, cfg.fan_out());
}

template <std::floating_point T>
LaneConfig resolved_lanes(const AggConfig& cfg) noexcept {
  return cfg.lanes.lanes == 0 ? default_lane_config<T>() : cfg.lanes;
}

template <std::floating_point T>
struct AggregateResult {
  std::vector<std::uint32_t> keys;  ///< ascending
  std::vector<T> values;

  std::size_t size() const noexcept { return keys.size(); }

  bool bits_equal(const AggregateResult& o) const noexcept {
    return keys == o.keys && values.size() == o.values.size() &&
           (values.empty() || std::memcmp(values.data(), o.values.data(), values.size() * sizeof(T)) == 0);
  }
};

/// Partition with fan-out F = base^depth, aggregate every partition in a
/// thread-private table, merge into the shared result. With depth 0 the
/// private tables cover static input chunks and meet in a lock-striped
/// shared table; with depth >= 1 partitions own disjoint key sets and are
/// written out without synchronisation.
template <std::floating_point T>
AggregateResult<T> partition_and_aggregate(std::span<const std::uint32_t> keys, std::span<const T> values,
                                           const AggConfig& cfg);

extern template AggregateResult<float> partition_and_aggregate<float>(std::span<const std::uint32_t>,
                                                                      std::span<const float>, const AggConfig&);
extern template AggregateResult<double> partition_and_aggregate<double>(std::span<const std::uint32_t>,
                                                                        std::span<const double>, const AggConfig&);

struct DepthThresholds {
  std::uint64_t one_level;
  std::uint64_t two_levels;
};

inline constexpr DepthThresholds kReproDepthThresholds{std::uint64_t{1} << 10, std::uint64_t{1} << 18};
inline constexpr DepthThresholds kBuiltinDepthThresholds{std::uint64_t{1} << 16, std::uint64_t{1} << 25};

int choose_depth(std::uint64_t n_groups, DepthThresholds thresholds);

inline DepthThresholds depth_thresholds_for(AccumulatorKind k) noexcept {
  return is_reproducible(k) ? kReproDepthThresholds : kBuiltinDepthThresholds;
}

}  // namespace repro
