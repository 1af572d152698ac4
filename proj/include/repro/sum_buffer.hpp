#pragma once

// Summation buffers: stage raw values per group and push them through the
// lane-parallel kernel only when the buffer fills up.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "repro/repro_value.hpp"

namespace repro {

struct BufferPolicy {
  std::size_t cache_bytes = std::size_t{1} << 20;
  std::size_t bsz_max = 1024;
  std::size_t scalar_width = 8;
};

/// Buffer length (in elements) that lets the buffers of n_groups/F groups
/// fill cache_bytes: min(ceil(cache / (ceil(n_groups/F) * width)), bsz_max).
std::size_t choose_buffer_size(const BufferPolicy& policy, std::uint64_t n_groups, std::uint64_t fan_out);

/// Half of the last-level cache share of one core (at most the private L2),
/// read from sysfs; falls back to 1 MiB when the platform does not report
/// cache geometry.
std::size_t probe_cache_bytes();

template <std::floating_point T, int L = 2>
class BufferedAccumulator {
 public:
  using value_type = T;
  using Repro = ReproValue<T, L>;

  explicit BufferedAccumulator(std::size_t bsz, LaneConfig lanes = default_lane_config<T>())
      : buf_(bsz), lanes_(lanes) {
    if (bsz == 0) throw ContractError("buffer size must be at least 1");
    validate_lane_config(lanes, format_of<T>, kDefaultWidth<T>);
  }

  void append(T x) {
    if (!std::isfinite(x)) throw DomainError("non-finite summand");
    buf_[next_++] = x;
    if (next_ == buf_.size()) flush();
  }

  void flush() {
    if (next_ == 0) return;
    rv_.add(std::span<const T>(buf_.data(), next_), lanes_);
    next_ = 0;
  }

  /// Read-out of everything appended so far; flushes first.
  T value() {
    flush();
    return rv_.value();
  }

  const Repro& repro() const noexcept { return rv_; }
  std::size_t pending() const noexcept { return next_; }
  std::size_t capacity() const noexcept { return buf_.size(); }

 private:
  Repro rv_;
  std::vector<T> buf_;
  std::size_t next_ = 0;
  LaneConfig lanes_;
};

}  // namespace repro
