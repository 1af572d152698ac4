#pragma once

// Seeded workload generation and the columnar key/value file format.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace repro::bench {

enum class Dist { uniform, exponential, adversarial };
enum class Precision { f32, f64 };

const char* to_string(Dist d) noexcept;
const char* to_string(Precision p) noexcept;
Dist parse_dist(const std::string& s);
Precision parse_precision(const std::string& s);

struct WorkloadSpec {
  std::uint64_t n = 1000;
  std::uint64_t n_groups = 16;
  Dist dist = Dist::uniform;
  std::uint64_t seed = 42;
};

template <class T>
struct Workload {
  std::vector<std::uint32_t> keys;
  std::vector<T> values;
};

/// Keys uniform over [0, n_groups) (adversarial data tiles the values
/// {2.5e-16, 0.999999999999999, 2.5e-16} and gives each triple one key).
template <class T>
Workload<T> generate(const WorkloadSpec& spec);

/// Uniform value in [0, bound) from one 64-bit draw (multiply-shift).
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) noexcept {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * bound) >> 64);
}

/// Fisher-Yates shuffle of the records, deterministic for a seed.
template <class T>
void permute(Workload<T>& w, std::uint64_t seed);

/// Writes <prefix>.keys (u32 LE) and <prefix>.values (f32/f64 LE).
template <class T>
void write_columns(const std::string& prefix, const Workload<T>& w);

template <class T>
Workload<T> read_columns(const std::string& prefix);

}  // namespace repro::bench
