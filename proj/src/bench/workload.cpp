#include "repro/bench/workload.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "repro/errors.hpp"

namespace repro::bench {

const char* to_string(Dist d) noexcept {
  switch (d) {
    case Dist::uniform: return "uniform";
    case Dist::exponential: return "exponential";
    case Dist::adversarial: return "adversarial";
  }
  return "?";
}

const char* to_string(Precision p) noexcept { return p == Precision::f32 ? "float" : "double"; }

Dist parse_dist(const std::string& s) {
  if (s == "uniform") return Dist::uniform;
  if (s == "exponential" || s == "exp") return Dist::exponential;
  if (s == "adversarial") return Dist::adversarial;
  throw ContractError("unknown distribution '" + s + "'");
}

Precision parse_precision(const std::string& s) {
  if (s == "float" || s == "f32" || s == "single") return Precision::f32;
  if (s == "double" || s == "f64") return Precision::f64;
  throw ContractError("unknown precision '" + s + "'");
}

namespace {

template <class T>
T unit_uniform(std::mt19937_64& rng) noexcept {
  if constexpr (sizeof(T) == 4)
    return static_cast<float>(rng() >> 40) * 0x1p-24f;
  else
    return static_cast<double>(rng() >> 11) * 0x1p-53;
}

}  // namespace

template <class T>
Workload<T> generate(const WorkloadSpec& spec) {
  if (spec.n_groups == 0 || spec.n_groups > (std::uint64_t{1} << 32)) throw ContractError("n_groups must lie in [1, 2^32]");
  std::mt19937_64 rng(spec.seed);
  Workload<T> w;
  w.keys.resize(spec.n);
  w.values.resize(spec.n);
  if (spec.dist == Dist::adversarial) {
    const T tile[3] = {T(2.5e-16), T(0.999999999999999), T(2.5e-16)};
    for (std::uint64_t i = 0; i < spec.n; ++i) {
      w.keys[i] = static_cast<std::uint32_t>((i / 3) % spec.n_groups);
      w.values[i] = tile[i % 3];
    }
    return w;
  }
  for (std::uint64_t i = 0; i < spec.n; ++i) {
    w.keys[i] = static_cast<std::uint32_t>(bounded(rng, spec.n_groups));
    if (spec.dist == Dist::uniform) {
      // 1 + k*ulp(1): every representable value of [1, 2) equally likely.
      if constexpr (sizeof(T) == 4)
        w.values[i] = 1.0f + static_cast<float>(rng() >> 41) * 0x1p-23f;
      else
        w.values[i] = 1.0 + static_cast<double>(rng() >> 12) * 0x1p-52;
    } else {
      w.values[i] = static_cast<T>(-std::log1p(-static_cast<double>(unit_uniform<double>(rng))));
    }
  }
  return w;
}

template <class T>
void permute(Workload<T>& w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = w.keys.size(); i > 1; --i) {
    const std::size_t j = bounded(rng, i);
    std::swap(w.keys[i - 1], w.keys[j]);
    std::swap(w.values[i - 1], w.values[j]);
  }
}

namespace {

template <class U>
void write_le(std::ofstream& out, const std::vector<U>& v) {
  static_assert(std::endian::native == std::endian::little, "columnar files are little-endian");
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(U)));
}

template <class U>
std::vector<U> read_le(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open " + path);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % sizeof(U) != 0) throw std::runtime_error(path + ": size is not a multiple of the element width");
  std::vector<U> v(bytes / sizeof(U));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw std::runtime_error("short read from " + path);
  return v;
}

}  // namespace

template <class T>
void write_columns(const std::string& prefix, const Workload<T>& w) {
  for (const auto& [suffix, is_keys] : {std::pair{".keys", true}, std::pair{".values", false}}) {
    std::ofstream out(prefix + suffix, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + prefix + suffix);
    if (is_keys)
      write_le(out, w.keys);
    else
      write_le(out, w.values);
    if (!out) throw std::runtime_error("write failed for " + prefix + suffix);
  }
}

template <class T>
Workload<T> read_columns(const std::string& prefix) {
  Workload<T> w;
  w.keys = read_le<std::uint32_t>(prefix + ".keys");
  w.values = read_le<T>(prefix + ".values");
  if (w.keys.size() != w.values.size()) throw std::runtime_error(prefix + ": key and value files differ in length");
  return w;
}

template Workload<float> generate<float>(const WorkloadSpec&);
template Workload<double> generate<double>(const WorkloadSpec&);
template void permute<float>(Workload<float>&, std::uint64_t);
template void permute<double>(Workload<double>&, std::uint64_t);
template void write_columns<float>(const std::string&, const Workload<float>&);
template void write_columns<double>(const std::string&, const Workload<double>&);
template Workload<float> read_columns<float>(const std::string&);
template Workload<double> read_columns<double>(const std::string&);

}  // namespace repro::bench
