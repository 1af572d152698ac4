#include "repro/aggregate.hpp"

#include <mutex>

namespace repro {

const char* to_string(AccumulatorKind k) noexcept {
  switch (k) {
    case AccumulatorKind::plain: return "plain";
    case AccumulatorKind::decimal: return "decimal";
    case AccumulatorKind::repro: return "repro";
    case AccumulatorKind::buffered: return "buffered";
  }
  return "?";
}

const char* to_string(HashKind h) noexcept { return h == HashKind::identity ? "identity" : "multiplicative"; }

AccumulatorKind parse_accumulator_kind(const std::string& s) {
  if (s == "plain") return AccumulatorKind::plain;
  if (s == "decimal") return AccumulatorKind::decimal;
  if (s == "repro") return AccumulatorKind::repro;
  if (s == "buffered") return AccumulatorKind::buffered;
  throw ContractError("unknown accumulator kind '" + s + "'");
}

HashKind parse_hash_kind(const std::string& s) {
  if (s == "identity") return HashKind::identity;
  if (s == "multiplicative") return HashKind::multiplicative;
  throw ContractError("unknown hash kind '" + s + "'");
}

void AggConfig::validate() const {
  const int bits = fan_out_bits(fan_out_base);
  if (depth < 0 || bits * depth > 24) throw ContractError("partitioning depth out of range");
  if (threads < 1 || threads > 1024) throw ContractError("thread count must lie in [1, 1024]");
  if (levels < 1 || levels > kMaxLevels) throw ContractError("level count must lie in [1, 4]");
  if ((lanes.lanes == 0) != (lanes.block == 0)) throw ContractError("lane count and block length must both be set");
  if (policy.bsz_max == 0 || policy.cache_bytes == 0) throw ContractError("buffer policy fields must be positive");
}

int choose_depth(std::uint64_t n_groups, DepthThresholds t) {
  if (t.one_level >= t.two_levels) throw ContractError("depth thresholds must increase");
  if (n_groups < t.one_level) return 0;
  if (n_groups < t.two_levels) return 1;
  return 2;
}

namespace {

// Slots of the shared result table.
template <class Store>
struct SharedSlots {
  using value_type = typename Store::value_type;
  using Slot = typename Store::Shared;
  void init(Slot& s) { Store::init_shared(s); }
  void reset() noexcept {}
};

template <class T, class Store>
AggregateResult<T> run(std::span<const std::uint32_t> keys, std::span<const T> values, const AggConfig& cfg,
                       const Store& proto) {
  using Shared = typename Store::Shared;
  const int P = cfg.threads;
  const std::size_t n = keys.size();
  std::vector<std::pair<std::uint32_t, T>> rows;

  if (cfg.depth == 0) {
    constexpr int kStripes = 64;
    struct Stripe {
      std::mutex mu;
      AggregationTable<SharedSlots<Store>> table;
    };
    std::vector<std::unique_ptr<Stripe>> stripes;
    for (int s = 0; s < kStripes; ++s)
      stripes.push_back(std::unique_ptr<Stripe>(new Stripe{{}, AggregationTable<SharedSlots<Store>>(
                                                                   SharedSlots<Store>{}, cfg.expected_groups / kStripes, cfg.hash)}));
    auto stripe_of = [](std::uint32_t k) { return static_cast<int>((k * 0x9E3779B1u) >> 26); };

    std::vector<std::unique_ptr<AggregationTable<Store>>> priv(P);
    run_threads(P, [&](int t) {
      const auto [b, e] = static_chunk(n, P, t);
      // Fill a local table so its fields can live in registers.
      AggregationTable<Store> table(Store(proto), std::min(cfg.expected_groups, e - b), cfg.hash);
      const std::uint32_t* ks = keys.data();
      const T* vs = values.data();
      for (std::size_t i = b; i < e; ++i) table.add(ks[i], vs[i]);
      priv[t] = std::make_unique<AggregationTable<Store>>(std::move(table));
    });
    run_threads(P, [&](int t) {
      auto& table = *priv[t];
      std::vector<std::vector<std::pair<std::uint32_t, Shared>>> by_stripe(kStripes);
      table.for_each([&](std::uint32_t k, auto& slot) { by_stripe[stripe_of(k)].emplace_back(k, table.store().finish(slot)); });
      priv[t].reset();
      for (int j = 0; j < kStripes; ++j) {
        const int s = (j + t) % kStripes;
        if (by_stripe[s].empty()) continue;
        std::lock_guard lock(stripes[s]->mu);
        for (const auto& [k, v] : by_stripe[s]) Store::combine(stripes[s]->table.find_or_insert(k), v);
      }
    });
    for (auto& s : stripes)
      s->table.for_each([&](std::uint32_t k, Shared& v) { rows.emplace_back(k, Store::read(v)); });
  } else {
    const int bits = fan_out_bits(cfg.fan_out_base);
    const Partitions<T> parts = parallel_partition(keys, values, cfg.depth, P, cfg.hash, cfg.fan_out_base);
    const std::uint64_t F = cfg.fan_out();
    const std::size_t per_part = static_cast<std::size_t>((cfg.expected_groups + F - 1) / F);
    std::vector<std::vector<std::pair<std::uint32_t, T>>> out(parts.count());
    run_threads(P, [&](int t) {
      AggregationTable<Store> table(Store(proto), per_part, cfg.hash, bits * cfg.depth);
      for (std::size_t p = static_cast<std::size_t>(t); p < parts.count(); p += P) {
        const auto recs = parts.partition(p);
        if (recs.empty()) continue;
        table.clear();
        for (const auto& r : recs) table.add(r.key, r.value);
        out[p].reserve(table.size());
        table.for_each([&](std::uint32_t k, auto& slot) { out[p].emplace_back(k, Store::read(table.store().finish(slot))); });
      }
    });
    std::size_t total = 0;
    for (const auto& o : out) total += o.size();
    rows.reserve(total);
    for (auto& o : out) rows.insert(rows.end(), o.begin(), o.end());
  }

  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  AggregateResult<T> res;
  res.keys.reserve(rows.size());
  res.values.reserve(rows.size());
  for (const auto& [k, v] : rows) {
    res.keys.push_back(k);
    res.values.push_back(v);
  }
  return res;
}

}  // namespace

template <std::floating_point T>
AggregateResult<T> partition_and_aggregate(std::span<const std::uint32_t> keys, std::span<const T> values,
                                           const AggConfig& cfg) {
  cfg.validate();
  if (keys.size() != values.size()) throw ContractError("key and value columns differ in length");
  detail::check_finite_values(values);
  switch (cfg.kind) {
    case AccumulatorKind::plain: return run<T>(keys, values, cfg, PlainStore<T>{});
    case AccumulatorKind::decimal: return run<T>(keys, values, cfg, DecimalStore<T>{});
    case AccumulatorKind::repro:
      return detail::with_levels(cfg.levels, [&]<int L>() { return run<T>(keys, values, cfg, ReproStore<T, L>{}); });
    case AccumulatorKind::buffered: {
      const std::size_t bsz = resolved_buffer_size<T>(cfg);
      const LaneConfig lanes = resolved_lanes<T>(cfg);
      return detail::with_levels(cfg.levels, [&]<int L>() {
        return run<T>(keys, values, cfg, BufferedStore<T, L>(bsz, lanes));
      });
    }
  }
  throw ContractError("unknown accumulator kind");
}

template AggregateResult<float> partition_and_aggregate<float>(std::span<const std::uint32_t>, std::span<const float>,
                                                               const AggConfig&);
template AggregateResult<double> partition_and_aggregate<double>(std::span<const std::uint32_t>,
                                                                 std::span<const double>, const AggConfig&);

}  // namespace repro
