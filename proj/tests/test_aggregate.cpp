#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "repro/aggregate.hpp"
#include "repro/bench/workload.hpp"
#include "repro/oracle.hpp"

using namespace repro;
using bench::Dist;
using bench::Workload;

namespace {

template <class T>
Workload<T> workload(std::uint64_t n, std::uint64_t groups, Dist d, std::uint64_t seed) {
  return bench::generate<T>({n, groups, d, seed});
}

template <class T>
AggregateResult<T> run(const Workload<T>& w, AggConfig cfg) {
  return partition_and_aggregate<T>(w.keys, w.values, cfg);
}

AggConfig config(AccumulatorKind kind, int depth, int threads) {
  AggConfig c;
  c.kind = kind;
  c.depth = depth;
  c.threads = threads;
  return c;
}

}  // namespace

// --- hash table

TEST(HashAggregate, SmallExample) {
  AggregationTable<PlainStore<double>> table(PlainStore<double>{});
  const std::vector<Record<double>> recs{{7, 1.0}, {9, 2.0}, {7, 3.0}};
  hash_aggregate<PlainStore<double>>(recs, table);
  std::map<std::uint32_t, double> got;
  table.for_each([&](std::uint32_t k, double& v) { got[k] = v; });
  EXPECT_EQ(got, (std::map<std::uint32_t, double>{{7, 4.0}, {9, 2.0}}));
}

TEST(HashAggregate, EmptyInput) {
  AggregationTable<ReproStore<double, 2>> table(ReproStore<double, 2>{});
  hash_aggregate<ReproStore<double, 2>>(std::span<const Record<double>>{}, table);
  EXPECT_EQ(table.size(), 0u);
}

TEST(HashAggregate, GrowthKeepsEveryKeyOnce) {
  AggregationTable<PlainStore<double>> table(PlainStore<double>{}, 4);
  for (std::uint32_t k = 0; k < 100000; ++k) table.add(k * 2654435761u, 1.0);
  for (std::uint32_t k = 0; k < 100000; ++k) table.add(k * 2654435761u, 1.0);
  EXPECT_EQ(table.size(), 100000u);
  EXPECT_LE(2 * table.size(), table.capacity());
  std::size_t n = 0;
  table.for_each([&](std::uint32_t, double& v) {
    EXPECT_EQ(v, 2.0);
    ++n;
  });
  EXPECT_EQ(n, 100000u);
}

TEST(HashAggregate, PermutationStableForReproducibleStores) {
  auto w = workload<double>(20000, 300, Dist::exponential, 1);
  auto collect = [](const Workload<double>& x) {
    AggregationTable<BufferedStore<double, 2>> table(BufferedStore<double, 2>(16, {4, 256}));
    hash_aggregate<BufferedStore<double, 2>>(x.keys, x.values, table);
    std::map<std::uint32_t, std::uint64_t> bits;
    table.for_each([&](std::uint32_t k, auto& slot) { bits[k] = to_bits(table.store().finish(slot).value()); });
    return bits;
  };
  const auto ref = collect(w);
  bench::permute(w, 99);
  EXPECT_EQ(collect(w), ref);
}

TEST(HashAggregate, NonFiniteReportsIndex) {
  AggregationTable<PlainStore<double>> table(PlainStore<double>{});
  const std::vector<Record<double>> recs{{1, 1.0}, {2, std::numeric_limits<double>::infinity()}};
  try {
    hash_aggregate<PlainStore<double>>(recs, table);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(HashAggregate, DecimalBaseline) {
  AggregationTable<DecimalStore<double>> table(DecimalStore<double>{});
  const std::vector<Record<double>> recs{{1, 0.1}, {1, 0.2}, {2, -1.5}};
  hash_aggregate<DecimalStore<double>>(recs, table);
  std::map<std::uint32_t, double> got;
  table.for_each([&](std::uint32_t k, std::int64_t& v) { got[k] = DecimalStore<double>::read(v); });
  EXPECT_EQ(got[1], 0.3);
  EXPECT_EQ(got[2], -1.5);
}

// --- partitioning

TEST(Partition, DepthZeroForwards) {
  const auto w = workload<double>(1000, 50, Dist::uniform, 2);
  const auto p = parallel_partition<double>(w.keys, w.values, 0, 3);
  ASSERT_EQ(p.count(), 1u);
  for (std::size_t i = 0; i < w.keys.size(); ++i) {
    EXPECT_EQ(p.records[i].key, w.keys[i]);
    EXPECT_EQ(p.records[i].value, w.values[i]);
  }
}

TEST(Partition, IdentityRadixOfSmallKeys) {
  std::vector<std::uint32_t> keys;
  std::vector<double> values;
  for (int r = 0; r < 3; ++r)
    for (std::uint32_t k = 0; k < 256; ++k) {
      keys.push_back(k);
      values.push_back(r);
    }
  const auto p = parallel_partition<double>(keys, values, 1, 4);
  ASSERT_EQ(p.count(), 256u);
  for (std::size_t i = 0; i < 256; ++i) {
    const auto part = p.partition(i);
    ASSERT_EQ(part.size(), 3u);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(part[j].key, i);
      EXPECT_EQ(part[j].value, static_cast<double>(j));  // input order kept
    }
  }
}

TEST(Partition, MultisetPreservedAndStable) {
  std::mt19937_64 rng(3);
  for (const int depth : {1, 2}) {
    for (const int threads : {1, 3, 8}) {
      for (const HashKind h : {HashKind::identity, HashKind::multiplicative}) {
        const auto n = 1 + rng() % 50000;
        const auto w = workload<double>(n, 1 + rng() % 100000, Dist::uniform, rng());
        std::vector<double> pos(n);
        for (std::size_t i = 0; i < n; ++i) pos[i] = static_cast<double>(i);  // value = input position
        const auto p = parallel_partition<double>(w.keys, pos, depth, threads, h);
        ASSERT_EQ(p.count(), std::size_t{1} << (8 * depth));
        std::vector<int> seen(n, 0);
        for (std::size_t i = 0; i < p.count(); ++i) {
          const auto part = p.partition(i);
          double last = -1;
          for (const auto& r : part) {
            const auto idx = static_cast<std::size_t>(r.value);
            ASSERT_EQ(r.key, w.keys[idx]);
            ASSERT_GT(r.value, last);  // stable
            last = r.value;
            ++seen[idx];
            const std::uint32_t hk = hash_key(r.key, h);
            std::uint32_t expect = 0;
            for (int d = 0; d < depth; ++d) expect = (expect << 8) | ((hk >> (8 * d)) & 0xff);
            ASSERT_EQ(expect, i);
          }
        }
        EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
      }
    }
  }
}

TEST(Partition, RejectsBadArguments) {
  const std::vector<std::uint32_t> k{1, 2};
  const std::vector<double> v{1.0};
  EXPECT_THROW(parallel_partition<double>(k, v, 1, 1), ContractError);
  const std::vector<double> v2{1.0, 2.0};
  EXPECT_THROW(parallel_partition<double>(k, v2, 4, 1), ContractError);
  EXPECT_THROW(parallel_partition<double>(k, v2, 1, 0), ContractError);
  EXPECT_THROW(parallel_partition<double>(k, v2, 1, 1, HashKind::identity, 3), ContractError);
}

// --- end to end

TEST(PartitionAndAggregate, CrossProductBitIdentical) {
  auto w = workload<double>(std::size_t{1} << 20, std::size_t{1} << 12, Dist::exponential, 4);
  for (const auto kind : {AccumulatorKind::repro, AccumulatorKind::buffered}) {
    const auto ref = run(w, config(kind, 0, 1));
    EXPECT_EQ(ref.size(), std::size_t{1} << 12);
    auto perm = w;
    for (const int threads : {1, 2, 8}) {
      for (const int depth : {0, 1, 2}) {
        bench::permute(perm, threads * 10 + depth);
        auto cfg = config(kind, depth, threads);
        cfg.bsz = depth == 1 ? 7 : 0;
        cfg.lanes = threads == 2 ? LaneConfig{16, 64} : LaneConfig{0, 0};
        EXPECT_TRUE(run(perm, cfg).bits_equal(ref)) << to_string(kind) << " P=" << threads << " d=" << depth;
      }
    }
  }
}

TEST(PartitionAndAggregate, FloatBitIdentical) {
  auto w = workload<float>(200000, 5000, Dist::uniform, 5);
  const auto ref = run(w, config(AccumulatorKind::buffered, 0, 1));
  bench::permute(w, 6);
  for (const int d : {0, 1, 2}) EXPECT_TRUE(run(w, config(AccumulatorKind::buffered, d, 4)).bits_equal(ref));
  EXPECT_TRUE(run(w, config(AccumulatorKind::repro, 1, 3)).bits_equal(ref));
}

TEST(PartitionAndAggregate, LevelsAndHashesAreHonoured) {
  const auto w = workload<double>(50000, 1000, Dist::uniform, 7);
  for (const int L : {1, 3, 4}) {
    auto cfg = config(AccumulatorKind::repro, 0, 1);
    cfg.levels = L;
    const auto ref = run(w, cfg);
    cfg.kind = AccumulatorKind::buffered;
    cfg.depth = 1;
    cfg.threads = 4;
    cfg.hash = HashKind::multiplicative;
    EXPECT_TRUE(run(w, cfg).bits_equal(ref)) << L;
  }
}

TEST(PartitionAndAggregate, SingleGroupReducesToRSum) {
  auto w = workload<double>(100000, 1, Dist::exponential, 8);
  const auto out = run(w, config(AccumulatorKind::buffered, 1, 4));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out.keys[0], 0u);
  const double expect = reproducible_sum<double>(w.values, default_params<double>(2));
  EXPECT_EQ(to_bits(out.values[0]), to_bits(expect));
}

TEST(PartitionAndAggregate, SparseKeysStable) {
  const std::size_t n = 1 << 16;
  auto w = workload<double>(n, n, Dist::uniform, 9);
  const auto ref = run(w, config(AccumulatorKind::buffered, 0, 1));
  EXPECT_LT(ref.size(), n);
  EXPECT_TRUE(std::is_sorted(ref.keys.begin(), ref.keys.end()));
  bench::permute(w, 10);
  EXPECT_TRUE(run(w, config(AccumulatorKind::buffered, 2, 8)).bits_equal(ref));
}

TEST(PartitionAndAggregate, WithinBoundOfExactGroupSums) {
  const auto w = workload<double>(300000, 200, Dist::exponential, 11);
  const auto out = run(w, config(AccumulatorKind::buffered, 1, 4));
  std::map<std::uint32_t, std::vector<double>> groups;
  for (std::size_t i = 0; i < w.keys.size(); ++i) groups[w.keys[i]].push_back(w.values[i]);
  ASSERT_EQ(out.size(), groups.size());
  ExactAccumulator total, per_group_total;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& g = groups.at(out.keys[i]);
    ExactAccumulator acc;
    acc.add(std::span<const double>(g));
    per_group_total.merge(acc);
    const double exact = acc.round();
    const double bound = rsum_error_bound<double>(g, 2, 40);
    EXPECT_LE(std::fabs(out.values[i] - exact), bound + ulp(exact) / 2);
  }
  total.add(std::span<const double>(w.values));
  EXPECT_TRUE(total == per_group_total);
}

TEST(PartitionAndAggregate, PlainBaselineIsNotReproducible) {
  auto w = workload<double>(30000, 10000, Dist::adversarial, 12);
  const auto ref = run(w, config(AccumulatorKind::plain, 0, 8));
  bool differs = false;
  for (int s = 0; s < 10 && !differs; ++s) {
    auto p = w;
    bench::permute(p, 100 + s);
    differs = !run(p, config(AccumulatorKind::plain, 0, 8)).bits_equal(ref);
  }
  EXPECT_TRUE(differs);
  // The reproducible kind on the same data does not move.
  const auto rref = run(w, config(AccumulatorKind::repro, 0, 8));
  bench::permute(w, 100);
  EXPECT_TRUE(run(w, config(AccumulatorKind::repro, 0, 8)).bits_equal(rref));
}

TEST(PartitionAndAggregate, SmallExampleAllKinds) {
  const std::vector<std::uint32_t> k{7, 9, 7};
  const std::vector<double> v{1.0, 2.0, 3.0};
  for (const auto kind : {AccumulatorKind::plain, AccumulatorKind::decimal, AccumulatorKind::repro,
                          AccumulatorKind::buffered}) {
    for (const int d : {0, 1}) {
      const auto out = partition_and_aggregate<double>(k, v, config(kind, d, 2));
      EXPECT_EQ(out.keys, (std::vector<std::uint32_t>{7, 9}));
      EXPECT_EQ(out.values, (std::vector<double>{4.0, 2.0}));
    }
  }
  EXPECT_EQ(partition_and_aggregate<double>({}, {}, config(AccumulatorKind::buffered, 1, 4)).size(), 0u);
}

TEST(PartitionAndAggregate, Errors) {
  const std::vector<std::uint32_t> k{1, 2, 3};
  std::vector<double> v{1.0, std::numeric_limits<double>::quiet_NaN(), 3.0};
  try {
    partition_and_aggregate<double>(k, v, config(AccumulatorKind::buffered, 1, 2));
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_EQ(e.index(), 1u);
  }
  v[1] = 2.0;
  auto cfg = config(AccumulatorKind::repro, 4, 1);
  EXPECT_THROW(partition_and_aggregate<double>(k, v, cfg), ContractError);
  cfg = config(AccumulatorKind::repro, 0, 0);
  EXPECT_THROW(partition_and_aggregate<double>(k, v, cfg), ContractError);
  v[2] = 1e308;
  EXPECT_THROW(partition_and_aggregate<double>(k, v, config(AccumulatorKind::repro, 1, 2)), OverflowError);
}

TEST(RunThreads, RethrowsLowestIndex) {
  try {
    run_threads(4, [](int t) {
      if (t >= 2) throw std::runtime_error(std::to_string(t));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "2");
  }
}

// --- configuration

TEST(ChooseDepth, ReproThresholds) {
  EXPECT_EQ(choose_depth(1u << 6, kReproDepthThresholds), 0);
  EXPECT_EQ(choose_depth(1u << 12, kReproDepthThresholds), 1);
  EXPECT_EQ(choose_depth(1u << 20, kReproDepthThresholds), 2);
  EXPECT_EQ(choose_depth((1u << 10) - 1, kReproDepthThresholds), 0);
  EXPECT_EQ(choose_depth(1u << 10, kReproDepthThresholds), 1);
  EXPECT_EQ(choose_depth(1u << 18, kReproDepthThresholds), 2);
}

TEST(ChooseDepth, BuiltinThresholds) {
  EXPECT_EQ(choose_depth(1u << 15, kBuiltinDepthThresholds), 0);
  EXPECT_EQ(choose_depth(1u << 16, kBuiltinDepthThresholds), 1);
  EXPECT_EQ(choose_depth(1u << 25, kBuiltinDepthThresholds), 2);
  EXPECT_EQ(depth_thresholds_for(AccumulatorKind::plain).one_level, 1u << 16);
  EXPECT_EQ(depth_thresholds_for(AccumulatorKind::buffered).one_level, 1u << 10);
  EXPECT_THROW(choose_depth(5, DepthThresholds{10, 10}), ContractError);
}

TEST(AggConfig, BufferSizeResolution) {
  AggConfig c;
  c.kind = AccumulatorKind::buffered;
  c.policy = {std::size_t{1} << 20, 1024, 8};
  EXPECT_EQ(resolved_buffer_size<double>(c), 1024u);
  c.expected_groups = 1 << 16;
  EXPECT_EQ(resolved_buffer_size<float>(c), 4u);
  EXPECT_EQ(resolved_buffer_size<double>(c), 2u);
  c.depth = 1;
  EXPECT_EQ(resolved_buffer_size<double>(c), 512u);
  c.bsz = 33;
  EXPECT_EQ(resolved_buffer_size<double>(c), 33u);
}

TEST(AggConfig, Names) {
  for (const auto k : {AccumulatorKind::plain, AccumulatorKind::decimal, AccumulatorKind::repro,
                       AccumulatorKind::buffered})
    EXPECT_EQ(parse_accumulator_kind(to_string(k)), k);
  EXPECT_EQ(parse_hash_kind("multiplicative"), HashKind::multiplicative);
  EXPECT_THROW(parse_accumulator_kind("kahan"), ContractError);
}
