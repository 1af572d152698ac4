#pragma once

// Benchmark commands. Each returns structured results plus CSV rows so the
// CLI and the acceptance suite share one implementation.

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "repro/aggregate.hpp"
#include "repro/bench/workload.hpp"

namespace repro::bench {

inline constexpr const char* kCsvSchema = "repro-bench/1";

/// One CSV line; empty fields stay empty.
struct Row {
  std::string command, precision, kind, levels, lanes, block, bsz, depth, threads, dist, n, n_groups, chunk, trial,
      wall_ns, wall_rsd, cpu_ns_per_elem, slowdown, bits_match, max_abs_error, bound, note;
};

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const Row& row);
void write_csv(std::ostream& out, const std::vector<Row>& rows);
std::string fmt_num(double v);

struct Timing {
  double mean_ns = 0;
  double rsd = 0;  ///< relative standard deviation over trials
};

// --- gen

void cmd_gen(const WorkloadSpec& spec, Precision precision, const std::string& out_prefix);

// --- repro-check

struct ReproCheckOptions {
  WorkloadSpec workload;
  Precision precision = Precision::f64;
  AccumulatorKind kind = AccumulatorKind::buffered;
  int levels = 2;
  std::vector<int> threads{1, 2, 8};
  std::vector<int> depths{0, 1, 2};
  std::vector<std::size_t> bszs{0};        ///< 0: buffer size model
  std::vector<LaneConfig> lanes{{0, 0}};  ///< {0,0}: precision default
  int trials = 10;
  int witness_threads = 8;
  BufferPolicy policy{};
  std::string input;  ///< optional columnar file prefix replacing generation
};

struct ReproCheckResult {
  bool bits_match = true;
  int trials = 0;
  std::size_t distinct_plain_patterns = 0;
  std::vector<Row> rows;
};

ReproCheckResult cmd_repro_check(const ReproCheckOptions& opt);

// --- accuracy

struct AccuracyOptions {
  std::vector<std::uint64_t> ns{1000, 1000000};
  std::vector<Dist> dists{Dist::uniform, Dist::exponential};
  std::vector<int> levels{1, 2, 3};
  std::uint64_t seed = 42;
};

struct AccuracyCell {
  std::uint64_t n = 0;
  Dist dist = Dist::uniform;
  std::string method;  ///< "conv" or "rsum"
  int levels = 0;
  double measured_error = 0;
  double bound = 0;        ///< formula on the sampled data
  double table_bound = 0;  ///< formula on the distribution's expected sum and maximum
};

struct AccuracyResult {
  std::vector<AccuracyCell> cells;
  std::vector<Row> rows;
};

/// Expected-value form of the bounds: U[1,2) has mean 1.5 and maximum 2;
/// Exp(1) has mean 1 and a maximum expected value of 22.
double expected_conv_bound(std::uint64_t n, Dist d);
double expected_rsum_bound(std::uint64_t n, Dist d, int levels, int width = 40);

AccuracyResult cmd_accuracy(const AccuracyOptions& opt);

// --- sum-sweep

struct SumSweepOptions {
  std::uint64_t n = std::uint64_t{1} << 24;
  std::vector<std::uint64_t> chunks{16, 64, 256, 1024, 4096, 0};  ///< 0: one call over everything
  Precision precision = Precision::f64;
  int levels = 2;
  LaneConfig lanes{0, 0};
  int trials = 10;
  std::uint64_t seed = 42;
  Dist dist = Dist::uniform;
};

struct SumSweepResult {
  bool bits_match = true;
  std::vector<Row> rows;
};

SumSweepResult cmd_sum_sweep(const SumSweepOptions& opt);

// --- agg-sweep

struct AggSweepOptions {
  std::uint64_t n = std::uint64_t{1} << 24;
  std::vector<std::uint64_t> groups{std::uint64_t{1} << 4, std::uint64_t{1} << 10, std::uint64_t{1} << 16};
  std::vector<std::uint64_t> ratios;  ///< n/n_groups axis; replaces n when non-empty
  std::vector<AccumulatorKind> kinds{AccumulatorKind::plain, AccumulatorKind::repro, AccumulatorKind::buffered};
  std::vector<int> depths{-1};            ///< -1: depth thresholds
  std::vector<std::size_t> bszs{0};       ///< 0: buffer size model
  Precision precision = Precision::f64;
  int levels = 2;
  LaneConfig lanes{0, 0};
  int threads = 1;
  int trials = 3;
  std::uint64_t seed = 42;
  Dist dist = Dist::uniform;
  BufferPolicy policy{};
};

struct AggCell {
  std::uint64_t n = 0;
  std::uint64_t n_groups = 0;
  AccumulatorKind kind = AccumulatorKind::plain;
  int depth = 0;
  std::size_t bsz = 0;
  bool model_bsz = false;  ///< bsz came from the buffer size model
  Timing timing;
  double cpu_ns_per_elem = 0;
};

struct AggSweepResult {
  std::vector<AggCell> cells;
  std::vector<Row> rows;
  std::map<std::string, double> geomean_slowdown;  ///< per kind, vs plain
  std::size_t model_cells = 0;                     ///< cells with a buffer size sweep
  std::size_t model_within = 0;                    ///< model bsz within 20% of the best
};

AggSweepResult cmd_agg_sweep(const AggSweepOptions& opt);

}  // namespace repro::bench
