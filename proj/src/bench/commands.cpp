#include "repro/bench/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "repro/oracle.hpp"
#include "repro/rsum.hpp"

namespace repro::bench {

namespace {

template <class F>
decltype(auto) with_precision(Precision p, F&& f) {
  if (p == Precision::f32) return f.template operator()<float>();
  return f.template operator()<double>();
}

template <class F>
Timing time_trials(int trials, F&& fn) {
  std::vector<double> ns;
  for (int i = 0; i < std::max(1, trials); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ns.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  double mean = 0;
  for (double v : ns) mean += v;
  mean /= static_cast<double>(ns.size());
  double var = 0;
  for (double v : ns) var += (v - mean) * (v - mean);
  var /= static_cast<double>(ns.size());
  return {mean, mean > 0 ? std::sqrt(var) / mean : 0.0};
}

std::string str(std::uint64_t v) { return std::to_string(v); }
std::string str(int v) { return std::to_string(v); }

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

template <class T>
LaneConfig lanes_or_default(LaneConfig l) {
  return l.lanes == 0 ? default_lane_config<T>() : l;
}

template <class T>
bool same_bits(T a, T b) {
  return std::bit_cast<bits_t<T>>(a) == std::bit_cast<bits_t<T>>(b);
}

}  // namespace

std::string fmt_num(double v) {
  char buf[64];
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15)
    std::snprintf(buf, sizeof buf, "%.0f", v);
  else
    std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_csv_header(std::ostream& out) {
  out << "schema,command,precision,kind,levels,lanes,block,bsz,depth,threads,dist,n,n_groups,chunk,trial,wall_ns,"
         "wall_rsd,cpu_ns_per_elem,slowdown,bits_match,max_abs_error,bound,note\n";
}

void write_csv_row(std::ostream& out, const Row& r) {
  const std::string* f[] = {&r.command, &r.precision, &r.kind,     &r.levels,          &r.lanes,    &r.block,
                            &r.bsz,     &r.depth,     &r.threads,  &r.dist,            &r.n,        &r.n_groups,
                            &r.chunk,   &r.trial,     &r.wall_ns,  &r.wall_rsd,        &r.cpu_ns_per_elem,
                            &r.slowdown, &r.bits_match, &r.max_abs_error, &r.bound,    &r.note};
  out << kCsvSchema;
  for (const auto* s : f) out << ',' << csv_escape(*s);
  out << '\n';
}

void write_csv(std::ostream& out, const std::vector<Row>& rows) {
  write_csv_header(out);
  for (const auto& r : rows) write_csv_row(out, r);
}

// ---------------------------------------------------------------------------

void cmd_gen(const WorkloadSpec& spec, Precision precision, const std::string& out_prefix) {
  with_precision(precision, [&]<class T>() { write_columns(out_prefix, generate<T>(spec)); });
}

// ---------------------------------------------------------------------------

ReproCheckResult cmd_repro_check(const ReproCheckOptions& opt) {
  if (opt.trials < 1) throw ContractError("repro-check needs at least one trial");
  if (opt.threads.empty() || opt.depths.empty() || opt.bszs.empty() || opt.lanes.empty())
    throw ContractError("repro-check schedule lists must not be empty");
  return with_precision(opt.precision, [&]<class T>() {
    const Workload<T> base = opt.input.empty() ? generate<T>(opt.workload) : read_columns<T>(opt.input);
    std::uint64_t n_groups = opt.workload.n_groups;
    if (!opt.input.empty())
      n_groups = base.keys.empty() ? 1 : std::uint64_t{*std::max_element(base.keys.begin(), base.keys.end())} + 1;

    ReproCheckResult res;
    res.trials = opt.trials;
    AggConfig ref_cfg;
    ref_cfg.kind = is_reproducible(opt.kind) ? AccumulatorKind::repro : opt.kind;
    ref_cfg.levels = opt.levels;
    ref_cfg.expected_groups = n_groups;
    ref_cfg.policy = opt.policy;
    const AggregateResult<T> ref = partition_and_aggregate<T>(base.keys, base.values, ref_cfg);

    std::vector<AggregateResult<T>> plain_patterns;
    for (int t = 0; t < opt.trials; ++t) {
      Workload<T> w = base;
      if (t > 0) permute(w, opt.workload.seed * 1000003u + static_cast<std::uint64_t>(t));
      const std::size_t nt = opt.threads.size();
      const std::size_t nb = opt.bszs.size();
      AggConfig cfg;
      cfg.kind = opt.kind;
      cfg.levels = opt.levels;
      cfg.threads = opt.threads[t % nt];
      cfg.depth = opt.depths[(t / nt) % opt.depths.size()];
      cfg.bsz = opt.bszs[t % nb];
      cfg.lanes = opt.lanes[(t / nb) % opt.lanes.size()];
      cfg.expected_groups = n_groups;
      cfg.policy = opt.policy;
      const AggregateResult<T> out = partition_and_aggregate<T>(w.keys, w.values, cfg);
      const bool match = out.bits_equal(ref);
      res.bits_match &= match;

      AggConfig plain;
      plain.kind = AccumulatorKind::plain;
      plain.threads = opt.witness_threads;
      plain.depth = 0;
      plain.expected_groups = n_groups;
      AggregateResult<T> p = partition_and_aggregate<T>(w.keys, w.values, plain);
      if (std::none_of(plain_patterns.begin(), plain_patterns.end(), [&](const auto& q) { return q.bits_equal(p); }))
        plain_patterns.push_back(std::move(p));

      Row row;
      row.command = "repro-check";
      row.precision = to_string(opt.precision);
      row.kind = to_string(cfg.kind);
      row.levels = str(cfg.levels);
      const LaneConfig lanes = lanes_or_default<T>(cfg.lanes);
      row.lanes = str(lanes.lanes);
      row.block = str(lanes.block);
      row.bsz = cfg.kind == AccumulatorKind::buffered ? str(std::uint64_t{resolved_buffer_size<T>(cfg)}) : "";
      row.depth = str(cfg.depth);
      row.threads = str(cfg.threads);
      row.dist = opt.input.empty() ? to_string(opt.workload.dist) : "file";
      row.n = str(std::uint64_t{w.keys.size()});
      row.n_groups = str(n_groups);
      row.trial = str(t);
      row.bits_match = match ? "true" : "false";
      row.note = "plain_patterns=" + std::to_string(plain_patterns.size());
      res.rows.push_back(std::move(row));
    }
    res.distinct_plain_patterns = plain_patterns.size();
    return res;
  });
}

// ---------------------------------------------------------------------------

double expected_conv_bound(std::uint64_t n, Dist d) {
  const double mean = d == Dist::uniform ? 1.5 : 1.0;
  return conv_error_bound(n, mean * static_cast<double>(n));
}

double expected_rsum_bound(std::uint64_t n, Dist d, int levels, int width) {
  const double max_expected = d == Dist::uniform ? 2.0 : 22.0;
  return rsum_error_bound(n, max_expected, levels, width);
}

AccuracyResult cmd_accuracy(const AccuracyOptions& opt) {
  AccuracyResult res;
  for (const std::uint64_t n : opt.ns) {
    for (const Dist dist : opt.dists) {
      const std::vector<double> values = generate<double>({n, 1, dist, opt.seed}).values;
      // Errors are measured against the correctly rounded exact sum: for L=3
      // the bound lies below half an ulp of the result.
      const double exact = exact_sum<double>(values);
      auto error = [&](double approx) {
        ExactAccumulator d;
        d.add(exact);
        d.add(-approx);
        return std::fabs(d.to_double());
      };
      double conv = 0;
      double sum_abs = 0;
      double mx = 0;
      for (const double v : values) {
        conv += v;
        sum_abs += std::fabs(v);
        mx = std::fmax(mx, std::fabs(v));
      }
      res.cells.push_back({n, dist, "conv", 0, error(conv), conv_error_bound(n, sum_abs),
                           expected_conv_bound(n, dist)});
      for (const int L : opt.levels) {
        RSumState64 st(default_params<double>(L));
        st.add_lanes(values);
        res.cells.push_back({n, dist, "rsum", L, error(st.finalize()),
                             rsum_error_bound(n, mx, L, kDefaultWidth<double>), expected_rsum_bound(n, dist, L)});
      }
    }
  }
  for (const auto& c : res.cells) {
    Row row;
    row.command = "accuracy";
    row.precision = "double";
    row.kind = c.method;
    row.levels = c.levels ? str(c.levels) : "";
    row.dist = to_string(c.dist);
    row.n = str(c.n);
    row.n_groups = "1";
    row.max_abs_error = fmt_num(c.measured_error);
    row.bound = fmt_num(c.bound);
    row.bits_match = c.measured_error <= c.bound ? "true" : "false";  // within bound
    char buf[64];
    std::snprintf(buf, sizeof buf, "expected_bound=%.2g", c.table_bound);
    row.note = buf;
    res.rows.push_back(std::move(row));
  }
  return res;
}

// ---------------------------------------------------------------------------

SumSweepResult cmd_sum_sweep(const SumSweepOptions& opt) {
  return with_precision(opt.precision, [&]<class T>() {
    const std::vector<T> values = generate<T>({opt.n, 1, opt.dist, opt.seed}).values;
    RSumParams params = default_params<T>(opt.levels);
    const LaneConfig lanes = lanes_or_default<T>(opt.lanes);
    params.lanes = lanes.lanes;
    params.block = lanes.block;
    params.validate();
    const std::size_t n = values.size();

    SumSweepResult res;
    auto base_row = [&](const char* kind) {
      Row r;
      r.command = "sum-sweep";
      r.precision = to_string(opt.precision);
      r.kind = kind;
      r.dist = to_string(opt.dist);
      r.n = str(std::uint64_t{n});
      r.n_groups = "1";
      return r;
    };

    volatile T sink = 0;
    const Timing conv = time_trials(opt.trials, [&] {
      T s = 0;
      for (const T v : values) s += v;
      sink = s;
    });
    {
      Row r = base_row("conv");
      r.wall_ns = fmt_num(std::round(conv.mean_ns));
      r.wall_rsd = fmt_num(conv.rsd);
      r.cpu_ns_per_elem = fmt_num(conv.mean_ns / static_cast<double>(std::max<std::size_t>(n, 1)));
      r.slowdown = "1";
      res.rows.push_back(std::move(r));
    }

    RSumState<NativeArith<T>> ref_state(params);
    ref_state.add_scalar(values);
    const T ref = ref_state.finalize();

    for (const std::uint64_t c0 : opt.chunks) {
      const std::size_t c = c0 == 0 ? std::max<std::size_t>(n, 1) : static_cast<std::size_t>(c0);
      for (const bool lane_path : {false, true}) {
        T result = 0;
        const Timing t = time_trials(opt.trials, [&] {
          RSumState<NativeArith<T>> st(params);
          for (std::size_t i = 0; i < n; i += c) {
            const std::span<const T> chunk(values.data() + i, std::min(c, n - i));
            if (lane_path)
              st.add_lanes(chunk);
            else
              st.add_scalar(chunk);
          }
          result = st.finalize();
        });
        const bool match = same_bits(result, ref);
        if (!match) throw std::runtime_error("sum-sweep: result bits differ from the scalar reference");
        Row r = base_row(lane_path ? "rsum-lanes" : "rsum-scalar");
        r.levels = str(params.levels);
        if (lane_path) {
          r.lanes = str(params.lanes);
          r.block = str(params.block);
        }
        r.chunk = c0 == 0 ? "all" : str(c0);
        r.wall_ns = fmt_num(std::round(t.mean_ns));
        r.wall_rsd = fmt_num(t.rsd);
        r.cpu_ns_per_elem = fmt_num(t.mean_ns / static_cast<double>(std::max<std::size_t>(n, 1)));
        r.slowdown = fmt_num(conv.mean_ns > 0 ? t.mean_ns / conv.mean_ns : 0.0);
        r.bits_match = match ? "true" : "false";
        res.rows.push_back(std::move(r));
      }
    }
    return res;
  });
}

// ---------------------------------------------------------------------------

AggSweepResult cmd_agg_sweep(const AggSweepOptions& opt) {
  return with_precision(opt.precision, [&]<class T>() {
    AggSweepResult res;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes;  // (n, n_groups)
    for (const std::uint64_t g : opt.groups) {
      if (opt.ratios.empty())
        shapes.emplace_back(opt.n, g);
      else
        for (const std::uint64_t r : opt.ratios) shapes.emplace_back(g * r, g);
    }
    const bool any_repro = std::any_of(opt.kinds.begin(), opt.kinds.end(), is_reproducible);
    std::map<std::string, std::vector<double>> kind_slowdowns;

    for (const auto& [n, g] : shapes) {
      const Workload<T> w = generate<T>({n, g, opt.dist, opt.seed});
      AggregateResult<T> ref;
      if (any_repro) {
        AggConfig rc;
        rc.kind = AccumulatorKind::repro;
        rc.levels = opt.levels;
        rc.expected_groups = g;
        ref = partition_and_aggregate<T>(w.keys, w.values, rc);
      }
      const std::size_t first_cell = res.cells.size();

      for (const AccumulatorKind kind : opt.kinds) {
        std::vector<int> depths;
        for (int d : opt.depths) {
          if (d < 0) d = choose_depth(g, depth_thresholds_for(kind));
          if (std::find(depths.begin(), depths.end(), d) == depths.end()) depths.push_back(d);
        }
        for (const int d : depths) {
          AggConfig cfg;
          cfg.kind = kind;
          cfg.levels = opt.levels;
          cfg.lanes = opt.lanes;
          cfg.threads = opt.threads;
          cfg.depth = d;
          cfg.expected_groups = g;
          cfg.policy = opt.policy;
          std::vector<std::pair<std::size_t, bool>> bszs;  // (bsz, from model)
          if (kind == AccumulatorKind::buffered) {
            for (const std::size_t b : opt.bszs) {
              AggConfig probe = cfg;
              probe.bsz = b;
              const std::size_t v = resolved_buffer_size<T>(probe);
              auto it = std::find_if(bszs.begin(), bszs.end(), [&](const auto& e) { return e.first == v; });
              if (it == bszs.end())
                bszs.emplace_back(v, b == 0);
              else
                it->second |= b == 0;
            }
          } else {
            bszs.emplace_back(0, false);
          }
          for (const auto& [bsz, model] : bszs) {
            cfg.bsz = bsz;
            AggregateResult<T> out = partition_and_aggregate<T>(w.keys, w.values, cfg);
            if (is_reproducible(kind) && !out.bits_equal(ref))
              throw std::runtime_error(std::string("agg-sweep: ") + to_string(kind) +
                                       " output differs from the single-threaded reference");
            const Timing t = time_trials(opt.trials, [&] { out = partition_and_aggregate<T>(w.keys, w.values, cfg); });
            AggCell cell;
            cell.n = n;
            cell.n_groups = g;
            cell.kind = kind;
            cell.depth = d;
            cell.bsz = bsz;
            cell.model_bsz = model;
            cell.timing = t;
            cell.cpu_ns_per_elem = t.mean_ns * opt.threads / static_cast<double>(std::max<std::uint64_t>(n, 1));
            res.cells.push_back(cell);
          }
        }
      }

      // Slowdowns against the fastest plain configuration of this shape.
      double plain_best = std::numeric_limits<double>::infinity();
      std::map<AccumulatorKind, double> best;
      for (std::size_t i = first_cell; i < res.cells.size(); ++i) {
        const auto& c = res.cells[i];
        if (c.kind == AccumulatorKind::plain) plain_best = std::min(plain_best, c.timing.mean_ns);
        auto [it, fresh] = best.emplace(c.kind, c.timing.mean_ns);
        if (!fresh) it->second = std::min(it->second, c.timing.mean_ns);
      }
      if (std::isfinite(plain_best))
        for (const auto& [k, t] : best) kind_slowdowns[to_string(k)].push_back(t / plain_best);

      // Buffer size model: compare the model's bsz to the best swept bsz per depth.
      std::map<int, std::pair<double, double>> by_depth;  // depth -> (best, model)
      std::map<int, int> sweep_size;
      for (std::size_t i = first_cell; i < res.cells.size(); ++i) {
        const auto& c = res.cells[i];
        if (c.kind != AccumulatorKind::buffered) continue;
        auto& e = by_depth.try_emplace(c.depth, std::numeric_limits<double>::infinity(), -1.0).first->second;
        e.first = std::min(e.first, c.timing.mean_ns);
        if (c.model_bsz) e.second = c.timing.mean_ns;
        ++sweep_size[c.depth];
      }
      for (const auto& [d, e] : by_depth) {
        if (e.second < 0 || sweep_size[d] < 2) continue;
        ++res.model_cells;
        if (e.second <= 1.2 * e.first) ++res.model_within;
      }

      for (std::size_t i = first_cell; i < res.cells.size(); ++i) {
        const auto& c = res.cells[i];
        Row r;
        r.command = "agg-sweep";
        r.precision = to_string(opt.precision);
        r.kind = to_string(c.kind);
        if (is_reproducible(c.kind)) r.levels = str(opt.levels);
        if (c.kind == AccumulatorKind::buffered) {
          const LaneConfig l = lanes_or_default<T>(opt.lanes);
          r.lanes = str(l.lanes);
          r.block = str(l.block);
          r.bsz = str(std::uint64_t{c.bsz});
        }
        r.depth = str(c.depth);
        r.threads = str(opt.threads);
        r.dist = to_string(opt.dist);
        r.n = str(c.n);
        r.n_groups = str(c.n_groups);
        r.wall_ns = fmt_num(std::round(c.timing.mean_ns));
        r.wall_rsd = fmt_num(c.timing.rsd);
        r.cpu_ns_per_elem = fmt_num(c.cpu_ns_per_elem);
        if (std::isfinite(plain_best)) r.slowdown = fmt_num(c.timing.mean_ns / plain_best);
        r.bits_match = is_reproducible(c.kind) ? "true" : "";
        if (c.model_bsz) r.note = "model_bsz";
        res.rows.push_back(std::move(r));
      }
    }

    for (const auto& [k, v] : kind_slowdowns) {
      double log_sum = 0;
      for (const double s : v) log_sum += std::log(s);
      const double gm = std::exp(log_sum / static_cast<double>(v.size()));
      res.geomean_slowdown[k] = gm;
      Row r;
      r.command = "agg-summary";
      r.precision = to_string(opt.precision);
      r.kind = k;
      r.threads = str(opt.threads);
      r.slowdown = fmt_num(gm);
      r.note = "geomean of best-config slowdown vs plain over " + std::to_string(v.size()) + " shapes";
      res.rows.push_back(std::move(r));
    }
    if (res.model_cells > 0) {
      Row r;
      r.command = "agg-summary";
      r.precision = to_string(opt.precision);
      r.kind = "buffered";
      r.note = "model_bsz_within_20pct=" + std::to_string(res.model_within) + "/" + std::to_string(res.model_cells);
      res.rows.push_back(std::move(r));
    }
    return res;
  });
}

}  // namespace repro::bench
