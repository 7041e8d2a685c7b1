#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cachelab/analysis.hpp"
#include "cachelab/config.hpp"
#include "cachelab/emulator.hpp"
#include "cachelab/funnel.hpp"
#include "cachelab/io_sort.hpp"
#include "cachelab/machine.hpp"
#include "cachelab/merge.hpp"
#include "cachelab/report.hpp"
#include "cachelab/trace.hpp"
#include "cachelab/transpose.hpp"

namespace cachelab {

// A finished experiment: the result table plus whether every assertion the
// suite checks came out true. The CLI maps ok=false to a nonzero exit.
struct ExperimentResult {
  Report report;
  bool ok = true;
};

namespace detail {

inline std::vector<Word> random_words(std::uint64_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Word> v(n);
  for (auto& w : v) w = static_cast<Word>(rng() % (std::uint64_t{1} << 40));
  return v;
}

inline std::string u64s(std::uint64_t v) { return std::to_string(v); }

}  // namespace detail

// Replays a memory trace through the configured hierarchy. One row per
// level with its classified misses and latency contribution, then a total
// row whose cost adds one unit op per event.
inline Report simulate_trace_report(const Config& cfg, std::istream& trace,
                                    std::uint64_t seed) {
  HierarchySpec h = cfg.hierarchy();
  const auto events = parse_trace(trace);
  CacheHierarchy cache(h);
  const RunStats st = replay_trace(cache, events);
  Report rep;
  rep.experiment = "simulate-trace";
  rep.echo("events", detail::u64s(events.size()));
  const auto levels = cfg.level_echo();
  for (std::size_t i = 0; i < levels.size(); ++i)
    rep.echo("level" + std::to_string(i + 1), levels[i]);
  rep.columns = {"level",    "seed",     "hits",     "misses",
                 "compulsory", "capacity", "conflict", "cost"};
  LevelStats total;
  for (std::size_t i = 0; i < st.levels.size(); ++i) {
    const auto& lv = st.levels[i];
    total += lv;
    rep.add_row({std::string("L") + std::to_string(i + 1), seed, lv.hits, lv.misses,
                 lv.compulsory, lv.capacity, lv.conflict,
                 h.levels[i].latency * lv.misses});
  }
  rep.add_row({std::string("total"), seed, total.hits, total.misses, total.compulsory,
               total.capacity, total.conflict, st.cost});
  return rep;
}

// Sorts through the block-transfer machine and through its cache emulation,
// then checks the emulated cost against the envelope
// compute + 4*latency*transfers + 2*block*transfers.
inline ExperimentResult experiment_emulation_bound(const Config& cfg, std::uint64_t seed,
                                                   std::uint64_t trials) {
  const std::uint64_t n = cfg.u64("n", std::uint64_t{1} << 16);
  const std::uint64_t m = cfg.u64("m", std::uint64_t{1} << 10);
  const std::uint64_t b = cfg.u64("b", std::uint64_t{1} << 4);
  const std::uint64_t latency = cfg.u64("latency", 50);
  const std::uint64_t runs = trials != 0 ? trials : 10;
  ExperimentResult res;
  Report& rep = res.report;
  rep.experiment = "emulation-bound";
  rep.echo("n", detail::u64s(n));
  rep.echo("m", detail::u64s(m));
  rep.echo("b", detail::u64s(b));
  rep.echo("latency", detail::u64s(latency));
  rep.echo("seed", detail::u64s(seed));
  rep.echo("trials", detail::u64s(runs));
  rep.columns = {"seed",     "transfers", "compute", "emulated_cost",
                 "envelope", "ratio",     "exact",   "within"};
  IoParams io{m, b};
  io.validate();
  const std::uint64_t degree = io.frames() - 2;
  for (std::uint64_t i = 0; i < runs; ++i) {
    const std::uint64_t s = seed + i;
    const auto input = detail::random_words(n, s);
    const auto prog = mergesort_io(n, io, degree);
    auto [io_mem, io_stats] = run_io(prog, io, input);
    auto emu = emulate(prog, io, HierarchySpec::single(m, b, 1, latency), input);
    const std::uint64_t envelope =
        io_stats.touches + 4 * latency * io_stats.transfers + 2 * b * io_stats.transfers;
    auto sorted = input;
    std::sort(sorted.begin(), sorted.end());
    const bool exact = std::equal(sorted.begin(), sorted.end(), io_mem.begin()) &&
                       std::equal(io_mem.begin(), io_mem.begin() + n, emu.mem.begin());
    const bool within = emu.stats.cost <= envelope;
    res.ok = res.ok && within && exact;
    rep.add_row({s, io_stats.transfers, io_stats.touches, emu.stats.cost, envelope,
                 static_cast<double>(emu.stats.cost) / static_cast<double>(envelope),
                 std::uint64_t{exact}, std::uint64_t{within}});
  }
  return res;
}

// Conflict-miss fraction of the direct k-way merge in two regimes: as many
// runs as sets (fractions sit above the guaranteed floor) and runs scarce
// relative to sets (fractions near zero).
inline ExperimentResult experiment_mergesort_conflict(const Config& cfg, std::uint64_t seed,
                                                      std::uint64_t trials) {
  const std::uint64_t n = cfg.u64("n", std::uint64_t{1} << 18);
  const std::uint64_t k = cfg.u64("k", 128);
  const std::uint64_t s = cfg.u64("s", 128);
  const std::uint64_t b = cfg.u64("b", 8);
  const std::uint64_t k2 = cfg.u64("k_scarce", 2);
  const std::uint64_t s2 = cfg.u64("s_scarce", 1024);
  const std::uint64_t runs = trials != 0 ? trials : 10;
  const std::uint64_t runs2 = cfg.u64("scarce_trials", 3);
  ExperimentResult res;
  Report& rep = res.report;
  rep.experiment = "mergesort-conflict";
  rep.echo("n", detail::u64s(n));
  rep.echo("seed", detail::u64s(seed));
  rep.echo("trials", detail::u64s(runs));
  rep.columns = {"regime", "seed", "n", "k", "s", "b", "fraction", "bound", "ratio"};
  const double floor = conflict_fraction_floor(static_cast<double>(k), static_cast<double>(s));
  std::vector<double> random_fracs;
  for (std::uint64_t i = 0; i < runs; ++i) {
    const double f = conflict_experiment(n, k, s, b, 1, seed + i).estimate;
    random_fracs.push_back(f);
    rep.add_row({std::string("random"), seed + i, n, k, s, b, f, floor, f / floor});
  }
  const McResult summary = detail::summarize(random_fracs, seed);
  res.ok = res.ok && summary.estimate >= floor - 3.0 * summary.std_error;
  const double scarce_cap = 0.02;
  std::vector<double> scarce_fracs;
  for (std::uint64_t i = 0; i < runs2; ++i) {
    const double f = conflict_experiment(n, k2, s2, b, 1, seed + 1000 + i).estimate;
    scarce_fracs.push_back(f);
    rep.add_row(
        {std::string("scarce"), seed + 1000 + i, n, k2, s2, b, f, scarce_cap, f / scarce_cap});
  }
  const McResult scarce = detail::summarize(scarce_fracs, seed);
  res.ok = res.ok && scarce.estimate <= scarce_cap;
  return res;
}

// Cache-oblivious sort across a range of input sizes: the miss count divided
// by (n/B) log(n/B) / log(M/B) must stay flat, and conflict misses while the
// top merger drains must stay inside twice their expectation.
inline ExperimentResult experiment_funnel_scaling(const Config& cfg, std::uint64_t seed,
                                                  std::uint64_t trials) {
  const std::uint64_t cap = cfg.u64("capacity", std::uint64_t{1} << 15);
  const std::uint64_t b = cfg.u64("block", std::uint64_t{1} << 5);
  const std::uint64_t latency = cfg.u64("latency", 50);
  const std::uint64_t n_min = cfg.u64("n_min", std::uint64_t{1} << 16);
  const std::uint64_t n_max = cfg.u64("n_max", std::uint64_t{1} << 19);
  const std::uint64_t seeds = trials != 0 ? trials : 3;
  const std::uint64_t budget_n = cfg.u64("budget_n", std::uint64_t{1} << 18);
  ExperimentResult res;
  Report& rep = res.report;
  rep.experiment = "funnel-scaling";
  rep.echo("capacity", detail::u64s(cap));
  rep.echo("block", detail::u64s(b));
  rep.echo("seed", detail::u64s(seed));
  rep.echo("trials", detail::u64s(seeds));
  rep.columns = {"n",     "seed",      "misses",        "scaling_denominator", "ratio",
                 "exact", "conflicts", "top_conflicts", "top_budget"};
  const double lines = static_cast<double>(cap) / static_cast<double>(b);
  std::vector<double> per_n_ratio;
  double budget_top_mean = -1.0, budget_value = 0.0;
  for (std::uint64_t n = n_min; n <= n_max; n *= 2) {
    double ratio_sum = 0.0, top_sum = 0.0;
    const double nn = static_cast<double>(n);
    const double denom = (nn / b) * std::log2(nn / b) /
                         std::log2(static_cast<double>(cap) / static_cast<double>(b));
    const double budget = 2.0 * funnel_conflict_budget(nn, lines);
    for (std::uint64_t i = 0; i < seeds; ++i) {
      Machine mm(HierarchySpec::single(cap, b, 1, latency));
      const auto input = detail::random_words(n, seed + i);
      auto fr = funnel_sort(mm, input, seed + i);
      auto sorted = input;
      std::sort(sorted.begin(), sorted.end());
      const bool exact = fr.output == sorted;
      res.ok = res.ok && exact;
      const auto& l1 = fr.stats.levels[0];
      const double ratio = static_cast<double>(l1.misses) / denom;
      ratio_sum += ratio;
      top_sum += static_cast<double>(fr.metrics.top_merge_conflicts);
      rep.add_row({n, seed + i, l1.misses, denom, ratio, std::uint64_t{exact}, l1.conflict,
                   fr.metrics.top_merge_conflicts, budget});
    }
    per_n_ratio.push_back(ratio_sum / static_cast<double>(seeds));
    if (n == budget_n) {
      budget_top_mean = top_sum / static_cast<double>(seeds);
      budget_value = budget;
    }
  }
  const auto [lo, hi] = std::minmax_element(per_n_ratio.begin(), per_n_ratio.end());
  res.ok = res.ok && *hi <= 1.25 * *lo;
  if (budget_top_mean >= 0.0) res.ok = res.ok && budget_top_mean <= budget_value;
  return res;
}

// Block-staged transpose against its cost ladder, with the in-staging phase
// expected conflict-free on the square batch-aligned shapes.
inline ExperimentResult experiment_transpose_cost(const Config& cfg, std::uint64_t seed,
                                                  std::uint64_t trials) {
  const std::uint64_t n = cfg.u64("n", 512);
  const std::uint64_t runs = trials != 0 ? trials : 1;
  HierarchySpec h;
  if (cfg.level_count() > 0) {
    h = cfg.hierarchy();
  } else {
    h.levels.push_back({512, 8, 1, 10});
    h.levels.push_back({4096, 32, 1, 100});
    h.validate();
  }
  ExperimentResult res;
  Report& rep = res.report;
  rep.experiment = "transpose-cost";
  rep.echo("n", detail::u64s(n));
  rep.echo("seed", detail::u64s(seed));
  rep.columns = {"shape", "seed",            "words", "cost", "bound",
                 "ratio", "inner_conflicts", "exact"};
  std::vector<BoundLevel> bl;
  for (const auto& lv : h.levels)
    bl.push_back({static_cast<double>(lv.capacity), static_cast<double>(lv.block),
                  static_cast<double>(lv.latency)});
  const auto ladder_bound = [&bl](std::uint64_t words) {
    double v = 4.0 * static_cast<double>(words);
    for (const auto& lv : bl) v += 7.0 * (static_cast<double>(words) / lv.block) * lv.latency;
    return v;
  };
  const auto transposed = [](const std::vector<Word>& v, std::uint64_t rows,
                             std::uint64_t cols) {
    std::vector<Word> t(v.size());
    for (std::uint64_t i = 0; i < rows; ++i)
      for (std::uint64_t j = 0; j < cols; ++j) t[j * rows + i] = v[i * cols + j];
    return t;
  };
  const auto run_case = [&](const std::string& shape, std::uint64_t rows, std::uint64_t cols,
                            bool in_place, bool require_clean, std::uint64_t s) {
    Machine mm(h);
    Matrix a = allocate_matrix(mm, rows, cols, "a");
    const auto vals = detail::random_words(rows * cols, s);
    fill_matrix(mm, a, vals);
    Matrix out = in_place ? a : allocate_matrix(mm, cols, rows, "t");
    const auto tr = transpose_multilevel(mm, a, out);
    const bool exact = matrix_values(mm, out) == transposed(vals, rows, cols);
    const std::uint64_t words = rows * cols;
    const double bound = ladder_bound(words);
    const bool within = static_cast<double>(tr.stats.cost) <= bound;
    res.ok = res.ok && exact && within &&
             (!require_clean || tr.inner_staging_conflicts == 0);
    rep.add_row({shape, s, words, tr.stats.cost, bound,
                 static_cast<double>(tr.stats.cost) / bound, tr.inner_staging_conflicts,
                 std::uint64_t{exact}});
  };
  for (std::uint64_t i = 0; i < runs; ++i) {
    const std::uint64_t s = seed + i;
    run_case("out-" + detail::u64s(n) + "x" + detail::u64s(n), n, n, false, true, s);
    run_case("in-128x128", 128, 128, true, true, s);
    run_case("rect-96x64", 96, 64, false, false, s);
  }
  return res;
}

// Balls-into-bins grid: Monte Carlo occupancy against the closed forms.
inline ExperimentResult experiment_occupancy(const Config& cfg, std::uint64_t seed,
                                             std::uint64_t trials) {
  const std::uint64_t per_cell = trials != 0 ? trials : 10000;
  (void)cfg;
  ExperimentResult res;
  Report& rep = res.report;
  rep.experiment = "occupancy";
  rep.echo("seed", detail::u64s(seed));
  rep.echo("trials", detail::u64s(per_cell));
  rep.columns = {"k",     "m",      "trials", "seed",  "estimate",
                 "std_error", "exact", "approx", "within"};
  std::uint64_t cell = 0;
  for (std::uint64_t k : {16, 64, 256}) {
    for (std::uint64_t m : {k / 2, k, 2 * k}) {
      const std::uint64_t cell_seed = seed + 97 * cell++;
      const auto r = monte_carlo_occupancy(m, k, per_cell, cell_seed);
      const double exact =
          occupancy_expect_exact(static_cast<double>(m), static_cast<double>(k));
      const double approx = occupancy_expect(static_cast<double>(m), static_cast<double>(k));
      const bool within = std::abs(r.estimate - exact) <= 4.0 * r.std_error;
      res.ok = res.ok && within;
      rep.add_row({k, m, per_cell, cell_seed, r.estimate, r.std_error, exact, approx,
                   std::uint64_t{within}});
    }
  }
  return res;
}

// No-conflict probability: truncated series against its closed-form cap,
// plus a direct Monte Carlo of the survival event.
inline ExperimentResult experiment_conflict_bound(const Config& cfg, std::uint64_t seed,
                                                  std::uint64_t trials) {
  const std::uint64_t k = cfg.u64("k", 128);
  const std::uint64_t s = cfg.u64("s", 128);
  const std::uint64_t s_narrow = cfg.u64("s_narrow", 32);
  const std::uint64_t b = cfg.u64("b", 8);
  const std::uint64_t mc = trials != 0 ? trials : 20000;
  ExperimentResult res;
  Report& rep = res.report;
  rep.experiment = "conflict-bound";
  rep.echo("seed", detail::u64s(seed));
  rep.echo("trials", detail::u64s(mc));
  rep.columns = {"k",   "s",           "b",            "series",    "cap",
                 "floor", "e1_estimate", "e1_std_error", "e1_trials", "seed", "within"};
  std::uint64_t row = 0;
  for (std::uint64_t sets : {s, s_narrow}) {
    const auto cb = conflict_bound_eval(k, sets);
    const auto e1 = monte_carlo_e1(k, sets, b, mc, seed + row++);
    const bool within =
        cb.sum <= cb.cap + 1e-6 && e1.estimate <= cb.cap + 3.0 * e1.std_error;
    res.ok = res.ok && within;
    rep.add_row({k, sets, b, cb.sum, cb.cap,
                 conflict_fraction_floor(static_cast<double>(k), static_cast<double>(sets)),
                 e1.estimate, e1.std_error, mc, e1.seed, std::uint64_t{within}});
  }
  return res;
}

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {
      "emulation-bound", "mergesort-conflict", "funnel-scaling",
      "transpose-cost",  "occupancy",          "conflict-bound"};
  return names;
}

inline ExperimentResult run_experiment(const std::string& name, const Config& cfg,
                                       std::uint64_t seed, std::uint64_t trials) {
  if (name == "emulation-bound") return experiment_emulation_bound(cfg, seed, trials);
  if (name == "mergesort-conflict") return experiment_mergesort_conflict(cfg, seed, trials);
  if (name == "funnel-scaling") return experiment_funnel_scaling(cfg, seed, trials);
  if (name == "transpose-cost") return experiment_transpose_cost(cfg, seed, trials);
  if (name == "occupancy") return experiment_occupancy(cfg, seed, trials);
  if (name == "conflict-bound") return experiment_conflict_bound(cfg, seed, trials);
  std::string valid;
  for (const auto& n : experiment_names()) {
    if (!valid.empty()) valid += ", ";
    valid += n;
  }
  throw ConfigError("unknown experiment '" + name + "' (valid: " + valid + ")");
}

}  // namespace cachelab
