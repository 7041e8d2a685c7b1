#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cachelab/machine.hpp"
#include "cachelab/merge.hpp"

namespace cachelab {

struct AnalysisError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Monte Carlo summary: mean over trials plus the standard error of that mean
// (sample standard deviation / sqrt(trials)).
struct McResult {
  double estimate = 0.0;
  double std_error = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline McResult summarize(const std::vector<double>& xs, std::uint64_t seed) {
  McResult r;
  r.trials = xs.size();
  r.seed = seed;
  if (xs.empty()) return r;
  double sum = 0.0;
  for (double x : xs) sum += x;
  r.estimate = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.estimate) * (x - r.estimate);
    const double var = ss / static_cast<double>(xs.size() - 1);
    r.std_error = std::sqrt(var / static_cast<double>(xs.size()));
  }
  return r;
}

}  // namespace detail

// One level as the bound formulas see it: capacity and block in words,
// latency charged per miss. Doubles keep the evaluators exact on powers of
// two and tolerant everywhere else.
struct BoundLevel {
  double capacity = 0.0;
  double block = 0.0;
  double latency = 0.0;
};

struct BoundInputs {
  double n = 0.0;
  std::vector<BoundLevel> levels;  // fastest first
};

// Least possible step count for comparison sorting through one cache level:
// the in-core comparison term plus latency times the minimum block-transfer
// count. Constant factor 1 throughout; these values exist to sit under
// measured/bound ratios, not to be absolute predictions.
inline double sort_lower_bound_single(double n, double m, double b, double l) {
  if (!(b >= 1.0)) throw AnalysisError("sort bound: block below one word");
  if (!(n > b)) throw AnalysisError("sort bound: input must exceed one block");
  if (!(m > b)) throw AnalysisError("sort bound: memory must exceed one block");
  const double compares = n * std::log2(n);
  const double transfers = (n / b) * std::log2(n / b) / std::log2(m / b);
  return compares + l * transfers;
}

enum class SortBound { kRestricted, kGeneral, kGeometric };

// Same bound through a hierarchy. kRestricted charges each level in
// isolation. kGeneral subtracts from each level the transfers the slower
// levels already force, since a slow-level transfer drags its words through
// every faster level too. kGeometric is the halved restricted sum that the
// subtraction collapses to once capacities and blocks both grow by at least
// 3x per level; with a single level nothing is subtracted, so that case
// keeps the full restricted value.
inline double sort_lower_bound_multilevel(const BoundInputs& in, SortBound variant) {
  if (in.levels.empty()) throw AnalysisError("sort bound: no levels");
  const std::size_t k = in.levels.size();
  std::vector<double> transfers(k);
  std::vector<double> cum(k);
  double c = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& lv = in.levels[i];
    if (!(lv.block >= 1.0)) throw AnalysisError("sort bound: block below one word");
    if (!(in.n > lv.block)) throw AnalysisError("sort bound: input must exceed one block");
    c += lv.capacity;
    cum[i] = c;
    if (!(c > lv.block)) throw AnalysisError("sort bound: capacity must exceed one block");
    transfers[i] = (in.n / lv.block) * std::log2(in.n / lv.block) / std::log2(c / lv.block);
  }
  if (variant == SortBound::kGeometric) {
    for (std::size_t i = 1; i < k; ++i) {
      const double block_ratio = in.levels[i].block / in.levels[i - 1].block;
      const double cap_ratio = cum[i] / cum[i - 1];
      if (!(block_ratio >= 3.0) || !(cap_ratio >= block_ratio))
        throw AnalysisError("sort bound: hierarchy not geometrically graded");
    }
  }
  double value = in.n * std::log2(in.n);
  switch (variant) {
    case SortBound::kRestricted:
      for (std::size_t i = 0; i < k; ++i) value += in.levels[i].latency * transfers[i];
      break;
    case SortBound::kGeneral: {
      double slower = 0.0;  // transfers already forced by levels beyond i
      for (std::size_t i = k; i-- > 0;) {
        value += in.levels[i].latency * (transfers[i] - slower);
        slower += transfers[i];
      }
      break;
    }
    case SortBound::kGeometric: {
      const double scale = k == 1 ? 1.0 : 0.5;
      for (std::size_t i = 0; i < k; ++i)
        value += scale * in.levels[i].latency * transfers[i];
      break;
    }
  }
  return value;
}

// Every word of an n-by-n matrix crosses each level at least once during a
// transpose, so the cost is at least n^2/B_i transfers per level.
inline double transpose_scan_bound(double n, const std::vector<BoundLevel>& levels) {
  if (levels.empty()) throw AnalysisError("scan bound: no levels");
  double v = 0.0;
  for (const auto& lv : levels) {
    if (!(lv.block >= 1.0)) throw AnalysisError("scan bound: block below one word");
    v += (n * n / lv.block) * lv.latency;
  }
  return v;
}

// Expected non-empty bins after m balls land uniformly in k bins.
inline double occupancy_expect(double m, double k) {
  if (!(k >= 1.0)) throw AnalysisError("occupancy: need at least one bin");
  if (m < 0.0) throw AnalysisError("occupancy: negative ball count");
  return k * (1.0 - std::exp(-m / k));
}

// Exact form of the same expectation.
inline double occupancy_expect_exact(double m, double k) {
  if (!(k >= 1.0)) throw AnalysisError("occupancy: need at least one bin");
  if (m < 0.0) throw AnalysisError("occupancy: negative ball count");
  return k * (1.0 - std::pow(1.0 - 1.0 / k, m));
}

inline McResult monte_carlo_occupancy(std::uint64_t m, std::uint64_t k, std::uint64_t trials,
                                      std::uint64_t seed) {
  if (k == 0) throw AnalysisError("occupancy: need at least one bin");
  if (trials < 100) throw AnalysisError("occupancy: too few trials for a standard error");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> bin(0, k - 1);
  std::vector<std::uint64_t> stamp(k, 0);
  std::vector<double> xs(trials);
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::uint64_t nz = 0;
    for (std::uint64_t i = 0; i < m; ++i) {
      const std::uint64_t j = bin(rng);
      if (stamp[j] != t + 1) {
        stamp[j] = t + 1;
        ++nz;
      }
    }
    xs[t] = static_cast<double>(nz);
  }
  return detail::summarize(xs, seed);
}

// Guaranteed long-run conflict fraction for a k-way merge through s sets
// with randomized placements: one minus the no-conflict cap below.
inline double conflict_fraction_floor(double k, double s) {
  return 0.25 * (1.0 - std::exp(-0.25 * k / s));
}

struct ConflictBound {
  double sum = 0.0;  // truncated series for the no-conflict probability
  double cap = 0.0;  // closed form 0.75 + 0.25 exp(-k/4s), needs k > 100
};

// Series for the probability that a run's leading block survives until its
// next use: gap length geometric with mean k, and for a gap of m the other
// leading blocks spare the watched set with probability at most
// (1 - 1/s)^occupied. The occupied-bin count is replaced by its exact
// expectation shifted down by the concentration deviation
// alpha*sqrt(2 k ln k) (failure mass 1/k^alpha, alpha = 2), and each term is
// clamped at 1 because the spared-set probability never exceeds 1.
inline ConflictBound conflict_bound_eval(std::uint64_t k, std::uint64_t s,
                                         std::uint64_t m_max = 0) {
  if (k <= 100) throw AnalysisError("conflict bound: closed-form cap needs k > 100");
  if (s == 0) throw AnalysisError("conflict bound: no cache sets");
  if (m_max == 0) m_max = 50 * k;
  const double kk = static_cast<double>(k);
  const double ss = static_cast<double>(s);
  const double q = 1.0 - 1.0 / kk;
  if (std::pow(q, static_cast<double>(m_max + 1)) >= 1e-9)
    throw AnalysisError("conflict bound: truncation tail above 1e-9");
  const double alpha = 2.0;
  const double dev = alpha * std::sqrt(2.0 * kk * std::log(kk));
  const double escape = 1.0 - 1.0 / ss;
  const double failure = std::pow(kk, -alpha) * escape;
  const double bins = kk - 1.0;
  double weight = 1.0 / kk;  // (1/k) q^m
  double empty = 1.0;        // (1 - 1/bins)^m
  double sum = 0.0;
  for (std::uint64_t m = 0; m <= m_max; ++m) {
    const double occupied = bins * (1.0 - empty);
    sum += weight * std::min(1.0, failure + std::pow(escape, occupied - dev));
    weight *= q;
    empty *= 1.0 - 1.0 / bins;
  }
  ConflictBound out;
  out.sum = sum;
  out.cap = 0.75 + 0.25 * std::exp(-0.25 * kk / ss);
  if (out.sum > out.cap + 1e-6)
    throw AnalysisError("conflict bound: series exceeded its cap");
  return out;
}

// Samples the survive-until-next-use event directly: draw the geometric gap,
// deal the gap across the other k-1 runs, give every touched run a uniform
// leading set and a uniform intra-block start, and check whether any run's
// block walk crosses the watched set. Estimates the same probability the
// series above bounds from above.
inline McResult monte_carlo_e1(std::uint64_t k, std::uint64_t s, std::uint64_t b,
                               std::uint64_t trials, std::uint64_t seed) {
  if (k < 2) throw AnalysisError("survival estimate: need at least two runs");
  if (s == 0 || b == 0) throw AnalysisError("survival estimate: degenerate cache");
  if (trials < 100) throw AnalysisError("survival estimate: too few trials");
  std::mt19937_64 rng(seed);
  std::geometric_distribution<std::uint64_t> gap(1.0 / static_cast<double>(k));
  std::uniform_int_distribution<std::uint64_t> pick_run(0, k - 2);
  std::uniform_int_distribution<std::uint64_t> pick_set(0, s - 1);
  std::uniform_int_distribution<std::uint64_t> pick_off(0, b - 1);
  std::vector<std::uint64_t> count(k - 1, 0);
  std::vector<std::uint64_t> touched;
  std::vector<double> xs(trials);
  for (std::uint64_t t = 0; t < trials; ++t) {
    const std::uint64_t m = gap(rng);
    touched.clear();
    for (std::uint64_t i = 0; i < m; ++i) {
      const std::uint64_t j = pick_run(rng);
      if (count[j]++ == 0) touched.push_back(j);
    }
    const std::uint64_t watched = pick_set(rng);
    bool survives = true;
    for (std::uint64_t j : touched) {
      const std::uint64_t mj = count[j];
      count[j] = 0;
      if (!survives) continue;
      const std::uint64_t lead = pick_set(rng);
      const std::uint64_t walk = 1 + (pick_off(rng) + mj - 1) / b;
      if ((watched + s - lead) % s < walk) survives = false;
    }
    xs[t] = survives ? 1.0 : 0.0;
  }
  return detail::summarize(xs, seed);
}

// Splits 1..n across k runs, each value choosing its run independently and
// uniformly. Runs come out sorted and together partition the sequence.
inline std::vector<std::vector<Word>> deal_runs(std::uint64_t n, std::uint64_t k,
                                                std::uint64_t seed) {
  if (k < 2) throw AnalysisError("deal: need at least two runs");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> pick(0, k - 1);
  std::vector<std::vector<Word>> runs(k);
  for (std::uint64_t v = 1; v <= n; ++v) runs[pick(rng)].push_back(static_cast<Word>(v));
  return runs;
}

// Machine-resident deal_runs: each run starts at an independently uniform
// word offset inside one set span of the fastest level, so every leading
// block lands in a uniformly random set. Data is poked in; building is free.
inline MergeInstance dealt_merge_instance(Machine& m, std::uint64_t n, std::uint64_t k,
                                          std::uint64_t seed) {
  auto runs = deal_runs(n, k, seed);
  const auto& l1 = m.cache().spec().levels.front();
  const std::uint64_t span = l1.sets() * l1.block;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_int_distribution<std::uint64_t> pick_off(0, span - 1);
  MergeInstance inst;
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint64_t off = pick_off(rng);
    const std::uint64_t need = off + runs[i].size();
    const std::uint64_t arena_len = std::max<std::uint64_t>((need + span - 1) / span, 1) * span;
    Region arena =
        m.layout().allocate(arena_len, span, "deal" + std::to_string(i) + "-arena");
    Region run = detail::sub_view(arena, off, runs[i].size(), "deal" + std::to_string(i));
    for (std::uint64_t j = 0; j < runs[i].size(); ++j) m.layout().poke(run, j, runs[i][j]);
    inst.runs.push_back({run, runs[i].size()});
  }
  inst.total = n;
  return inst;
}

// Conflict-miss fraction of a direct k-way merge: a fresh machine per trial,
// dealt runs with redrawn placements, heap in the compute layer so only run
// traffic reaches the cache. Fraction is run-region conflict misses over
// merged elements.
inline McResult conflict_experiment(std::uint64_t n, std::uint64_t k, std::uint64_t s,
                                    std::uint64_t b, std::uint64_t trials,
                                    std::uint64_t seed) {
  if (trials == 0) throw AnalysisError("conflict experiment: no trials");
  std::mt19937_64 master(seed);
  std::vector<double> xs(trials);
  for (std::uint64_t t = 0; t < trials; ++t) {
    const std::uint64_t trial_seed = master();
    Machine m(HierarchySpec::single(s * b, b, 1, 1));
    auto inst = dealt_merge_instance(m, n, k, trial_seed);
    MergeOptions opt;
    opt.collect = false;
    auto rep = kway_merge_direct(m, inst, opt);
    xs[t] = rep.run_conflict_fraction(0);
  }
  return detail::summarize(xs, seed);
}

// Non-random control for the experiment above: every leading block in set
// zero and values dealt round-robin, so each access returns to a block the
// other runs just evicted.
inline double conflict_experiment_cyclic(std::uint64_t n, std::uint64_t k, std::uint64_t s,
                                         std::uint64_t b) {
  if (k < 2 || n / k == 0) throw AnalysisError("conflict control: degenerate instance");
  Machine m(HierarchySpec::single(s * b, b, 1, 1));
  auto inst = cyclic_merge_instance(m, k, n / k);
  MergeOptions opt;
  opt.collect = false;
  auto rep = kway_merge_direct(m, inst, opt);
  return rep.run_conflict_fraction(0);
}

// Expected collisions per element inside one binary merger when the cache
// holds m_lines lines: three live lines, each pair colliding with
// probability 1/m_lines.
inline double funnel_conflict_expect(double m_lines) {
  if (!(m_lines >= 1.0)) throw AnalysisError("merger expectation: need at least one line");
  return 3.0 / m_lines;
}

// Whole-sort collision budget: each element crosses log2(n)/3 merger layers
// and pays the per-merger expectation at every layer.
inline double funnel_conflict_budget(double n, double m_lines) {
  if (!(n >= 2.0)) throw AnalysisError("merger budget: need at least two elements");
  return funnel_conflict_expect(m_lines) * n * (std::log2(n) / 3.0);
}

}  // namespace cachelab
