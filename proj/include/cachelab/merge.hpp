#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cachelab/emulator.hpp"
#include "cachelab/io_sort.hpp"
#include "cachelab/machine.hpp"

namespace cachelab {

struct MergeError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A sorted run resident in simulated memory, one word per element.
struct MergeRun {
  Region region;
  std::uint64_t elements = 0;
};

struct MergeInstance {
  std::vector<MergeRun> runs;
  std::uint64_t total = 0;
};

namespace detail {

inline Region sub_view(const Region& arena, std::uint64_t off_words, std::uint64_t len,
                       std::string name) {
  Region v;
  v.name = std::move(name);
  v.base = arena.base + off_words;
  v.length = len;
  v.alignment = 1;
  v.id = arena.id;
  return v;
}

inline void fill_sorted_random(MemoryLayout& lay, const Region& r, std::uint64_t n,
                               std::mt19937_64& rng) {
  std::vector<Word> v(n);
  for (auto& w : v) w = static_cast<Word>(rng() % (std::uint64_t{1} << 40));
  std::sort(v.begin(), v.end());
  for (std::uint64_t i = 0; i < n; ++i) lay.poke(r, i, v[i]);
}

}  // namespace detail

// Instance of the merge placement model: each run's first block lands in an
// independently uniform cache set (of the fastest level), element values
// i.i.d. then sorted per run. Data is poked in, so building costs nothing.
inline MergeInstance random_merge_instance(Machine& m, std::uint64_t k,
                                           std::uint64_t elems_per_run, std::uint64_t seed) {
  if (k < 2) throw MergeError("merge degree below 2");
  if (elems_per_run == 0) throw MergeError("empty runs");
  const auto& l1 = m.cache().spec().levels.front();
  const std::uint64_t B = l1.block, S = l1.sets();
  const std::uint64_t span = S * B;
  std::mt19937_64 rng(seed);
  MergeInstance inst;
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint64_t set = rng() % S;
    const std::uint64_t need = set * B + elems_per_run;
    Region arena = m.layout().allocate(((need + span - 1) / span) * span, span,
                                       "run" + std::to_string(i) + "-arena");
    Region run = detail::sub_view(arena, set * B, elems_per_run, "run" + std::to_string(i));
    detail::fill_sorted_random(m.layout(), run, elems_per_run, rng);
    inst.runs.push_back({run, elems_per_run});
  }
  inst.total = k * elems_per_run;
  return inst;
}

// Adversarial placement: every run's first block maps to set 0 and values are
// dealt round-robin (run i holds i, i+k, i+2k, ...), so the merge consumes one
// element from each run per cycle and all current blocks fight over one set.
inline MergeInstance cyclic_merge_instance(Machine& m, std::uint64_t k,
                                           std::uint64_t elems_per_run) {
  if (k < 2) throw MergeError("merge degree below 2");
  if (elems_per_run == 0) throw MergeError("empty runs");
  const auto& l1 = m.cache().spec().levels.front();
  const std::uint64_t span = l1.sets() * l1.block;
  MergeInstance inst;
  for (std::uint64_t i = 0; i < k; ++i) {
    Region run = m.layout().allocate(elems_per_run, span, "run" + std::to_string(i));
    for (std::uint64_t j = 0; j < elems_per_run; ++j)
      m.layout().poke(run, j, static_cast<Word>(j * k + i));
    inst.runs.push_back({run, elems_per_run});
  }
  inst.total = k * elems_per_run;
  return inst;
}

// Concatenated run contents in run order; handy for oracles and for handing
// the same instance to the block-transfer machinery.
inline std::vector<Word> run_values(const Machine& m, const MergeInstance& inst) {
  std::vector<Word> v;
  v.reserve(inst.total);
  for (const auto& r : inst.runs)
    for (std::uint64_t j = 0; j < r.elements; ++j) v.push_back(m.layout().peek(r.region, j));
  return v;
}

// Where the merge's tournament heap lives. The analysis assumes the heap
// never interferes with the runs; a compute-layer heap realizes that exactly
// (compares and element moves still charged as unit ops). The cached variant
// puts a real 2k-word array in lines whose sets avoid every run's first
// block, which is only feasible while k is well below the set count.
enum class HeapPlacement { kComputeLayer, kAvoidLeadingSets };

struct MergeOptions {
  HeapPlacement heap = HeapPlacement::kComputeLayer;
  const Region* out = nullptr;  // when set, output is stored through the cache
  bool collect = true;          // keep merged values in the report
};

struct MergeReport {
  std::vector<Word> output;
  RunStats stats;                       // machine counter delta over the merge
  std::vector<LevelStats> run_traffic;  // per level, run-region references only
  std::uint64_t elements = 0;

  double run_conflict_fraction(std::size_t level = 0) const {
    return elements == 0 ? 0.0
                         : static_cast<double>(run_traffic.at(level).conflict) /
                               static_cast<double>(elements);
  }
};

namespace detail {

// Min-heap of (value, run) pairs stored as word pairs in a region; every slot
// access goes through the cache.
class RegionHeap {
 public:
  RegionHeap(Machine& m, const Region& r) : m_(m), r_(r) {}

  bool empty() const { return n_ == 0; }

  void push(Word value, std::uint32_t tag) {
    write(n_, value, tag);
    std::uint64_t i = n_++;
    while (i > 0) {
      const std::uint64_t p = (i - 1) / 2;
      auto [pv, pt] = read(p);
      if (std::pair(pv, pt) <= std::pair(value, tag)) break;
      write(i, pv, pt);
      write(p, value, tag);
      i = p;
    }
  }

  std::pair<Word, std::uint32_t> pop() {
    auto top = read(0);
    auto last = read(n_ - 1);
    --n_;
    std::uint64_t i = 0;
    if (n_ > 0) {
      while (true) {
        std::uint64_t c = 2 * i + 1;
        if (c >= n_) break;
        auto cv = read(c);
        if (c + 1 < n_) {
          auto rv = read(c + 1);
          if (rv < cv) {
            cv = rv;
            ++c;
          }
        }
        if (last <= cv) break;
        write(i, cv.first, cv.second);
        i = c;
      }
      write(i, last.first, last.second);
    }
    return top;
  }

 private:
  std::pair<Word, std::uint32_t> read(std::uint64_t slot) {
    const Word v = m_.load(r_, 2 * slot);
    const Word t = m_.load(r_, 2 * slot + 1);
    return {v, static_cast<std::uint32_t>(t)};
  }

  void write(std::uint64_t slot, Word v, std::uint32_t t) {
    m_.store(r_, 2 * slot, v);
    m_.store(r_, 2 * slot + 1, static_cast<Word>(t));
  }

  Machine& m_;
  Region r_;
  std::uint64_t n_ = 0;
};

template <class Heap>
void merge_loop(Machine& m, const MergeInstance& inst, Heap& heap, const MergeOptions& opt,
                MergeReport& rep) {
  std::vector<std::uint64_t> cur(inst.runs.size(), 0);
  for (std::uint32_t j = 0; j < inst.runs.size(); ++j)
    if (inst.runs[j].elements > 0) heap.push(m.load(inst.runs[j].region, 0), j);
  std::uint64_t out_pos = 0;
  while (!heap.empty()) {
    auto [v, j] = heap.pop();
    if (opt.out != nullptr)
      m.store(*opt.out, out_pos, v);
    else
      m.charge(1);  // emitting the element is still a unit of work
    if (opt.collect) rep.output.push_back(v);
    ++out_pos;
    const auto& run = inst.runs[j];
    if (++cur[j] < run.elements) heap.push(m.load(run.region, cur[j]), j);
  }
}

}  // namespace detail

// k-way merge run directly against the cache, leading blocks and all.
// Conflict attribution comes from per-run watches, so the report separates
// run-region traffic from whatever the output stream does.
inline MergeReport kway_merge_direct(Machine& m, const MergeInstance& inst,
                                     MergeOptions opt = {}) {
  if (inst.runs.size() < 2) throw MergeError("merge degree below 2");
  if (opt.out != nullptr && opt.out->length < inst.total)
    throw MergeError("output region smaller than the instance");
  MergeReport rep;
  rep.elements = inst.total;
  std::vector<std::size_t> watch_ids;
  watch_ids.reserve(inst.runs.size());
  for (std::size_t i = 0; i < inst.runs.size(); ++i)
    watch_ids.push_back(m.add_watch("merge-run" + std::to_string(i), inst.runs[i].region));
  const RunStats before = m.stats();
  if (opt.heap == HeapPlacement::kAvoidLeadingSets) {
    const auto& l1 = m.cache().spec().levels.front();
    std::vector<std::uint64_t> forbidden;
    for (const auto& r : inst.runs)
      forbidden.push_back((r.region.base / l1.block) % l1.sets());
    std::sort(forbidden.begin(), forbidden.end());
    forbidden.erase(std::unique(forbidden.begin(), forbidden.end()), forbidden.end());
    Region hr = m.layout().allocate_avoiding_sets(2 * inst.runs.size(), l1.block, l1.sets(),
                                                  forbidden, "merge-heap");
    detail::RegionHeap heap(m, hr);
    detail::merge_loop(m, inst, heap, opt, rep);
    m.layout().release(hr);
  } else {
    BasicChargedHeap<Machine> heap(m);
    detail::merge_loop(m, inst, heap, opt, rep);
  }
  rep.stats = m.stats() - before;
  rep.run_traffic.assign(m.cache().spec().depth(), LevelStats{});
  for (auto id : watch_ids) {
    const auto& w = m.watch(id);
    for (std::size_t lv = 0; lv < rep.run_traffic.size(); ++lv)
      rep.run_traffic[lv] += w.levels[lv];
  }
  return rep;
}

struct EmulatedSortResult {
  std::vector<Word> output;
  EmulationStats stats;
};

// Multiway mergesort written for the two-level transfer machine, then played
// through the cache via the emulation. Degree defaults to the widest fan-in
// the frame budget allows.
inline EmulatedSortResult mergesort_emulated(const std::vector<Word>& input, std::uint64_t M,
                                             std::uint64_t B, std::uint64_t latency,
                                             std::uint64_t degree = 0) {
  IoParams io{M, B};
  io.validate();
  if (io.frames() < 4) throw MergeError("fast memory too small for a merge degree");
  if (degree == 0) degree = io.frames() - 2;
  auto prog = mergesort_io(input.size(), io, degree);
  auto res = emulate(prog, io, HierarchySpec::single(M, B, 1, latency), input);
  EmulatedSortResult out;
  res.mem.resize(input.size());
  out.output = std::move(res.mem);
  out.stats = res.stats;
  return out;
}

struct RandshiftOptions {
  // require d/s < 1/d^3 against the fastest level's set count
  bool enforce_degree_condition = false;
  // final pass normally lands unshifted so the result sits at offset 0
  bool shift_final_pass = false;
};

struct PassStats {
  std::uint64_t runs_in = 0;
  std::uint64_t runs_out = 0;
  RunStats stats;
};

struct RandshiftResult {
  std::vector<Word> output;
  RunStats stats;                 // whole-sort machine counter delta
  std::vector<PassStats> passes;  // passes[0] is run formation
};

// Multi-level mergesort with randomized cyclic shifts: run formation sorts
// capacity-of-the-fastest-level chunks, every merge pass fans in `degree`
// runs, and each run is written cyclically rotated by a fresh R uniform in
// [0, capacity of the slowest level), reduced mod the run length. The shifts
// decorrelate the set footprints of the runs a later pass reads together.
inline RandshiftResult mergesort_randshift(Machine& m, const std::vector<Word>& input,
                                           std::uint64_t degree, std::uint64_t seed,
                                           RandshiftOptions opt = {}) {
  if (degree < 2) throw MergeError("merge degree below 2");
  const auto& spec = m.cache().spec();
  const auto& l1 = spec.levels.front();
  if (opt.enforce_degree_condition &&
      degree * degree * degree * degree >= l1.sets())
    throw MergeError("degree condition d^4 < s violated");
  RandshiftResult res;
  const std::uint64_t n = input.size();
  if (n == 0) return res;

  const std::uint64_t chunk = std::min<std::uint64_t>(l1.capacity, n);
  const std::uint64_t slowest_m = spec.levels.back().capacity;
  std::mt19937_64 rng(seed);
  Region a = m.layout().allocate(n, l1.block, "sort-a");
  Region b = m.layout().allocate(n, l1.block, "sort-b");
  for (std::uint64_t i = 0; i < n; ++i) m.layout().poke(a, i, input[i]);

  struct Run {
    std::uint64_t start = 0, len = 0, shift = 0;
  };
  std::vector<Run> runs;
  const RunStats total_before = m.stats();

  // run formation: read a chunk, sort in the compute layer, write rotated
  {
    const RunStats before = m.stats();
    Run cur;
    std::vector<Word> buf;
    std::uint64_t nruns = (n + chunk - 1) / chunk;
    const bool shifted = nruns > 1 || opt.shift_final_pass;
    for (std::uint64_t start = 0; start < n; start += chunk) {
      const std::uint64_t len = std::min(chunk, n - start);
      buf.resize(len);
      for (std::uint64_t i = 0; i < len; ++i) buf[i] = m.load(a, start + i);
      std::sort(buf.begin(), buf.end());
      m.charge(len * (1 + static_cast<std::uint64_t>(std::ceil(std::log2(
                              static_cast<double>(std::max<std::uint64_t>(len, 2)))))));
      const std::uint64_t shift = shifted ? (rng() % slowest_m) % len : 0;
      for (std::uint64_t i = 0; i < len; ++i) m.store(b, start + (i + shift) % len, buf[i]);
      runs.push_back({start, len, shift});
    }
    res.passes.push_back({0, runs.size(), m.stats() - before});
  }
  std::swap(a, b);  // sorted runs now live in `a`

  // merge passes
  while (runs.size() > 1) {
    const RunStats before = m.stats();
    const std::uint64_t in_count = runs.size();
    std::vector<Run> next;
    const bool last_pass = in_count <= degree;
    for (std::size_t g = 0; g < runs.size(); g += degree) {
      const std::size_t gk = std::min<std::size_t>(degree, runs.size() - g);
      Run out;
      out.start = runs[g].start;
      for (std::size_t j = 0; j < gk; ++j) out.len += runs[g + j].len;
      out.shift = (last_pass && !opt.shift_final_pass) ? 0 : (rng() % slowest_m) % out.len;
      BasicChargedHeap<Machine> heap(m);
      std::vector<std::uint64_t> cur(gk, 0);
      for (std::uint32_t j = 0; j < gk; ++j) {
        const Run& r = runs[g + j];
        heap.push(m.load(a, r.start + r.shift % r.len), j);
      }
      std::uint64_t out_pos = 0;
      while (!heap.empty()) {
        auto [v, j] = heap.pop();
        m.store(b, out.start + (out_pos + out.shift) % out.len, v);
        ++out_pos;
        const Run& r = runs[g + j];
        if (++cur[j] < r.len) heap.push(m.load(a, r.start + (cur[j] + r.shift) % r.len), j);
      }
      next.push_back(out);
    }
    runs = std::move(next);
    res.passes.push_back({in_count, runs.size(), m.stats() - before});
    std::swap(a, b);
  }

  res.stats = m.stats() - total_before;
  res.output.resize(n);
  const std::uint64_t shift = runs.front().shift;
  for (std::uint64_t i = 0; i < n; ++i) res.output[i] = m.layout().peek(a, (i + shift) % n);
  m.layout().release(a);
  m.layout().release(b);
  return res;
}

}  // namespace cachelab
