#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cachelab/cache.hpp"
#include "cachelab/memory.hpp"

namespace cachelab {

// Couples a word-addressed memory with a cache hierarchy and accumulates
// run statistics. Unit-op accounting:
//   load/store  one reference, one unit op
//   move        read + write fused into a single unit op
//   probe       read reference costing no unit op (misses still pay latency)
//   charge      bookkeeping ops with no memory reference
// Watches accumulate per-level stats for references landing in a range.
class Machine {
 public:
  explicit Machine(HierarchySpec spec, std::uint64_t space_words = std::uint64_t{1} << 26)
      : layout_(space_words), cache_(std::move(spec)), stats_(cache_.spec().depth()) {}

  MemoryLayout& layout() { return layout_; }
  const MemoryLayout& layout() const { return layout_; }
  CacheHierarchy& cache() { return cache_; }
  const CacheHierarchy& cache() const { return cache_; }
  const RunStats& stats() const { return stats_; }
  const AccessOutcome& last_outcome() const { return last_; }

  // zero the run counters (cache and watch state stay put); used to exclude
  // setup work from a measured phase
  void reset_stats() { stats_ = RunStats(cache_.spec().depth()); }

  Word load(const Region& r, std::uint64_t off) {
    auto [value, ev] = layout_.read(r, off);
    account(ev.addr, ev.kind, 1);
    return value;
  }

  void store(const Region& r, std::uint64_t off, Word v) {
    MemoryEvent ev = layout_.write(r, off, v);
    account(ev.addr, ev.kind, 1);
  }

  // fused word move: two references, one unit op
  void move(const Region& src, std::uint64_t soff, const Region& dst, std::uint64_t doff) {
    auto [value, rev] = layout_.read(src, soff);
    account(rev.addr, rev.kind, 1);
    MemoryEvent wev = layout_.write(dst, doff, value);
    account(wev.addr, wev.kind, 0);
  }

  // read reference with no unit op; used to repair cache state
  void probe(const Region& r, std::uint64_t off) {
    auto [value, ev] = layout_.read(r, off);
    (void)value;
    account(ev.addr, ev.kind, 0);
  }

  void probe_addr(Address addr) { account(addr, AccessKind::kRead, 0); }

  // compute-layer work that touches no memory
  void charge(std::uint64_t ops) {
    stats_.unit_ops += ops;
    stats_.cost += ops;
  }

  struct Watch {
    std::string name;
    Address base = 0;
    std::uint64_t length = 0;
    std::vector<LevelStats> levels;
  };

  std::size_t add_watch(std::string name, Address base, std::uint64_t length) {
    watches_.push_back({std::move(name), base, length,
                        std::vector<LevelStats>(cache_.spec().depth())});
    return watches_.size() - 1;
  }

  std::size_t add_watch(std::string name, const Region& r) {
    return add_watch(std::move(name), r.base, r.length);
  }

  const Watch& watch(std::size_t idx) const { return watches_.at(idx); }
  std::size_t watch_count() const { return watches_.size(); }

  // drops the most recently added watch; callers that attach a scoped watch
  // release it in reverse order of creation
  void pop_watch() {
    if (!watches_.empty()) watches_.pop_back();
  }

  using Observer = std::function<void(Address, AccessKind, const AccessOutcome&)>;
  void set_observer(Observer obs) { observer_ = std::move(obs); }

 private:
  void account(Address addr, AccessKind kind, std::uint64_t ops) {
    last_ = cache_.access(addr, kind);
    stats_.add(last_, ops);
    for (auto& w : watches_) {
      if (addr < w.base || addr >= w.base + w.length) continue;
      for (std::size_t i = 0; i < w.levels.size(); ++i) {
        if (last_.missed(i + 1)) {
          w.levels[i].misses++;
          switch (last_.cls[i]) {
            case MissClass::kCompulsory: w.levels[i].compulsory++; break;
            case MissClass::kCapacity: w.levels[i].capacity++; break;
            case MissClass::kConflict: w.levels[i].conflict++; break;
          }
        } else if (last_.hit_level == i + 1) {
          w.levels[i].hits++;
        }
      }
    }
    if (observer_) observer_(addr, kind, last_);
  }

  MemoryLayout layout_;
  CacheHierarchy cache_;
  RunStats stats_;
  AccessOutcome last_;
  std::vector<Watch> watches_;
  Observer observer_;
};

}  // namespace cachelab
