#pragma once

#include <array>
#include <cstdint>
#include <list>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cachelab/memory.hpp"

namespace cachelab {

class CacheConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

inline std::uint64_t block_of(Address addr, std::uint64_t block_words) {
  return addr / block_words;
}

inline std::uint64_t set_of(std::uint64_t block_id, std::uint64_t sets) {
  return block_id % sets;
}

// One cache level: `capacity` and `block` in words, `ways` associativity,
// `latency` charged per access that misses this level.
struct CacheLevelSpec {
  std::uint64_t capacity = 0;
  std::uint64_t block = 0;
  std::uint64_t ways = 1;
  std::uint64_t latency = 1;

  std::uint64_t lines() const { return capacity / block; }
  std::uint64_t sets() const { return capacity / (ways * block); }

  void validate() const {
    if (!is_pow2(block))
      throw CacheConfigError("cache level: block size must be a power of two");
    if (ways == 0 || capacity == 0 || capacity % (ways * block) != 0)
      throw CacheConfigError("cache level: capacity must be a multiple of ways*block");
    if (!is_pow2(sets()))
      throw CacheConfigError("cache level: set count must be a power of two");
    if (capacity < 3 * block)
      throw CacheConfigError("cache level: capacity must hold at least three blocks");
    if (latency == 0) throw CacheConfigError("cache level: zero latency");
  }
};

// Inclusive hierarchy, fastest level first. Multi-level geometry must keep
// block sizes at least doubling (2*B_i <= B_{i+1}), line counts
// non-decreasing, and the slowest block small relative to the fastest level
// (B_k <= lines_1, 4*B_k <= M_1). Together these keep every level at least
// B_k lines deep.
struct HierarchySpec {
  std::vector<CacheLevelSpec> levels;

  static HierarchySpec single(std::uint64_t capacity, std::uint64_t block,
                              std::uint64_t ways, std::uint64_t latency) {
    HierarchySpec h;
    h.levels.push_back({capacity, block, ways, latency});
    h.validate();
    return h;
  }

  std::size_t depth() const { return levels.size(); }

  void validate() const {
    if (levels.empty()) throw CacheConfigError("hierarchy: no levels");
    if (levels.size() > kMaxLevels)
      throw CacheConfigError("hierarchy: too many levels");
    for (const auto& l : levels) l.validate();
    if (levels.size() == 1) return;
    const std::uint64_t bk = levels.back().block;
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
      if (2 * levels[i].block > levels[i + 1].block)
        throw CacheConfigError("hierarchy: block sizes must at least double per level");
      if (levels[i].lines() > levels[i + 1].lines())
        throw CacheConfigError("hierarchy: line counts must be non-decreasing");
    }
    if (bk > levels.front().lines())
      throw CacheConfigError("hierarchy: slowest block exceeds fastest level line count");
    if (4 * bk > levels.front().capacity)
      throw CacheConfigError("hierarchy: fastest level cannot hold four slowest blocks");
  }

  static constexpr std::size_t kMaxLevels = 6;
};

enum class MissClass : std::uint8_t { kCompulsory, kCapacity, kConflict };

struct AccessOutcome {
  std::uint8_t hit_level = 1;  // 1-based; depth+1 means served by memory
  std::uint8_t miss_mask = 0;  // bit i set: missed at level i+1
  std::array<MissClass, HierarchySpec::kMaxLevels> cls{};
  std::uint64_t cost = 0;

  bool missed(std::size_t level1) const {
    return miss_mask & (1u << (level1 - 1));
  }
};

struct LevelStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t compulsory = 0;
  std::uint64_t capacity = 0;
  std::uint64_t conflict = 0;

  LevelStats& operator+=(const LevelStats& o) {
    hits += o.hits;
    misses += o.misses;
    compulsory += o.compulsory;
    capacity += o.capacity;
    conflict += o.conflict;
    return *this;
  }
  LevelStats operator-(const LevelStats& o) const {
    return {hits - o.hits, misses - o.misses, compulsory - o.compulsory,
            capacity - o.capacity, conflict - o.conflict};
  }
};

// Totals for a run. `cost` = unit_ops + sum over levels of latency*misses;
// plain trace replay counts one unit op per reference, algorithm drivers may
// fuse a read+write word move into one unit op.
struct RunStats {
  std::uint64_t references = 0;
  std::uint64_t unit_ops = 0;
  std::uint64_t cost = 0;
  std::vector<LevelStats> levels;

  explicit RunStats(std::size_t depth = 0) : levels(depth) {}

  void add(const AccessOutcome& o, std::uint64_t ops) {
    references += 1;
    unit_ops += ops;
    cost += o.cost - 1 + ops;  // outcome cost counts the touch as one op
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (o.missed(i + 1)) {
        levels[i].misses++;
        switch (o.cls[i]) {
          case MissClass::kCompulsory: levels[i].compulsory++; break;
          case MissClass::kCapacity: levels[i].capacity++; break;
          case MissClass::kConflict: levels[i].conflict++; break;
        }
      } else if (o.hit_level == i + 1) {
        levels[i].hits++;
      }
    }
  }

  // counter delta between two snapshots of the same machine
  RunStats operator-(const RunStats& o) const {
    RunStats d(levels.size());
    d.references = references - o.references;
    d.unit_ops = unit_ops - o.unit_ops;
    d.cost = cost - o.cost;
    for (std::size_t i = 0; i < levels.size(); ++i) d.levels[i] = levels[i] - o.levels[i];
    return d;
  }
};

// Set-associative LRU hierarchy with inclusion (a block resident at a fast
// level is resident at every slower level; slower-level evictions
// back-invalidate). Misses are classified per level against the stream that
// level observes: first touch is compulsory; otherwise a shadow
// fully-associative LRU cache of equal capacity, updated on every observed
// reference, decides capacity (shadow missed too) vs conflict (shadow held
// the block).
class CacheHierarchy {
 public:
  explicit CacheHierarchy(HierarchySpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    levels_.resize(spec_.depth());
    for (std::size_t i = 0; i < spec_.depth(); ++i) {
      levels_[i].lines.assign(spec_.levels[i].sets() * spec_.levels[i].ways, Line{});
      levels_[i].shadow_cap = spec_.levels[i].lines();
    }
  }

  const HierarchySpec& spec() const { return spec_; }

  AccessOutcome access(Address addr, AccessKind kind) {
    (void)kind;  // reads and writes cost the same and allocate identically
    AccessOutcome out;
    out.cost = 1;
    ++stamp_;
    const std::size_t depth = spec_.depth();
    std::size_t hit = depth;  // index of hit level, depth => memory
    for (std::size_t i = 0; i < depth; ++i) {
      const auto& ls = spec_.levels[i];
      const std::uint64_t bid = block_of(addr, ls.block);
      if (touch_if_present(i, bid)) {
        shadow_touch(i, bid);
        hit = i;
        break;
      }
      out.miss_mask |= static_cast<std::uint8_t>(1u << i);
      out.cls[i] = classify(i, bid);
      shadow_touch(i, bid);
      levels_[i].seen.insert(bid);
      out.cost += ls.latency;
    }
    out.hit_level = static_cast<std::uint8_t>(hit + 1);
    // install at missed levels, slowest first, so back-invalidation from a
    // victim cannot disturb a fresher install
    for (std::size_t i = hit; i-- > 0;)
      install(i, block_of(addr, spec_.levels[i].block));
    return out;
  }

  bool resident(std::size_t level1, std::uint64_t block_id) const {
    const auto& ls = spec_.levels[level1 - 1];
    const auto& lv = levels_[level1 - 1];
    const std::uint64_t set = set_of(block_id, ls.sets());
    for (std::uint64_t w = 0; w < ls.ways; ++w) {
      const Line& ln = lv.lines[set * ls.ways + w];
      if (ln.valid && ln.block == block_id) return true;
    }
    return false;
  }

  bool resident_addr(std::size_t level1, Address addr) const {
    return resident(level1, block_of(addr, spec_.levels[level1 - 1].block));
  }

  // every valid fast-level line must be covered by its slower-level block
  bool inclusion_holds() const {
    for (std::size_t i = 0; i + 1 < spec_.depth(); ++i) {
      const auto& ls = spec_.levels[i];
      for (const Line& ln : levels_[i].lines) {
        if (!ln.valid) continue;
        const Address a = ln.block * ls.block;
        if (!resident(i + 2, block_of(a, spec_.levels[i + 1].block))) return false;
      }
    }
    return true;
  }

  void reset() {
    for (auto& lv : levels_) {
      for (auto& ln : lv.lines) ln = Line{};
      lv.shadow_list.clear();
      lv.shadow_map.clear();
      lv.seen.clear();
    }
    stamp_ = 0;
  }

 private:
  struct Line {
    std::uint64_t block = 0;
    std::uint64_t stamp = 0;
    bool valid = false;
  };

  struct LevelState {
    std::vector<Line> lines;  // set-major, ways per set
    std::list<std::uint64_t> shadow_list;  // MRU first
    std::unordered_map<std::uint64_t, std::list<std::uint64_t>::iterator> shadow_map;
    std::unordered_set<std::uint64_t> seen;
    std::uint64_t shadow_cap = 0;
  };

  bool touch_if_present(std::size_t i, std::uint64_t bid) {
    const auto& ls = spec_.levels[i];
    auto& lv = levels_[i];
    const std::uint64_t set = set_of(bid, ls.sets());
    for (std::uint64_t w = 0; w < ls.ways; ++w) {
      Line& ln = lv.lines[set * ls.ways + w];
      if (ln.valid && ln.block == bid) {
        ln.stamp = stamp_;
        return true;
      }
    }
    return false;
  }

  MissClass classify(std::size_t i, std::uint64_t bid) const {
    const auto& lv = levels_[i];
    if (!lv.seen.count(bid)) return MissClass::kCompulsory;
    return lv.shadow_map.count(bid) ? MissClass::kConflict : MissClass::kCapacity;
  }

  void shadow_touch(std::size_t i, std::uint64_t bid) {
    auto& lv = levels_[i];
    auto it = lv.shadow_map.find(bid);
    if (it != lv.shadow_map.end()) {
      lv.shadow_list.splice(lv.shadow_list.begin(), lv.shadow_list, it->second);
      return;
    }
    lv.shadow_list.push_front(bid);
    lv.shadow_map[bid] = lv.shadow_list.begin();
    if (lv.shadow_list.size() > lv.shadow_cap) {
      lv.shadow_map.erase(lv.shadow_list.back());
      lv.shadow_list.pop_back();
    }
  }

  void install(std::size_t i, std::uint64_t bid) {
    const auto& ls = spec_.levels[i];
    auto& lv = levels_[i];
    const std::uint64_t set = set_of(bid, ls.sets());
    Line* victim = nullptr;
    for (std::uint64_t w = 0; w < ls.ways; ++w) {
      Line& ln = lv.lines[set * ls.ways + w];
      if (!ln.valid) {
        victim = &ln;
        break;
      }
      if (!victim || ln.stamp < victim->stamp) victim = &ln;
    }
    if (victim->valid) back_invalidate(i, victim->block);
    victim->block = bid;
    victim->stamp = stamp_;
    victim->valid = true;
  }

  // eviction at level i drops every covered block from faster levels
  void back_invalidate(std::size_t i, std::uint64_t evicted) {
    const std::uint64_t bw = spec_.levels[i].block;
    for (std::size_t j = 0; j < i; ++j) {
      const auto& ls = spec_.levels[j];
      auto& lv = levels_[j];
      const std::uint64_t first = evicted * (bw / ls.block);
      const std::uint64_t count = bw / ls.block;
      for (std::uint64_t b = first; b < first + count; ++b) {
        const std::uint64_t set = set_of(b, ls.sets());
        for (std::uint64_t w = 0; w < ls.ways; ++w) {
          Line& ln = lv.lines[set * ls.ways + w];
          if (ln.valid && ln.block == b) ln.valid = false;
        }
      }
    }
  }

  HierarchySpec spec_;
  std::vector<LevelState> levels_;
  std::uint64_t stamp_ = 0;
};

}  // namespace cachelab
