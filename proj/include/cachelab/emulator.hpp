#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cachelab/cache.hpp"
#include "cachelab/io_machine.hpp"
#include "cachelab/machine.hpp"
#include "cachelab/memory.hpp"

namespace cachelab {

class EmulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// a single-block window into a larger region
inline Region block_view(const Region& parent, std::uint64_t block_idx, std::uint64_t block_words) {
  return Region{parent.name, parent.base + block_idx * block_words, block_words,
                block_words, parent.id};
}

namespace copyops {

// word-by-word fused moves; thrashes if src and dst share a direct-mapped set
inline void direct(Machine& m, const Region& src, const Region& dst, std::uint64_t b) {
  for (std::uint64_t w = 0; w < b; ++w) m.move(src, w, dst, w);
}

// read the whole block into cost-free staging, then write it out; two misses
// at most, safe even on a same-set pair
inline void staged(Machine& m, const Region& src, const Region& dst, std::uint64_t b) {
  std::vector<Word> tmp(b);
  for (std::uint64_t w = 0; w < b; ++w) tmp[w] = m.load(src, w);
  for (std::uint64_t w = 0; w < b; ++w) m.store(dst, w, tmp[w]);
}

}  // namespace copyops

inline std::uint64_t cache_set_of(const CacheLevelSpec& spec, Address addr) {
  return set_of(block_of(addr, spec.block), spec.sets());
}

// Copies one block, routing through intermediate block y1 or y2 when src and
// dst fall into the same set; never thrashes. Returns the measured cost.
inline std::uint64_t safe_block_copy(Machine& m, const Region& src, const Region& dst,
                                     const Region& y1, const Region& y2) {
  const auto& spec = m.cache().spec().levels.front();
  const std::uint64_t b = spec.block;
  const std::uint64_t before = m.stats().cost;
  if (cache_set_of(spec, src.base) != cache_set_of(spec, dst.base)) {
    copyops::direct(m, src, dst, b);
  } else {
    const std::uint64_t collide = cache_set_of(spec, src.base);
    const Region* y = &y1;
    if (cache_set_of(spec, y1.base) == collide) y = &y2;
    if (cache_set_of(spec, y->base) == collide)
      throw EmulationError("no intermediate block avoids the colliding set");
    copyops::direct(m, src, *y, b);
    copyops::direct(m, *y, dst, b);
  }
  return m.stats().cost - before;
}

// Control experiment: word-by-word copy with no routing. On a same-set
// direct-mapped pair this alternates misses and costs Theta(L*B).
inline std::uint64_t naive_block_copy(Machine& m, const Region& src, const Region& dst) {
  const std::uint64_t b = m.cache().spec().levels.front().block;
  const std::uint64_t before = m.stats().cost;
  copyops::direct(m, src, dst, b);
  return m.stats().cost - before;
}

struct EmulationLayout {
  Region buf;  // frames*B words, block i in set (i + shift) mod s
  Region mem;  // emulated slow memory
  Region y1, y2;  // intermediate blocks in distinct sets
  std::uint64_t frames = 0;
  std::uint64_t shift = 0;
};

struct EmulationStats {
  std::uint64_t rounds = 0;  // transfer count; each transfer delimits a round
  std::uint64_t safe_copies = 0;       // routed through an intermediate block
  std::uint64_t direct_copies = 0;
  std::uint64_t thrash_copies = 0;     // same-set direct copies (random placement)
  std::uint64_t staged_copies = 0;     // register-staging variant
  std::uint64_t restoration_touches = 0;
  std::uint64_t transfers = 0;  // T
  std::uint64_t touches = 0;    // I
  std::uint64_t cost = 0;       // unit ops + latency charges, setup excluded
  double calibrated_c = 0.0;    // (cost - I) / ((L+B)*T)
  RunStats run;                 // per-class detail for the same window
};

struct EmulationOptions {
  bool register_staging = false;
  bool use_intermediate = true;  // route same-set copies via Y
  std::uint64_t placement_shift = 0;
  // verify the full residency correspondence on sampled rounds
  bool check_invariant = true;
};

struct EmulationResult {
  std::vector<Word> mem;
  EmulationStats stats;
};

// Replays an IoProgram against a cache: Buf stands in for fast memory with
// block i pinned to set i, transfers become safe block copies, and after
// each transfer every displaced Buf block is touched back in, so the frame
// residency correspondence holds at every round boundary.
class Emulator final : public IoMachine {
 public:
  Emulator(IoParams io, HierarchySpec spec, const IoProgram& prog,
           std::vector<Word> slow_init, EmulationOptions opt)
      : IoMachine(io),
        mach_(spec_checked(std::move(spec), io, prog, opt)),
        opt_(opt),
        level_(mach_.cache().spec().levels.front()),
        frames_(prog.frames) {
    const std::uint64_t b = level_.block;
    const std::uint64_t s = level_.sets();
    return_words_ = std::max<std::uint64_t>(prog.slow_words, slow_init.size());
    slow_words_ = ((return_words_ + b - 1) / b) * b;
    layout_.frames = frames_;
    layout_.shift = opt.placement_shift;
    layout_.mem = mach_.layout().allocate(std::max<std::uint64_t>(slow_words_, b), b, "Mem");
    if (frames_ == 0) {
      layout_.buf = Region{};  // program declares no fast memory
    } else if (opt.placement_shift == 0) {
      layout_.buf = mach_.layout().allocate(frames_ * b, s * b, "Buf");
    } else {
      // reserve a set-aligned arena and start Buf `shift` blocks in
      Region arena = mach_.layout().allocate((frames_ + s) * b, s * b, "BufArena");
      layout_.buf = Region{"Buf", arena.base + opt.placement_shift * b, frames_ * b, b, arena.id};
    }
    Region y = mach_.layout().allocate(2 * b, b, "Y");
    layout_.y1 = block_view(y, 0, b);
    layout_.y2 = block_view(y, 1, b);
    for (std::uint64_t i = 0; i < slow_init.size(); ++i)
      mach_.layout().poke(layout_.mem, i, slow_init[i]);
    // establish the correspondence before round zero; setup cost excluded
    for (std::uint64_t f = 0; f < frames_; ++f) mach_.probe(layout_.buf, f * level_.block);
    mach_.reset_stats();
  }

  EmulationResult run(const IoProgram& prog) {
    if (prog.body) prog.body(*this);
    finish_stats();
    EmulationResult res;
    res.stats = stats_;
    res.mem.resize(return_words_);
    for (std::uint64_t i = 0; i < res.mem.size(); ++i)
      res.mem[i] = mach_.layout().peek(layout_.mem, i);
    return res;
  }

  const EmulationLayout& layout() const { return layout_; }
  const Machine& machine() const { return mach_; }

  // IoMachine interface: compute touches hit Buf, transfers become copies

  Word load(std::uint64_t off) override {
    check_touch(off);
    ++stats_.touches;
    Word v = mach_.load(layout_.buf, off);
    assert_touch_hit();
    return v;
  }

  void store(std::uint64_t off, Word v) override {
    check_touch(off);
    ++stats_.touches;
    mach_.store(layout_.buf, off, v);
    assert_touch_hit();
  }

  void charge(std::uint64_t n) override {
    stats_.touches += n;
    mach_.charge(n);
  }

  void read_block(std::uint64_t slow_block, std::uint64_t frame) override {
    check_round(slow_block, frame);
    const Region mem_blk = block_view(layout_.mem, slow_block, level_.block);
    transfer(mem_blk, block_view(layout_.buf, frame, level_.block), mem_blk.base);
  }

  void write_block(std::uint64_t frame, std::uint64_t slow_block) override {
    check_round(slow_block, frame);
    const Region mem_blk = block_view(layout_.mem, slow_block, level_.block);
    transfer(block_view(layout_.buf, frame, level_.block), mem_blk, mem_blk.base);
  }

 private:
  static HierarchySpec spec_checked(HierarchySpec spec, const IoParams& io,
                                    const IoProgram& prog, const EmulationOptions& opt) {
    spec.validate();
    if (spec.depth() != 1)
      throw EmulationError("emulation targets a single cache level");
    const auto& l = spec.levels.front();
    if (l.block != io.block) throw EmulationError("cache block size must match io block size");
    // direct-mapped: one Buf block per set; associative: at most half the ways
    if (prog.frames > l.sets() * std::max<std::uint64_t>(l.ways / 2, 1))
      throw EmulationError("program frames exceed the buffer budget for this cache");
    if (opt.placement_shift >= l.sets())
      throw EmulationError("placement shift must be below the set count");
    return spec;
  }

  void check_touch(std::uint64_t off) const {
    if (off >= frames_ * level_.block)
      throw EmulationError("compute touch outside declared frames: offset " +
                           std::to_string(off));
  }

  // every compute touch must land on a resident Buf block (cost exactly 1)
  void assert_touch_hit() const {
    if (mach_.last_outcome().hit_level != 1)
      throw EmulationError("compute touch missed the cache: correspondence broken");
  }

  void check_round(std::uint64_t slow_block, std::uint64_t frame) const {
    if (frame >= frames_) throw EmulationError("frame index out of range");
    if ((slow_block + 1) * level_.block > slow_words_)
      throw EmulationError("slow block out of range");
  }

  void transfer(const Region& src, const Region& dst, Address foreign_base) {
    ++stats_.transfers;
    ++stats_.rounds;
    const std::uint64_t b = level_.block;
    const std::uint64_t ss = cache_set_of(level_, src.base);
    const std::uint64_t sd = cache_set_of(level_, dst.base);
    bool used_y = false;
    std::uint64_t y_set = 0;
    if (opt_.register_staging) {
      copyops::staged(mach_, src, dst, b);
      ++stats_.staged_copies;
    } else if (ss != sd || level_.ways > 1) {
      copyops::direct(mach_, src, dst, b);
      ++stats_.direct_copies;
    } else if (opt_.use_intermediate) {
      const Region* y = &layout_.y1;
      if (cache_set_of(level_, y->base) == ss) y = &layout_.y2;
      if (cache_set_of(level_, y->base) == ss)
        throw EmulationError("no intermediate block avoids the colliding set");
      copyops::direct(mach_, src, *y, b);
      copyops::direct(mach_, *y, dst, b);
      used_y = true;
      y_set = cache_set_of(level_, y->base);
      ++stats_.safe_copies;
    } else {
      copyops::direct(mach_, src, dst, b);  // same-set, no routing: thrashes
      ++stats_.thrash_copies;
    }
    // restore Buf blocks displaced by the foreign block (and Y if used)
    restore_set(cache_set_of(level_, foreign_base));
    if (used_y) restore_set(y_set);
    if (opt_.check_invariant && (stats_.rounds < 16 || stats_.rounds % 64 == 0))
      verify_correspondence();
  }

  void restore_set(std::uint64_t set) {
    const std::uint64_t s = level_.sets();
    const std::uint64_t b = level_.block;
    const std::uint64_t base_set = cache_set_of(level_, layout_.buf.base);
    // frames with (base_set + f) mod s == set
    std::uint64_t f0 = (set + s - base_set) % s;
    bool changed = true;
    std::uint64_t guard = 0;
    while (changed) {
      changed = false;
      for (std::uint64_t f = f0; f < frames_; f += s) {
        if (!mach_.cache().resident_addr(1, layout_.buf.base + f * b)) {
          mach_.probe(layout_.buf, f * b);
          ++stats_.restoration_touches;
          changed = true;
        }
      }
      if (++guard > 4 * level_.ways + 8)
        throw EmulationError("restoration failed to converge");
    }
  }

  void verify_correspondence() const {
    for (std::uint64_t f = 0; f < frames_; ++f)
      if (!mach_.cache().resident_addr(1, layout_.buf.base + f * level_.block))
        throw EmulationError("correspondence invariant broken after round " +
                             std::to_string(stats_.rounds));
  }

  void finish_stats() {
    verify_correspondence();
    stats_.run = mach_.stats();
    stats_.cost = stats_.run.cost;
    const auto& l = level_;
    if (stats_.transfers > 0 && stats_.cost > stats_.touches) {
      stats_.calibrated_c = static_cast<double>(stats_.cost - stats_.touches) /
                            (static_cast<double>(l.latency + l.block) *
                             static_cast<double>(stats_.transfers));
    }
  }

  Machine mach_;
  EmulationOptions opt_;
  CacheLevelSpec level_;
  std::uint64_t frames_ = 0;
  std::uint64_t slow_words_ = 0;   // block-padded internal span
  std::uint64_t return_words_ = 0;  // what the caller gets back
  EmulationLayout layout_;
  EmulationStats stats_;
};

// Direct-mapped emulation with Buf in 1-1 set correspondence.
inline EmulationResult emulate(const IoProgram& prog, IoParams io, HierarchySpec spec,
                               std::vector<Word> slow, EmulationOptions opt = {}) {
  spec.validate();
  if (spec.levels.front().ways != 1)
    throw EmulationError("plain emulation requires a direct-mapped cache");
  Emulator em(io, std::move(spec), prog, std::move(slow), opt);
  return em.run(prog);
}

// Set-associative variant: the program must have been generated for half the
// cache capacity, so Buf claims at most half the lines of every set.
inline EmulationResult emulate_assoc(const IoProgram& prog, IoParams io, HierarchySpec spec,
                                     std::vector<Word> slow, EmulationOptions opt = {}) {
  Emulator em(io, std::move(spec), prog, std::move(slow), opt);
  return em.run(prog);
}

// Randomized placement: Buf starts at a random set offset, collisions are
// rare and simply thrash instead of routing through an intermediate block.
inline EmulationResult emulate_random_placement(const IoProgram& prog, IoParams io,
                                                HierarchySpec spec, std::vector<Word> slow,
                                                std::uint64_t seed) {
  spec.validate();
  if (spec.levels.front().ways != 1)
    throw EmulationError("random placement variant requires a direct-mapped cache");
  EmulationOptions opt;
  opt.use_intermediate = false;
  std::mt19937_64 rng(seed);
  opt.placement_shift = rng() % spec.levels.front().sets();
  Emulator em(io, std::move(spec), prog, std::move(slow), opt);
  return em.run(prog);
}

}  // namespace cachelab
