#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cachelab/io_sort.hpp"
#include "cachelab/machine.hpp"

namespace cachelab {

struct FunnelError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FunnelOptions {
  // verify each merger invocation emits exactly min(arity^3, remaining)
  bool check_invocation_quota = true;
  // attribute conflict misses hitting a block already touched within the
  // current 2-merger invocation (cross-invocation evictions excluded)
  bool track_two_merger_epochs = false;
};

struct FunnelMetrics {
  std::uint64_t merger_invocations = 0;
  std::uint64_t two_merger_invocations = 0;
  std::uint64_t refills = 0;         // eager pre-round refills
  std::uint64_t demand_refills = 0;  // mid-invocation top-ups of a drained buffer
  std::uint64_t intra_epoch_conflicts = 0;
  std::uint64_t peak_buffer_words = 0;
  std::uint64_t top_merger_arity = 0;      // k of the outermost merger (0: input
                                           // fit the base case, no merge ran)
  std::uint64_t top_merge_conflicts = 0;   // fastest-level conflict misses
                                           // while the outermost merger drained
};

struct FunnelReport {
  std::vector<Word> output;
  RunStats stats;
  FunnelMetrics metrics;
};

namespace funnel_detail {

inline std::uint64_t cube_root_ceil(std::uint64_t n) {
  std::uint64_t t = static_cast<std::uint64_t>(std::ceil(std::cbrt(static_cast<double>(n))));
  while (t > 1 && (t - 1) * (t - 1) * (t - 1) >= n) --t;
  while (t * t * t < n) ++t;
  return t;
}

inline std::uint64_t next_pow2(std::uint64_t x) {
  std::uint64_t p = 1;
  while (p < x) p <<= 1;
  return p;
}

struct Context {
  Machine& m;
  FunnelOptions opt;
  FunnelMetrics metrics;
  std::mt19937_64 rng;
  std::uint64_t block;      // fastest level's block size, for buffer alignment
  std::uint64_t set_span;   // words covered by one pass over the fastest level's sets
  std::uint64_t live_buffer_words = 0;
  // epoch bookkeeping for the 2-merger conflict attribution
  std::uint64_t epoch_seq = 0;
  std::uint64_t epoch = 0;
  bool in_leaf = false;
  std::unordered_map<std::uint64_t, std::uint64_t> block_epoch;

  Context(Machine& machine, FunnelOptions o, std::uint64_t seed)
      : m(machine),
        opt(o),
        rng(seed),
        block(machine.cache().spec().levels.front().block),
        set_span(machine.cache().spec().levels.front().sets() * block) {}
};

// Buffers land at uniformly random block-aligned bases so their cache sets
// are uncorrelated with everything else in the layout.
inline Region allocate_random(Context& ctx, std::uint64_t len, std::string name) {
  MemoryLayout& lay = ctx.m.layout();
  const std::uint64_t b = ctx.block;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const Address base = (ctx.rng() % (lay.space_words() - len)) / b * b;
    try {
      return lay.allocate(len, b, name, base);
    } catch (const LayoutError&) {
    }
  }
  return lay.allocate(len, b, std::move(name));
}

// Cyclic word queue in simulated memory. Head/tail arithmetic is
// compute-layer bookkeeping; every element goes through the cache. The
// start offset is randomized so the queue's first block is uniform within
// the region.
class CycleBuffer {
 public:
  CycleBuffer(Machine& m, Region r, std::uint64_t start)
      : m_(&m), r_(std::move(r)), head_(start % r_.length) {}

  std::uint64_t size() const { return size_; }
  std::uint64_t capacity() const { return r_.length; }
  const Region& region() const { return r_; }

  void push(Word v) {
    if (size_ == r_.length) throw FunnelError("buffer overflow");
    m_->store(r_, (head_ + size_) % r_.length, v);
    ++size_;
  }

  Word peek_front() { return m_->load(r_, head_); }

  void pop() {
    if (size_ == 0) throw FunnelError("pop from empty buffer");
    head_ = (head_ + 1) % r_.length;
    --size_;
  }

 private:
  Machine* m_;
  Region r_;
  std::uint64_t head_ = 0;
  std::uint64_t size_ = 0;
};

struct Node;

// A merger input: either a sorted array segment or a producer-backed buffer.
// Exhausted inputs present the +inf sentinel as a compute-layer head value;
// sentinels never occupy buffer space.
struct Endpoint {
  Region arr;
  std::uint64_t pos = 0, end = 0;
  CycleBuffer* buf = nullptr;
  Node* producer = nullptr;
};

struct Node {
  std::uint64_t arity = 0;
  std::uint64_t quota = 0;      // arity^3
  std::uint64_t remaining = 0;  // real elements the subtree has not yet emitted
  Endpoint in[2];               // leaf only
  Word head[2] = {0, 0};        // memoized head values; a head cannot change
  bool head_valid[2] = {false, false};  // between reads, so one load serves
                                        // until that stream advances
  std::vector<std::unique_ptr<Node>> children;      // q children of arity r
  std::vector<std::unique_ptr<CycleBuffer>> buffers;
  std::unique_ptr<Node> out;                        // arity-q merger over the buffers
};

// Output target: an intermediate buffer, or the final region where any stray
// sentinel would be dropped (none ever arrives when quotas hold).
struct Sink {
  CycleBuffer* buf = nullptr;
  Region out;
  std::uint64_t out_pos = 0, out_limit = 0;
  std::uint64_t real = 0;

  void push(Context& ctx, Word v) {
    if (buf != nullptr) {
      buf->push(v);
      if (v != kWordMax) ++real;
      return;
    }
    if (v == kWordMax) return;
    if (out_pos >= out_limit) throw FunnelError("sink overflow");
    ctx.m.store(out, out_pos++, v);
    ++real;
  }
};

inline std::uint64_t endpoint_supply(const Endpoint& e) {
  if (e.buf != nullptr) return e.buf->size() + e.producer->remaining;
  return e.end - e.pos;
}

inline Region slice(const Region& r, std::uint64_t off, std::uint64_t len) {
  Region v = r;
  v.base = r.base + off;
  v.length = len;
  return v;
}

inline void invoke(Context& ctx, Node& n, Sink& sink);

inline Word endpoint_peek(Context& ctx, Endpoint& e) {
  if (e.buf != nullptr) {
    if (e.buf->size() == 0 && e.producer->remaining > 0) {
      // depth-first top-up: the producer refills its own buffer on demand
      ++ctx.metrics.demand_refills;
      Sink bs;
      bs.buf = e.buf;
      invoke(ctx, *e.producer, bs);
    }
    if (e.buf->size() > 0) return e.buf->peek_front();
    return kWordMax;
  }
  if (e.pos < e.end) return ctx.m.load(e.arr, e.pos);
  return kWordMax;
}

inline void endpoint_advance(Endpoint& e) {
  if (e.buf != nullptr) {
    e.buf->pop();
    return;
  }
  ++e.pos;
}

// total buffer words inside a k-merger and all nested sub-mergers
inline std::uint64_t tree_buffer_words(std::uint64_t k) {
  if (k <= 2) return 0;
  std::uint64_t a = 0;
  while ((std::uint64_t{1} << a) < k) ++a;
  const std::uint64_t q = std::uint64_t{1} << (a / 2);
  const std::uint64_t r = std::uint64_t{1} << (a - a / 2);
  return q * (2 * r * r * r) + q * tree_buffer_words(r) + tree_buffer_words(q);
}

// Builds the merger for `inputs.size()` (a power of two) sorted streams:
// q = 2^floor(a/2) groups of r = 2^ceil(a/2) streams each feed a child
// r-merger and a buffer of twice the child's invocation output; an
// arity-q merger drains the buffers. Buffers are carved in order from
// `arena`; each gets a random cyclic start offset.
inline std::unique_ptr<Node> build_merger(Context& ctx, std::vector<Endpoint> inputs,
                                          const Region& arena, std::uint64_t* cursor) {
  const std::uint64_t k = inputs.size();
  auto node = std::make_unique<Node>();
  node->arity = k;
  node->quota = k * k * k;
  for (const auto& e : inputs) node->remaining += endpoint_supply(e);
  if (k == 2) {
    node->in[0] = std::move(inputs[0]);
    node->in[1] = std::move(inputs[1]);
    return node;
  }
  std::uint64_t a = 0;
  while ((std::uint64_t{1} << a) < k) ++a;
  const std::uint64_t q = std::uint64_t{1} << (a / 2);
  const std::uint64_t r = std::uint64_t{1} << (a - a / 2);
  std::vector<Endpoint> upper;
  for (std::uint64_t g = 0; g < q; ++g) {
    std::vector<Endpoint> group(inputs.begin() + static_cast<std::ptrdiff_t>(g * r),
                                inputs.begin() + static_cast<std::ptrdiff_t>((g + 1) * r));
    node->children.push_back(build_merger(ctx, std::move(group), arena, cursor));
    const std::uint64_t cap = 2 * r * r * r;
    Region br = slice(arena, *cursor, cap);
    *cursor += cap;
    node->buffers.push_back(
        std::make_unique<CycleBuffer>(ctx.m, br, ctx.rng() % cap));
    Endpoint e;
    e.buf = node->buffers.back().get();
    e.producer = node->children.back().get();
    upper.push_back(std::move(e));
  }
  node->out = build_merger(ctx, std::move(upper), arena, cursor);
  return node;
}

// One invocation: emits min(arity^3, remaining) elements into the sink.
// Internal mergers run up to r^3 rounds, each refilling every buffer below
// half capacity (depth-first) and then invoking the output merger once.
inline void invoke(Context& ctx, Node& n, Sink& sink) {
  ++ctx.metrics.merger_invocations;
  const std::uint64_t expect = std::min(n.quota, n.remaining);
  const std::uint64_t sink_before = sink.real;
  if (n.arity == 2) {
    ++ctx.metrics.two_merger_invocations;
    const bool outer = ctx.in_leaf;
    ctx.in_leaf = true;
    ctx.epoch = ++ctx.epoch_seq;
    for (std::uint64_t t = 0; t < expect; ++t) {
      for (int s = 0; s < 2; ++s)
        if (!n.head_valid[s]) {
          n.head[s] = endpoint_peek(ctx, n.in[s]);
          n.head_valid[s] = true;
        }
      ctx.m.charge(1);
      const int w = n.head[0] <= n.head[1] ? 0 : 1;
      const Word v = n.head[w];
      if (v == kWordMax) throw FunnelError("sentinel emitted while supply remains");
      endpoint_advance(n.in[w]);
      n.head_valid[w] = false;
      sink.push(ctx, v);
    }
    ctx.in_leaf = outer;
    ctx.epoch = ++ctx.epoch_seq;  // resuming an outer leaf opens a fresh window
  } else {
    const std::uint64_t r = n.children.front()->arity;
    const std::uint64_t rounds = r * r * r;
    for (std::uint64_t t = 0; t < rounds && sink.real - sink_before < expect; ++t) {
      for (std::size_t g = 0; g < n.buffers.size(); ++g) {
        auto& buf = *n.buffers[g];
        if (2 * buf.size() >= buf.capacity()) continue;
        if (n.children[g]->remaining == 0) continue;
        ++ctx.metrics.refills;
        Sink bs;
        bs.buf = &buf;
        invoke(ctx, *n.children[g], bs);
      }
      if (ctx.opt.check_invocation_quota) {
        // half-full discipline: when the output merger fires, each buffer
        // holds at least min(half capacity, what its subtree can still give)
        for (std::size_t g = 0; g < n.buffers.size(); ++g) {
          const auto& buf = *n.buffers[g];
          const std::uint64_t supply = buf.size() + n.children[g]->remaining;
          if (buf.size() < std::min(buf.capacity() / 2, supply))
            throw FunnelError("buffer below half at output invocation");
        }
      }
      invoke(ctx, *n.out, sink);
    }
  }
  const std::uint64_t emitted = sink.real - sink_before;
  if (ctx.opt.check_invocation_quota && emitted != expect)
    throw FunnelError("invocation emitted " + std::to_string(emitted) + " of " +
                      std::to_string(expect));
  n.remaining -= emitted;
}

inline void base_sort(Context& ctx, const Region& src, const Region& dst, std::uint64_t n) {
  std::vector<Word> w(n);
  for (std::uint64_t i = 0; i < n; ++i) w[i] = ctx.m.load(src, i);
  std::sort(w.begin(), w.end());
  ctx.m.charge(n + n * static_cast<std::uint64_t>(std::ceil(std::log2(
                        static_cast<double>(std::max<std::uint64_t>(n, 2))))));
  for (std::uint64_t i = 0; i < n; ++i) ctx.m.store(dst, i, w[i]);
}

struct Sorted {
  Region r;
  bool owned = false;  // allocated here; the recursion releases it after use
};

// Sorts the n words in src. Base cases sort in place (or straight into the
// caller's slot); larger inputs split into contiguous segments, sort them
// recursively, and merge. `target`, when given, is the caller-owned slot the
// result must land in; otherwise a fresh randomly placed run is allocated.
//
// Sibling runs are carved from as few randomly placed arenas as fit one pass
// over the cache sets. Each run's own base stays uniformly random (the
// conflict lemma's placement precondition) while runs sharing an arena can
// never alias each other, so the merger does not fight its own inputs.
inline Sorted sort_rec(Context& ctx, const Region& src, std::uint64_t n, bool top,
                       const Region* target) {
  if (n <= 4) {
    const Region& dst = target != nullptr ? *target : src;
    base_sort(ctx, src, dst, n);
    return {dst, false};
  }
  const std::uint64_t k = next_pow2(cube_root_ceil(n));
  const std::uint64_t seg = (n + k - 1) / k;
  const std::uint64_t per_arena = std::max<std::uint64_t>(1, ctx.set_span / seg);
  std::vector<Region> run_arenas;
  for (std::uint64_t g = 0; g * per_arena * seg < n; ++g) {
    const std::uint64_t lo = g * per_arena * seg;
    const std::uint64_t hi = std::min(lo + per_arena * seg, n);
    run_arenas.push_back(allocate_random(ctx, hi - lo, "funnel-runs"));
  }
  std::vector<Sorted> kids;
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint64_t lo = std::min(i * seg, n);
    const std::uint64_t hi = std::min(lo + seg, n);
    if (hi > lo) {
      const Region slot = slice(run_arenas[i / per_arena], lo - (i / per_arena) * per_arena * seg,
                                hi - lo);
      kids.push_back(sort_rec(ctx, slice(src, lo, hi - lo), hi - lo, false, &slot));
    } else {
      kids.push_back({});  // padding segment, presents only the sentinel
    }
  }
  std::vector<Endpoint> eps;
  for (const auto& kid : kids) {
    Endpoint e;
    e.arr = kid.r;
    e.pos = 0;
    e.end = kid.r.length;
    eps.push_back(std::move(e));
  }
  // One arena per merger, itself randomly placed; buffers packed inside so
  // simultaneously live buffers mostly land in distinct cache sets.
  const std::uint64_t arena_words = tree_buffer_words(k);
  Region arena;
  if (arena_words > 0) {
    arena = allocate_random(ctx, arena_words, "funnel-buffers");
    ctx.live_buffer_words += arena_words;
    ctx.metrics.peak_buffer_words =
        std::max(ctx.metrics.peak_buffer_words, ctx.live_buffer_words);
  }
  std::uint64_t cursor = 0;
  auto root = build_merger(ctx, std::move(eps), arena, &cursor);
  Region dst;
  bool dst_owned;
  if (target != nullptr) {
    dst = *target;
    dst_owned = false;
  } else {
    dst = allocate_random(ctx, n, "funnel-run");
    dst_owned = true;
  }
  Sink sink;
  sink.out = dst;
  sink.out_limit = n;
  const std::uint64_t conflicts_before = ctx.m.stats().levels.front().conflict;
  while (sink.real < n) invoke(ctx, *root, sink);
  if (top) {
    ctx.metrics.top_merger_arity = k;
    ctx.metrics.top_merge_conflicts =
        ctx.m.stats().levels.front().conflict - conflicts_before;
  }
  if (arena_words > 0) {
    ctx.live_buffer_words -= arena_words;
    ctx.m.layout().release(arena);
  }
  for (const Region& ra : run_arenas) ctx.m.layout().release(ra);
  return {dst, dst_owned};
}

}  // namespace funnel_detail

// Cache-oblivious sort: split into ~n^(1/3) segments (rounded to a power of
// two), sort them recursively, then drain a k-merger whose buffers sit at
// random block-aligned bases with random cyclic start offsets.
inline FunnelReport funnel_sort(Machine& m, const std::vector<Word>& input, std::uint64_t seed,
                                FunnelOptions opt = {}) {
  for (Word w : input)
    if (w == kWordMax) throw FunnelError("input uses the sentinel value");
  FunnelReport rep;
  if (input.empty()) {
    rep.stats = RunStats(m.cache().spec().depth());
    return rep;
  }
  funnel_detail::Context ctx(m, opt, seed);
  const std::uint64_t n = input.size();
  Region in = funnel_detail::allocate_random(ctx, n, "funnel-in");
  for (std::uint64_t i = 0; i < n; ++i) m.layout().poke(in, i, input[i]);

  if (opt.track_two_merger_epochs) {
    const std::uint64_t b = ctx.block;
    funnel_detail::Context* cp = &ctx;
    m.set_observer([cp, b](Address a, AccessKind, const AccessOutcome& o) {
      if (!cp->in_leaf) return;
      const std::uint64_t blk = a / b;
      auto it = cp->block_epoch.find(blk);
      if (o.missed(1) && o.cls[0] == MissClass::kConflict && it != cp->block_epoch.end() &&
          it->second == cp->epoch)
        ++cp->metrics.intra_epoch_conflicts;
      cp->block_epoch[blk] = cp->epoch;
    });
  }

  const RunStats before = m.stats();
  funnel_detail::Sorted res = funnel_detail::sort_rec(ctx, in, n, true, nullptr);
  rep.stats = m.stats() - before;
  if (opt.track_two_merger_epochs) m.set_observer(Machine::Observer{});

  rep.output.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) rep.output[i] = m.layout().peek(res.r, i);
  if (res.owned) m.layout().release(res.r);
  m.layout().release(in);
  rep.metrics = ctx.metrics;
  return rep;
}

}  // namespace cachelab
