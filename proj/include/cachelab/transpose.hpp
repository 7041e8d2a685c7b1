#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cachelab/machine.hpp"

namespace cachelab {

class TransposeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major rows x cols matrix living in simulated memory; element (i, j)
// sits at region offset i*cols + j.
struct Matrix {
  Region region;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
};

// Matrices are aligned to the slowest cache block so that full-block
// submatrix rows are themselves aligned blocks (the constant-3 move path).
inline Matrix allocate_matrix(Machine& m, std::uint64_t rows, std::uint64_t cols,
                              std::string name) {
  const std::uint64_t bk = m.cache().spec().levels.back().block;
  Matrix a;
  a.region = m.layout().allocate(rows * cols, bk, std::move(name));
  a.rows = rows;
  a.cols = cols;
  return a;
}

// Direct backing-store access, no cache traffic.
inline void fill_matrix(Machine& m, const Matrix& a, const std::vector<Word>& v) {
  if (v.size() != a.rows * a.cols) throw TransposeError("fill size mismatch");
  for (std::uint64_t i = 0; i < v.size(); ++i) m.layout().poke(a.region, i, v[i]);
}

inline std::vector<Word> matrix_values(const Machine& m, const Matrix& a) {
  std::vector<Word> v(a.rows * a.cols);
  for (std::uint64_t i = 0; i < v.size(); ++i) v[i] = m.layout().peek(a.region, i);
  return v;
}

namespace transpose_detail {

inline bool ranges_collide(const CacheLevelSpec& lv, Address a, std::uint64_t alen, Address b,
                           std::uint64_t blen) {
  const std::uint64_t s = lv.sets();
  const std::uint64_t a0 = a / lv.block, a1 = (a + alen - 1) / lv.block;
  const std::uint64_t b0 = b / lv.block, b1 = (b + blen - 1) / lv.block;
  for (std::uint64_t i = a0; i <= a1; ++i)
    for (std::uint64_t j = b0; j <= b1; ++j)
      if (i % s == j % s) return true;
  return false;
}

inline bool collide_any_level(const HierarchySpec& h, Address a, std::uint64_t alen, Address b,
                              std::uint64_t blen) {
  for (const auto& lv : h.levels)
    if (ranges_collide(lv, a, alen, b, blen)) return true;
  return false;
}

// Copies len words src+soff -> dst+doff as fused moves. When the two ranges
// share a set at any level a direct copy would ping-pong, so the data detours
// through a scratch block chosen to collide with neither end (always possible
// while the scratch area holds four slowest-level blocks and two of its
// zones are occupied by source and destination). Returns true on detour.
inline bool move_block(Machine& m, const Region& src, std::uint64_t soff, const Region& dst,
                       std::uint64_t doff, std::uint64_t len, const Region& scratch,
                       std::uint64_t bk) {
  const HierarchySpec& h = m.cache().spec();
  const Address sa = src.base + soff;
  const Address da = dst.base + doff;
  if (!collide_any_level(h, sa, len, da, len)) {
    for (std::uint64_t w = 0; w < len; ++w) m.move(src, soff + w, dst, doff + w);
    return false;
  }
  for (std::uint64_t xb = 0; (xb + 1) * bk <= scratch.length; ++xb) {
    const Address xa = scratch.base + xb * bk;
    if (collide_any_level(h, xa, len, sa, len) || collide_any_level(h, xa, len, da, len))
      continue;
    for (std::uint64_t w = 0; w < len; ++w) m.move(src, soff + w, scratch, xb * bk + w);
    for (std::uint64_t w = 0; w < len; ++w) m.move(scratch, xb * bk + w, dst, doff + w);
    return true;
  }
  // defensive: no conflict-free scratch zone (cannot happen when the
  // hierarchy holds four slowest blocks in the fastest level)
  for (std::uint64_t w = 0; w < len; ++w) m.move(src, soff + w, dst, doff + w);
  return true;
}

// Touch every fastest-level line of the scratch area so later detours find
// it resident; re-fetches after displacement happen inline and are part of
// the per-block constant.
inline void prime_scratch(Machine& m, const Region& scratch) {
  const std::uint64_t b1 = m.cache().spec().levels.front().block;
  for (std::uint64_t off = 0; off < scratch.length; off += b1) m.probe(scratch, off);
}

inline void bounds_check(const Matrix& a, std::uint64_t top, std::uint64_t left,
                         std::uint64_t brows, std::uint64_t bcols) {
  if (brows == 0 || bcols == 0 || top + brows > a.rows || left + bcols > a.cols)
    throw TransposeError("submatrix out of bounds");
}

inline std::uint64_t gather_core(Machine& m, const Matrix& a, std::uint64_t top,
                                 std::uint64_t left, std::uint64_t brows, std::uint64_t bcols,
                                 const Region& staging, std::uint64_t stage_off,
                                 const Region& scratch, std::uint64_t bk, bool to_staging) {
  std::uint64_t routed = 0;
  for (std::uint64_t r = 0; r < brows; ++r) {
    const std::uint64_t row_off = (top + r) * a.cols + left;
    const std::uint64_t st_off = stage_off + r * bcols;
    if (to_staging)
      routed += move_block(m, a.region, row_off, staging, st_off, bcols, scratch, bk) ? 1 : 0;
    else
      routed += move_block(m, staging, st_off, a.region, row_off, bcols, scratch, bk) ? 1 : 0;
  }
  return routed;
}

}  // namespace transpose_detail

struct GatherReport {
  RunStats stats;
  std::uint64_t routed_rows = 0;  // rows that needed the scratch detour
};

// Moves the brows x bcols submatrix with top-left corner (top, left) into
// staging[stage_off..], row-concatenated. scratch must hold at least four
// slowest-level blocks. Per level the miss count stays within 3 lines per
// row moved (4 when source rows straddle line boundaries), never a full
// ping-pong.
inline GatherReport gather_submatrix(Machine& m, const Matrix& a, std::uint64_t top,
                                     std::uint64_t left, std::uint64_t brows,
                                     std::uint64_t bcols, const Region& staging,
                                     std::uint64_t stage_off, const Region& scratch) {
  transpose_detail::bounds_check(a, top, left, brows, bcols);
  if (stage_off + brows * bcols > staging.length)
    throw TransposeError("staging region too small");
  const std::uint64_t bk = m.cache().spec().levels.back().block;
  if (scratch.length < 4 * bk) throw TransposeError("scratch smaller than four blocks");
  const RunStats before = m.stats();
  transpose_detail::prime_scratch(m, scratch);
  GatherReport rep;
  rep.routed_rows = transpose_detail::gather_core(m, a, top, left, brows, bcols, staging,
                                                  stage_off, scratch, bk, true);
  rep.stats = m.stats() - before;
  return rep;
}

// Inverse of gather_submatrix: staging rows back into the matrix.
inline GatherReport scatter_submatrix(Machine& m, const Matrix& a, std::uint64_t top,
                                      std::uint64_t left, std::uint64_t brows,
                                      std::uint64_t bcols, const Region& staging,
                                      std::uint64_t stage_off, const Region& scratch) {
  transpose_detail::bounds_check(a, top, left, brows, bcols);
  if (stage_off + brows * bcols > staging.length)
    throw TransposeError("staging region too small");
  const std::uint64_t bk = m.cache().spec().levels.back().block;
  if (scratch.length < 4 * bk) throw TransposeError("scratch smaller than four blocks");
  const RunStats before = m.stats();
  transpose_detail::prime_scratch(m, scratch);
  GatherReport rep;
  rep.routed_rows = transpose_detail::gather_core(m, a, top, left, brows, bcols, staging,
                                                  stage_off, scratch, bk, false);
  rep.stats = m.stats() - before;
  return rep;
}

namespace transpose_detail {

// In-staging transpose-and-exchange, recursing down the block-size ladder so
// all element movement happens between resident fastest-level lines. P is
// rows x cols at offP, Q is cols x rows at offQ; afterwards P = old Q
// transposed and Q = old P transposed. Subblock pairs are visited in bordered
// order (everything with max group index t before anything with t+1), which
// keeps first touches in storage order.
inline void te_exchange(Machine& m, const Region& st, std::uint64_t offP, std::uint64_t strideP,
                        std::uint64_t offQ, std::uint64_t strideQ, std::uint64_t rows,
                        std::uint64_t cols, const std::vector<std::uint64_t>& ladder,
                        std::size_t lv) {
  while (lv > 0 && (rows != cols || rows != ladder[lv] || rows == ladder[0])) --lv;
  if (lv == 0 || rows != cols || rows != ladder[lv]) {
    for (std::uint64_t i = 0; i < rows; ++i)
      for (std::uint64_t j = 0; j < cols; ++j) {
        const Word p = m.load(st, offP + i * strideP + j);
        const Word q = m.load(st, offQ + j * strideQ + i);
        m.store(st, offP + i * strideP + j, q);
        m.store(st, offQ + j * strideQ + i, p);
      }
    return;
  }
  const std::uint64_t sub = ladder[lv - 1];
  const std::uint64_t t = rows / sub;
  auto pair = [&](std::uint64_t gi, std::uint64_t gj) {
    te_exchange(m, st, offP + (gi * strideP + gj) * sub, strideP,
                offQ + (gj * strideQ + gi) * sub, strideQ, sub, sub, ladder, lv - 1);
  };
  for (std::uint64_t gt = 0; gt < t; ++gt) {
    for (std::uint64_t gs = 0; gs < gt; ++gs) {
      pair(gs, gt);
      pair(gt, gs);
    }
    pair(gt, gt);
  }
}

// In-place transpose of the size x size block at off; diagonal subblocks
// recurse in place, symmetric pairs go through te_exchange. Bordered order
// again: all subblocks of the leading t x t corner are finished before any
// subblock with group index t is touched, so rows of the block see their
// first touch in storage order.
inline void t_inplace(Machine& m, const Region& st, std::uint64_t off, std::uint64_t stride,
                      std::uint64_t size, const std::vector<std::uint64_t>& ladder,
                      std::size_t lv) {
  while (lv > 0 && (size != ladder[lv] || size == ladder[0])) --lv;
  if (lv == 0 || size != ladder[lv]) {
    for (std::uint64_t i = 0; i < size; ++i)
      for (std::uint64_t j = i + 1; j < size; ++j) {
        const Word p = m.load(st, off + i * stride + j);
        const Word q = m.load(st, off + j * stride + i);
        m.store(st, off + i * stride + j, q);
        m.store(st, off + j * stride + i, p);
      }
    return;
  }
  const std::uint64_t sub = ladder[lv - 1];
  const std::uint64_t t = size / sub;
  for (std::uint64_t gt = 0; gt < t; ++gt) {
    for (std::uint64_t gs = 0; gs < gt; ++gs)
      te_exchange(m, st, off + (gs * stride + gt) * sub, stride,
                  off + (gt * stride + gs) * sub, stride, sub, sub, ladder, lv - 1);
    t_inplace(m, st, off + (gt * stride + gt) * sub, stride, sub, ladder, lv - 1);
  }
}

}  // namespace transpose_detail

struct TransposeOptions {
  // Degraded staging of one block slot instead of two: symmetric blocks can
  // no longer ride through staging together, so an in-place run transposes
  // every block in place first and exchanges symmetric pairs in a second
  // pass, roughly doubling the data movement.
  bool single_staging_slot = false;
};

struct TransposeReport {
  RunStats stats;
  std::uint64_t inner_staging_conflicts = 0;  // staging conflict misses during
                                              // in-staging transpose phases
  std::uint64_t routed_rows = 0;
  std::uint64_t blocks_moved = 0;
};

// out = transpose of a. Tiles of the slowest-level block size ride through a
// contiguous staging area in batches: gather up to four tiles, transpose each
// one inside staging down the block-size ladder, then scatter them to their
// transposed positions (symmetric pairs of a square matrix travel together
// and swap destinations on the way back). Batching stretches the reuse
// distance of every staged line past the line count of each level before the
// in-staging phase touches it again, so that phase never turns a live set
// over. In-place operation (out aliasing a) is supported for square matrices
// only.
inline TransposeReport transpose_multilevel(Machine& m, const Matrix& a, const Matrix& out,
                                            TransposeOptions opt = {}) {
  namespace td = transpose_detail;
  if (out.rows != a.cols || out.cols != a.rows)
    throw TransposeError("output shape is not the transpose of the input");
  const bool alias = out.region.base == a.region.base;
  const Address a_end = a.region.base + a.region.length;
  const Address o_end = out.region.base + out.region.length;
  if (!alias && a.region.base < o_end && out.region.base < a_end)
    throw TransposeError("input and output overlap without aliasing");
  if (alias && a.rows != a.cols)
    throw TransposeError("in-place transpose requires a square matrix");

  const HierarchySpec& h = m.cache().spec();
  const std::uint64_t bk = h.levels.back().block;
  const bool square = a.rows == a.cols;
  if (opt.single_staging_slot && (a.rows % bk != 0 || a.cols % bk != 0 || !square))
    throw TransposeError("single staging slot supports square block-multiple matrices");

  std::vector<std::uint64_t> ladder;
  for (const auto& lv : h.levels) ladder.push_back(lv.block);

  const std::uint64_t slots = opt.single_staging_slot ? 1 : 4;
  Region staging =
      m.layout().allocate(slots * bk * bk + 4 * bk, bk, "transpose-staging");
  Region scratch = staging;
  scratch.base = staging.base + slots * bk * bk;
  scratch.length = 4 * bk;
  const std::size_t widx = m.add_watch("staging", staging);

  const RunStats before = m.stats();
  td::prime_scratch(m, scratch);

  TransposeReport rep;
  auto inner = [&](auto&& body) {
    std::vector<LevelStats> w0 = m.watch(widx).levels;
    body();
    const auto& w1 = m.watch(widx).levels;
    for (std::size_t i = 0; i < w1.size(); ++i)
      rep.inner_staging_conflicts += w1[i].conflict - w0[i].conflict;
  };
  auto block_rows = [&](std::uint64_t idx) {
    return std::min(bk, a.rows - idx * bk);
  };
  auto block_cols = [&](std::uint64_t idx) {
    return std::min(bk, a.cols - idx * bk);
  };
  const std::uint64_t nI = (a.rows + bk - 1) / bk;
  const std::uint64_t nJ = (a.cols + bk - 1) / bk;
  const std::size_t top_lv = ladder.size() - 1;

  // one staged tile or tile pair; slot is assigned when the batch is built
  enum class Kind { kDiag, kPair, kRaggedPair, kMove, kCopy };
  struct Item {
    Kind kind;
    std::uint64_t I, J;
    std::uint64_t slot;
  };
  std::vector<Item> batch;
  std::uint64_t used_slots = 0;
  auto slots_needed = [](Kind k) {
    return (k == Kind::kDiag || k == Kind::kMove) ? std::uint64_t{1} : std::uint64_t{2};
  };
  auto soff = [&](std::uint64_t s) { return s * bk * bk; };

  auto flush = [&]() {
    if (batch.empty()) return;
    for (const Item& it : batch) {
      const std::uint64_t sI = block_rows(it.I);
      const std::uint64_t sJ = it.kind == Kind::kDiag ? sI : block_cols(it.J);
      rep.routed_rows += td::gather_core(m, a, it.I * bk, it.J * bk, sI, sJ, staging,
                                         soff(it.slot), scratch, bk, true);
      ++rep.blocks_moved;
      if (it.kind == Kind::kPair || it.kind == Kind::kRaggedPair) {
        rep.routed_rows += td::gather_core(m, a, it.J * bk, it.I * bk, sJ, sI, staging,
                                           soff(it.slot + 1), scratch, bk, true);
        ++rep.blocks_moved;
      }
    }
    // refresh the detour blocks so the scatter phase finds them resident
    td::prime_scratch(m, scratch);
    inner([&] {
      for (const Item& it : batch) {
        const std::uint64_t sI = block_rows(it.I);
        const std::uint64_t sJ = it.kind == Kind::kDiag ? sI : block_cols(it.J);
        switch (it.kind) {
          case Kind::kDiag:
          case Kind::kMove:
            td::t_inplace(m, staging, soff(it.slot), sJ, sI, ladder, top_lv);
            break;
          case Kind::kPair:
            td::t_inplace(m, staging, soff(it.slot), sJ, sI, ladder, top_lv);
            td::t_inplace(m, staging, soff(it.slot + 1), sI, sJ, ladder, top_lv);
            break;
          case Kind::kRaggedPair:
            td::te_exchange(m, staging, soff(it.slot), sJ, soff(it.slot + 1), sI, sI, sJ,
                            ladder, top_lv);
            break;
          case Kind::kCopy:
            for (std::uint64_t i = 0; i < sI; ++i)
              for (std::uint64_t j = 0; j < sJ; ++j)
                m.move(staging, soff(it.slot) + i * sJ + j,
                       staging, soff(it.slot + 1) + j * sI + i);
            break;
        }
      }
    });
    for (const Item& it : batch) {
      const std::uint64_t sI = block_rows(it.I);
      const std::uint64_t sJ = it.kind == Kind::kDiag ? sI : block_cols(it.J);
      switch (it.kind) {
        case Kind::kDiag:
          rep.routed_rows += td::gather_core(m, out, it.I * bk, it.I * bk, sI, sI, staging,
                                             soff(it.slot), scratch, bk, false);
          break;
        case Kind::kPair:
          // exchange folded into the write-back: each slot holds its own
          // tile transposed and lands at the symmetric position
          rep.routed_rows += td::gather_core(m, out, it.J * bk, it.I * bk, sJ, sI, staging,
                                             soff(it.slot), scratch, bk, false);
          rep.routed_rows += td::gather_core(m, out, it.I * bk, it.J * bk, sI, sJ, staging,
                                             soff(it.slot + 1), scratch, bk, false);
          break;
        case Kind::kRaggedPair:
          // the exchange already happened across the slots, so each slot
          // scatters straight back to the position it was gathered from
          rep.routed_rows += td::gather_core(m, out, it.I * bk, it.J * bk, sI, sJ, staging,
                                             soff(it.slot), scratch, bk, false);
          rep.routed_rows += td::gather_core(m, out, it.J * bk, it.I * bk, sJ, sI, staging,
                                             soff(it.slot + 1), scratch, bk, false);
          break;
        case Kind::kMove:
          rep.routed_rows += td::gather_core(m, out, it.J * bk, it.I * bk, sJ, sI, staging,
                                             soff(it.slot), scratch, bk, false);
          break;
        case Kind::kCopy:
          rep.routed_rows += td::gather_core(m, out, it.J * bk, it.I * bk, sJ, sI, staging,
                                             soff(it.slot + 1), scratch, bk, false);
          break;
      }
    }
    batch.clear();
    used_slots = 0;
  };
  auto push = [&](Kind k, std::uint64_t I, std::uint64_t J) {
    const std::uint64_t need = slots_needed(k);
    if (used_slots + need > slots) flush();
    batch.push_back({k, I, J, used_slots});
    used_slots += need;
  };

  if (square && !opt.single_staging_slot) {
    // paired path: diagonal tiles first (one slot each), then each symmetric
    // pair rides through two slots and swaps destinations on scatter
    for (std::uint64_t I = 0; I < nI; ++I) push(Kind::kDiag, I, I);
    for (std::uint64_t I = 0; I < nI; ++I)
      for (std::uint64_t J = I + 1; J < nJ; ++J)
        push(block_rows(I) == block_cols(J) ? Kind::kPair : Kind::kRaggedPair, I, J);
    flush();
  } else if (square && alias) {
    // degraded staging, in place: transpose every tile in place, then
    // exchange symmetric tiles through the single slot (data moves twice)
    for (std::uint64_t I = 0; I < nI; ++I)
      for (std::uint64_t J = 0; J < nJ; ++J) {
        rep.routed_rows += td::gather_core(m, a, I * bk, J * bk, bk, bk, staging, 0, scratch,
                                           bk, true);
        ++rep.blocks_moved;
        inner([&] { td::t_inplace(m, staging, 0, bk, bk, ladder, top_lv); });
        rep.routed_rows += td::gather_core(m, out, I * bk, J * bk, bk, bk, staging, 0,
                                           scratch, bk, false);
      }
    for (std::uint64_t I = 0; I < nI; ++I)
      for (std::uint64_t J = I + 1; J < nJ; ++J) {
        rep.routed_rows += td::gather_core(m, a, I * bk, J * bk, bk, bk, staging, 0, scratch,
                                           bk, true);
        ++rep.blocks_moved;
        for (std::uint64_t r = 0; r < bk; ++r)
          rep.routed_rows +=
              td::move_block(m, a.region, (J * bk + r) * a.cols + I * bk, a.region,
                             (I * bk + r) * a.cols + J * bk, bk, scratch, bk)
                  ? 1
                  : 0;
        ++rep.blocks_moved;
        rep.routed_rows += td::gather_core(m, out, J * bk, I * bk, bk, bk, staging, 0,
                                           scratch, bk, false);
      }
  } else {
    // rectangular or degraded out-of-place: square tiles transpose in their
    // slot, ragged ones copy-transpose into a neighbouring slot
    for (std::uint64_t I = 0; I < nI; ++I)
      for (std::uint64_t J = 0; J < nJ; ++J)
        push(block_rows(I) == block_cols(J) ? Kind::kMove : Kind::kCopy, I, J);
    flush();
  }

  rep.stats = m.stats() - before;
  if (widx == m.watch_count() - 1) m.pop_watch();
  m.layout().release(staging);
  return rep;
}

}  // namespace cachelab
