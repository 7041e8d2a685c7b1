#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "cachelab/io_machine.hpp"

namespace cachelab {

inline constexpr Word kWordMax = std::numeric_limits<Word>::max();

// Binary min-heap of (value, tag) pairs kept in the compute layer. Every
// element read or write of the heap array is tallied and flushed to the
// sink's charge(), giving the O(log degree) bookkeeping per output element.
// Sink is any machine exposing charge(uint64_t).
template <class Sink>
class BasicChargedHeap {
 public:
  explicit BasicChargedHeap(Sink& io) : io_(io) {}

  bool empty() const { return a_.empty(); }

  void push(Word value, std::uint32_t tag) {
    std::uint64_t t = 0;
    a_.emplace_back(value, tag);
    ++t;  // write of the new slot
    std::size_t i = a_.size() - 1;
    while (i > 0) {
      const std::size_t p = (i - 1) / 2;
      ++t;  // read parent
      if (a_[p] <= a_[i]) break;
      std::swap(a_[p], a_[i]);
      t += 2;  // two writes
      i = p;
    }
    io_.charge(t);
  }

  std::pair<Word, std::uint32_t> pop() {
    std::uint64_t t = 1;  // read root
    auto top = a_[0];
    ++t;  // read last
    a_[0] = a_.back();
    ++t;  // write root
    a_.pop_back();
    std::size_t i = 0;
    while (true) {
      const std::size_t l = 2 * i + 1, r = l + 1;
      if (l >= a_.size()) break;
      std::size_t c = l;
      ++t;  // read left child
      if (r < a_.size()) {
        ++t;  // read right child
        if (a_[r] < a_[l]) c = r;
      }
      ++t;  // compare against hole value
      if (a_[i] <= a_[c]) break;
      std::swap(a_[i], a_[c]);
      t += 2;
      i = c;
    }
    io_.charge(t);
    return top;
  }

 private:
  Sink& io_;
  std::vector<std::pair<Word, std::uint32_t>> a_;
};

using ChargedHeap = BasicChargedHeap<IoMachine>;

// A sorted run living in slow memory: block-aligned start, whole blocks.
struct RunSpan {
  std::uint64_t start = 0;  // word index
  std::uint64_t words = 0;
};

namespace detail {

// Merges k <= degree runs into dst_word. Frames 0..k-1 hold the leading
// block of each run, frame `degree` collects output. Ties break by run
// index, so the merge is stable and deterministic.
inline void merge_group(IoMachine& io, const std::vector<RunSpan>& runs,
                        std::uint64_t dst_word, std::uint64_t degree) {
  const std::uint64_t B = io.params().block;
  const std::uint64_t out_frame = degree;
  ChargedHeap heap(io);
  std::vector<std::uint64_t> cursor(runs.size(), 0);
  for (std::uint32_t j = 0; j < runs.size(); ++j) {
    if (runs[j].words == 0) continue;
    io.read_block(runs[j].start / B, j);
    heap.push(io.load(j * B), j);
  }
  std::uint64_t out_pos = 0;
  std::uint64_t out_block = dst_word / B;
  while (!heap.empty()) {
    auto [value, j] = heap.pop();
    io.store(out_frame * B + out_pos, value);
    if (++out_pos == B) {
      io.write_block(out_frame, out_block++);
      out_pos = 0;
    }
    if (++cursor[j] < runs[j].words) {
      const std::uint64_t c = cursor[j];
      if (c % B == 0) io.read_block((runs[j].start + c) / B, j);
      heap.push(io.load(j * B + c % B), j);
    }
  }
}

}  // namespace detail

// One multiway merge pass as a standalone program. Runs must start on block
// boundaries and span whole blocks; their total lands at dst_word. Degree up
// to m-1 (the output frame is frame `degree`).
inline IoProgram merge_runs_io(std::vector<RunSpan> runs, std::uint64_t dst_word,
                               std::uint64_t degree, IoParams params) {
  params.validate();
  const std::uint64_t B = params.block;
  if (degree < 2) throw IoError("merge degree below 2");
  if (degree > params.frames() - 1) throw IoError("merge degree leaves no output frame");
  if (runs.size() > degree) throw IoError("more runs than merge degree");
  if (dst_word % B != 0) throw IoError("merge output not block aligned");
  std::uint64_t total = 0;
  for (const auto& r : runs) {
    if (r.start % B != 0 || r.words % B != 0)
      throw IoError("run not block aligned");
    total += r.words;
  }
  IoProgram prog;
  prog.frames = degree + 1;
  prog.slow_words = std::max(dst_word + total,
                             [&] {
                               std::uint64_t hi = 0;
                               for (const auto& r : runs) hi = std::max(hi, r.start + r.words);
                               return hi;
                             }());
  prog.body = [runs = std::move(runs), dst_word, degree](IoMachine& io) {
    detail::merge_group(io, runs, dst_word, degree);
  };
  return prog;
}

// Multiway mergesort: run formation in fast-memory-sized chunks, then
// degree-way merge passes ping-ponging between the prefix and a scratch area
// of equal size. The pass count's parity picks the starting area so the
// sorted output always lands in the prefix. The input occupies the first N
// words of slow memory; the block-padding tail is filled with +infinity
// sentinels during formation.
inline IoProgram mergesort_io(std::uint64_t n_words, IoParams params, std::uint64_t degree) {
  params.validate();
  if (n_words == 0) throw IoError("empty sort input");
  const std::uint64_t B = params.block;
  const std::uint64_t M = params.fast_words;
  const std::uint64_t m = params.frames();
  if (degree < 2) throw IoError("merge degree below 2");
  if (degree > m - 2) throw IoError("merge degree must leave an output frame and a spare");

  const std::uint64_t np = ((n_words + B - 1) / B) * B;
  const std::uint64_t runs0 = (np + M - 1) / M;
  std::uint64_t levels = 0;
  for (std::uint64_t r = runs0; r > 1; r = (r + degree - 1) / degree) ++levels;

  IoProgram prog;
  prog.frames = m;
  prog.slow_words = (levels == 0) ? np : 2 * np;
  prog.body = [n_words, np, runs0, levels, degree, B, M](IoMachine& io) {
    const std::uint64_t start_area = (levels % 2 == 1) ? 1 : 0;
    const auto area = [np](std::uint64_t a) { return a * np; };

    // formation: sort fast-memory-sized chunks, write runs to start_area
    for (std::uint64_t cbase = 0; cbase < np; cbase += M) {
      const std::uint64_t cwords = std::min(M, np - cbase);
      const std::uint64_t cblocks = cwords / B;
      for (std::uint64_t j = 0; j < cblocks; ++j) io.read_block(cbase / B + j, j);
      for (std::uint64_t off = n_words > cbase ? n_words - cbase : 0; off < cwords; ++off)
        io.store(off, kWordMax);
      std::vector<Word> tmp(cwords);
      for (std::uint64_t w = 0; w < cwords; ++w) tmp[w] = io.load(w);
      std::sort(tmp.begin(), tmp.end());
      for (std::uint64_t w = 0; w < cwords; ++w) io.store(w, tmp[w]);
      for (std::uint64_t j = 0; j < cblocks; ++j)
        io.write_block(j, (area(start_area) + cbase) / B + j);
    }

    // merge passes
    std::uint64_t cur_area = start_area;
    std::uint64_t run_len = M;
    std::uint64_t n_runs = runs0;
    while (n_runs > 1) {
      const std::uint64_t dst_area = 1 - cur_area;
      std::uint64_t out = area(dst_area);
      for (std::uint64_t g = 0; g < n_runs; g += degree) {
        const std::uint64_t hi = std::min(n_runs, g + degree);
        std::vector<RunSpan> spans;
        std::uint64_t total = 0;
        for (std::uint64_t i = g; i < hi; ++i) {
          const std::uint64_t start = i * run_len;
          const std::uint64_t len = std::min(run_len, np - start);
          spans.push_back({area(cur_area) + start, len});
          total += len;
        }
        detail::merge_group(io, spans, out, degree);
        out += total;
      }
      run_len *= degree;
      n_runs = (n_runs + degree - 1) / degree;
      cur_area = dst_area;
    }
  };
  return prog;
}

// Random but reproducible program mixing transfers, compute touches, and
// bookkeeping charges; exercises executor equivalence.
inline IoProgram random_io_program(IoParams params, std::uint64_t slow_blocks,
                                   std::uint64_t rounds, std::uint64_t seed) {
  params.validate();
  if (slow_blocks == 0) throw IoError("random program needs slow memory");
  IoProgram prog;
  prog.frames = params.frames();
  prog.slow_words = slow_blocks * params.block;
  prog.body = [params, slow_blocks, rounds, seed](IoMachine& io) {
    std::mt19937_64 rng(seed);
    const std::uint64_t m = params.frames();
    const std::uint64_t B = params.block;
    const std::uint64_t M = params.fast_words;
    for (std::uint64_t r = 0; r < rounds; ++r) {
      const std::uint64_t pick = rng() % 4;
      if (pick == 0) {
        io.read_block(rng() % slow_blocks, rng() % m);
      } else if (pick == 1) {
        io.write_block(rng() % m, rng() % slow_blocks);
      } else if (pick == 2) {
        const std::uint64_t touches = 1 + rng() % (2 * B);
        for (std::uint64_t t = 0; t < touches; ++t) {
          const Word v = io.load(rng() % M);
          io.store(rng() % M, v * 3 + static_cast<Word>(t));
        }
      } else {
        io.charge(1 + rng() % 8);
      }
    }
    // make every frame's state observable
    for (std::uint64_t f = 0; f < std::min(m, slow_blocks); ++f) io.write_block(f, f);
  };
  return prog;
}

}  // namespace cachelab
