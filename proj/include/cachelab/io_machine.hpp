#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cachelab/memory.hpp"

namespace cachelab {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two-level I/O model: fast memory of M words in m = M/B frames, slow memory
// addressed in B-word blocks, explicit block transfers.
struct IoParams {
  std::uint64_t fast_words = 0;  // M
  std::uint64_t block = 0;       // B

  std::uint64_t frames() const { return fast_words / block; }  // m

  void validate() const {
    if (block == 0 || fast_words % block != 0)
      throw IoError("io params: block must divide fast memory size");
    if (fast_words < 3 * block)
      throw IoError("io params: fast memory must hold at least three blocks");
  }
};

// transfer descriptor for one round
struct IoRound {
  enum class Dir : std::uint8_t { kLoad, kStore };
  Dir dir = Dir::kLoad;
  std::uint64_t slow_block = 0;  // b_t
  std::uint64_t frame = 0;       // a_t
};

struct IoStats {
  std::uint64_t transfers = 0;  // T
  std::uint64_t touches = 0;    // I
};

// Abstract executor. A program drives one of these; the plain machine runs
// on flat vectors, the emulator replays the same calls through a cache.
class IoMachine {
 public:
  virtual ~IoMachine() = default;

  const IoParams& params() const { return params_; }

  // compute layer: word touches in fast memory, each counts 1 into I;
  // charge() adds bookkeeping work (heap maintenance) with no memory touch
  virtual Word load(std::uint64_t fast_off) = 0;
  virtual void store(std::uint64_t fast_off, Word v) = 0;
  virtual void charge(std::uint64_t n) = 0;

  // block transfers, each counts 1 into T
  virtual void read_block(std::uint64_t slow_block, std::uint64_t frame) = 0;
  virtual void write_block(std::uint64_t frame, std::uint64_t slow_block) = 0;

 protected:
  explicit IoMachine(IoParams p) : params_(p) { params_.validate(); }
  IoParams params_;
};

// A program is a re-runnable body plus the resources it needs. `frames`
// bounds the fast frames it touches, `slow_words` the slow memory span.
struct IoProgram {
  std::uint64_t slow_words = 0;
  std::uint64_t frames = 0;
  std::function<void(IoMachine&)> body;
};

class PlainIoMachine final : public IoMachine {
 public:
  PlainIoMachine(IoParams p, std::vector<Word> slow)
      : IoMachine(p), fast_(p.fast_words, 0), slow_(std::move(slow)) {}

  Word load(std::uint64_t off) override {
    check_fast(off);
    ++stats_.touches;
    return fast_[off];
  }

  void store(std::uint64_t off, Word v) override {
    check_fast(off);
    ++stats_.touches;
    fast_[off] = v;
  }

  void charge(std::uint64_t n) override { stats_.touches += n; }

  void read_block(std::uint64_t slow_block, std::uint64_t frame) override {
    check_round(slow_block, frame);
    ++stats_.transfers;
    const std::uint64_t B = params_.block;
    for (std::uint64_t w = 0; w < B; ++w) fast_[frame * B + w] = slow_[slow_block * B + w];
  }

  void write_block(std::uint64_t frame, std::uint64_t slow_block) override {
    check_round(slow_block, frame);
    ++stats_.transfers;
    const std::uint64_t B = params_.block;
    for (std::uint64_t w = 0; w < B; ++w) slow_[slow_block * B + w] = fast_[frame * B + w];
  }

  const IoStats& stats() const { return stats_; }
  const std::vector<Word>& slow() const { return slow_; }
  std::vector<Word>&& take_slow() { return std::move(slow_); }

 private:
  void check_fast(std::uint64_t off) const {
    if (off >= params_.fast_words)
      throw IoError("compute touch outside fast memory: offset " + std::to_string(off));
  }

  void check_round(std::uint64_t slow_block, std::uint64_t frame) const {
    if (frame >= params_.frames())
      throw IoError("frame index " + std::to_string(frame) + " out of range");
    if ((slow_block + 1) * params_.block > slow_.size())
      throw IoError("slow block " + std::to_string(slow_block) + " out of range");
  }

  std::vector<Word> fast_;
  std::vector<Word> slow_;
  IoStats stats_;
};

// Executes the program on flat memory. The slow vector is grown (zero
// filled) to the program's declared span before the run.
inline std::pair<std::vector<Word>, IoStats> run_io(const IoProgram& prog, IoParams params,
                                                    std::vector<Word> slow) {
  params.validate();
  if (prog.frames > params.frames()) throw IoError("program needs more frames than available");
  if (slow.size() < prog.slow_words) slow.resize(prog.slow_words, 0);
  PlainIoMachine m(params, std::move(slow));
  if (prog.body) prog.body(m);
  IoStats st = m.stats();
  return {std::move(m.take_slow()), st};
}

}  // namespace cachelab
