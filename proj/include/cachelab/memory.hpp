#pragma once

#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cachelab {

using Address = std::uint64_t;  // word index into the simulated space
using Word = std::int64_t;

enum class AccessKind : std::uint8_t { kRead, kWrite };

// One word-granular reference. The cache simulator consumes these.
struct MemoryEvent {
  AccessKind kind;
  Address addr;
};

// Half-open window [base, base+length) of the simulated space.
struct Region {
  std::string name;
  Address base = 0;
  std::uint64_t length = 0;
  std::uint64_t alignment = 1;
  std::uint64_t id = 0;
};

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat word-addressed space with disjoint named regions.
// Placement is deterministic: the same allocation sequence yields the
// same bases. Fresh words read as zero.
class MemoryLayout {
 public:
  explicit MemoryLayout(std::uint64_t space_words = (1ull << 26))
      : space_(space_words), pages_((space_words + kPageWords - 1) / kPageWords) {}

  std::uint64_t space_words() const { return space_; }

  // First fit from the origin honoring alignment, or placement at
  // fixed_base. Alignment must be a power of two.
  Region allocate(std::uint64_t length, std::uint64_t alignment,
                  std::string name = std::string(),
                  std::optional<Address> fixed_base = std::nullopt) {
    check_alignment(alignment);
    if (length == 0) throw LayoutError("allocate: zero-length region");
    Address base;
    if (fixed_base) {
      base = *fixed_base;
      if (base % alignment != 0)
        throw LayoutError("allocate: fixed base " + std::to_string(base) +
                          " not aligned to " + std::to_string(alignment));
      if (!fits(base, length)) throw LayoutError("allocate: out of space");
      if (!free_interval(base, length))
        throw LayoutError("allocate: overlaps an existing region");
    } else {
      base = first_fit(length, alignment);
    }
    return insert(base, length, alignment, std::move(name));
  }

  // Lowest base, aligned to `block`, whose blocks all map to cache sets
  // outside `forbidden` under the modulo mapping set = (addr/block) % sets.
  Region allocate_avoiding_sets(std::uint64_t length, std::uint64_t block,
                                std::uint64_t sets,
                                const std::vector<std::uint64_t>& forbidden,
                                std::string name = std::string()) {
    if (block == 0 || sets == 0) throw LayoutError("allocate_avoiding_sets: bad geometry");
    if (length == 0) throw LayoutError("allocate_avoiding_sets: zero-length region");
    std::vector<bool> bad(sets, false);
    for (auto s : forbidden) {
      if (s >= sets) throw LayoutError("allocate_avoiding_sets: forbidden set out of range");
      bad[s] = true;
    }
    const std::uint64_t blocks_needed = (length + block - 1) / block;
    for (Address base = 0; base + length <= space_;) {
      bool ok = true;
      for (std::uint64_t b = 0; b < blocks_needed; ++b) {
        if (bad[(base / block + b) % sets]) {
          // restart just past the offending block
          base = (base / block + b + 1) * block;
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      if (!free_interval(base, length)) {
        base += block;
        continue;
      }
      return insert(base, length, block, std::move(name));
    }
    throw LayoutError("allocate_avoiding_sets: no feasible placement");
  }

  void release(const Region& r) {
    for (std::size_t i = 0; i < regions_.size(); ++i) {
      if (regions_[i].id == r.id) {
        zero_range(regions_[i].base, regions_[i].length);
        regions_.erase(regions_.begin() + static_cast<std::ptrdiff_t>(i));
        return;
      }
    }
    throw LayoutError("release: unknown region");
  }

  std::pair<Word, MemoryEvent> read(const Region& r, std::uint64_t offset) {
    const Address a = addr_of(r, offset);
    return {peek(a), MemoryEvent{AccessKind::kRead, a}};
  }

  MemoryEvent write(const Region& r, std::uint64_t offset, Word value) {
    const Address a = addr_of(r, offset);
    poke(a, value);
    return MemoryEvent{AccessKind::kWrite, a};
  }

  // Raw accessors used by tests and bulk I/O; no events.
  Word peek(Address a) const {
    if (a >= space_) throw LayoutError("peek: address out of space");
    const auto& pg = pages_[a / kPageWords];
    return pg ? pg[a % kPageWords] : 0;
  }

  void poke(Address a, Word v) {
    if (a >= space_) throw LayoutError("poke: address out of space");
    auto& pg = pages_[a / kPageWords];
    if (!pg) {
      pg = std::make_unique<Word[]>(kPageWords);
      std::memset(pg.get(), 0, kPageWords * sizeof(Word));
    }
    pg[a % kPageWords] = v;
  }

  Word peek(const Region& r, std::uint64_t offset) const { return peek(addr_of(r, offset)); }
  void poke(const Region& r, std::uint64_t offset, Word v) { poke(addr_of(r, offset), v); }

  std::size_t region_count() const { return regions_.size(); }

 private:
  static constexpr std::uint64_t kPageWords = 1ull << 16;

  struct Interval {
    Address base;
    std::uint64_t length;
    std::uint64_t id;
  };

  static void check_alignment(std::uint64_t alignment) {
    if (alignment == 0 || (alignment & (alignment - 1)) != 0)
      throw LayoutError("allocate: alignment must be a power of two");
  }

  Address addr_of(const Region& r, std::uint64_t offset) const {
    if (offset >= r.length)
      throw LayoutError("access: offset " + std::to_string(offset) +
                        " outside region '" + r.name + "' of length " +
                        std::to_string(r.length));
    return r.base + offset;
  }

  bool fits(Address base, std::uint64_t length) const {
    return length <= space_ && base <= space_ - length;
  }

  bool free_interval(Address base, std::uint64_t length) const {
    for (const auto& iv : regions_)
      if (base < iv.base + iv.length && iv.base < base + length) return false;
    return true;
  }

  Address first_fit(std::uint64_t length, std::uint64_t alignment) const {
    // regions_ kept sorted by base
    Address cursor = 0;
    for (const auto& iv : regions_) {
      Address aligned = align_up(cursor, alignment);
      if (aligned + length <= iv.base && fits(aligned, length)) return aligned;
      if (iv.base + iv.length > cursor) cursor = iv.base + iv.length;
    }
    Address aligned = align_up(cursor, alignment);
    if (!fits(aligned, length)) throw LayoutError("allocate: out of space");
    return aligned;
  }

  static Address align_up(Address a, std::uint64_t alignment) {
    return (a + alignment - 1) / alignment * alignment;
  }

  Region insert(Address base, std::uint64_t length, std::uint64_t alignment,
                std::string name) {
    Interval iv{base, length, next_id_++};
    auto pos = regions_.begin();
    while (pos != regions_.end() && pos->base < base) ++pos;
    regions_.insert(pos, iv);
    zero_range(base, length);
    Region r;
    r.name = std::move(name);
    r.base = base;
    r.length = length;
    r.alignment = alignment;
    r.id = iv.id;
    return r;
  }

  void zero_range(Address base, std::uint64_t length) {
    for (Address a = base; a < base + length;) {
      auto& pg = pages_[a / kPageWords];
      const std::uint64_t off = a % kPageWords;
      const std::uint64_t n = std::min(kPageWords - off, base + length - a);
      if (pg) std::memset(pg.get() + off, 0, n * sizeof(Word));
      a += n;
    }
  }

  std::uint64_t space_;
  std::vector<std::unique_ptr<Word[]>> pages_;
  std::vector<Interval> regions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace cachelab
