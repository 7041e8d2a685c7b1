#include "cachelab/memory.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace cachelab;

TEST(MemoryLayout, FirstFitFromOrigin) {
  MemoryLayout m;
  Region r = m.allocate(16, 4, "a");
  EXPECT_EQ(r.base, 0u);
  EXPECT_EQ(r.length, 16u);
}

TEST(MemoryLayout, FirstFitSkipsUsedPrefix) {
  MemoryLayout m;
  m.allocate(16, 1, "a");  // occupies [0,16)
  Region r = m.allocate(8, 8, "b");
  EXPECT_EQ(r.base, 16u);
}

TEST(MemoryLayout, UnalignedFixedBaseRejected) {
  MemoryLayout m;
  EXPECT_THROW(m.allocate(8, 8, "x", 12), LayoutError);
}

TEST(MemoryLayout, FixedBaseOverlapRejected) {
  MemoryLayout m;
  m.allocate(16, 1, "a");
  EXPECT_THROW(m.allocate(8, 1, "b", 8), LayoutError);
  EXPECT_NO_THROW(m.allocate(8, 1, "c", 16));
}

TEST(MemoryLayout, OutOfSpaceRejected) {
  MemoryLayout m(64);
  m.allocate(60, 1, "a");
  EXPECT_THROW(m.allocate(8, 1, "b"), LayoutError);
  EXPECT_THROW(m.allocate(8, 1, "c", 60), LayoutError);
}

TEST(MemoryLayout, NonPowerOfTwoAlignmentRejected) {
  MemoryLayout m;
  EXPECT_THROW(m.allocate(8, 3, "x"), LayoutError);
  EXPECT_THROW(m.allocate(8, 0, "x"), LayoutError);
}

// Brute-force placement oracle: lowest block-aligned base whose blocks all
// avoid the forbidden sets and that does not overlap allocated intervals.
static std::optional<Address> avoid_sets_oracle(
    std::uint64_t space, std::uint64_t length, std::uint64_t block,
    std::uint64_t sets, const std::set<std::uint64_t>& forbidden,
    const std::vector<std::pair<Address, std::uint64_t>>& used) {
  for (Address base = 0; base + length <= space; base += block) {
    bool ok = true;
    for (Address a = base; a < base + length && ok; a += block)
      if (forbidden.count((a / block) % sets)) ok = false;
    for (const auto& [ub, ul] : used)
      if (base < ub + ul && ub < base + length) ok = false;
    if (ok) return base;
  }
  return std::nullopt;
}

TEST(MemoryLayout, AvoidSetsMatchesOracleExample) {
  auto want = avoid_sets_oracle(1 << 20, 8, 4, 4, {1, 2}, {});
  ASSERT_TRUE(want.has_value());
  EXPECT_EQ(*want, 12u);  // blocks 3,4 -> sets 3,0

  MemoryLayout m;
  Region r = m.allocate_avoiding_sets(8, 4, 4, {1, 2}, "runs");
  EXPECT_EQ(r.base, *want);
}

TEST(MemoryLayout, AvoidSetsRandomizedAgainstOracle) {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 50; ++iter) {
    const std::uint64_t block = 1ull << (rng() % 4 + 1);
    const std::uint64_t sets = 1ull << (rng() % 4 + 1);
    std::set<std::uint64_t> forbidden;
    const std::uint64_t nf = rng() % sets;
    while (forbidden.size() < nf) forbidden.insert(rng() % sets);
    const std::uint64_t length = rng() % (3 * block * sets) + 1;

    MemoryLayout m(1 << 14);
    std::vector<std::pair<Address, std::uint64_t>> used;
    for (int k = 0; k < 3; ++k) {
      auto len = rng() % 64 + 1;
      Region r = m.allocate(len, 1);
      used.emplace_back(r.base, r.length);
    }
    auto want = avoid_sets_oracle(
        1 << 14, length, block, sets,
        forbidden, used);
    std::vector<std::uint64_t> fvec(forbidden.begin(), forbidden.end());
    if (want) {
      Region r = m.allocate_avoiding_sets(length, block, sets, fvec);
      EXPECT_EQ(r.base, *want) << "iter " << iter;
    } else {
      EXPECT_THROW(m.allocate_avoiding_sets(length, block, sets, fvec),
                   LayoutError)
          << "iter " << iter;
    }
  }
}

TEST(MemoryLayout, AvoidSetsInfeasibleSpanRejected) {
  MemoryLayout m;
  // only set 3 is allowed: the longest clean span is one block
  EXPECT_THROW(m.allocate_avoiding_sets(8, 4, 4, {0, 1, 2}, "x"), LayoutError);
  EXPECT_NO_THROW(m.allocate_avoiding_sets(4, 4, 4, {0, 1, 2}, "y"));
}

TEST(MemoryLayout, FreshReadsZeroAndWritesPersist) {
  MemoryLayout m;
  Region r = m.allocate(32, 1, "d");
  auto [v0, e0] = m.read(r, 5);
  EXPECT_EQ(v0, 0);
  EXPECT_EQ(e0.addr, r.base + 5);
  EXPECT_EQ(e0.kind, AccessKind::kRead);

  MemoryEvent w = m.write(r, 5, 42);
  EXPECT_EQ(w.kind, AccessKind::kWrite);
  EXPECT_EQ(w.addr, r.base + 5);
  auto [v1, e1] = m.read(r, 5);
  EXPECT_EQ(v1, 42);
  (void)e1;
}

TEST(MemoryLayout, OutOfBoundsAccessRejected) {
  MemoryLayout m;
  Region r = m.allocate(8, 1, "d");
  EXPECT_THROW(m.read(r, 8), LayoutError);
  EXPECT_THROW(m.write(r, 9, 1), LayoutError);
}

TEST(MemoryLayout, ReleasedSpaceIsReusedAndZeroed) {
  MemoryLayout m;
  Region a = m.allocate(16, 1, "a");
  m.write(a, 0, 99);
  m.release(a);
  Region b = m.allocate(16, 1, "b");
  EXPECT_EQ(b.base, 0u);
  auto [v, e] = m.read(b, 0);
  EXPECT_EQ(v, 0);
  (void)e;
}

TEST(MemoryLayout, RegionsStayDisjointUnderChurn) {
  std::mt19937_64 rng(11);
  MemoryLayout m(1 << 16);
  std::vector<Region> live;
  for (int step = 0; step < 300; ++step) {
    if (!live.empty() && rng() % 3 == 0) {
      std::size_t i = rng() % live.size();
      m.release(live[i]);
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      auto len = rng() % 200 + 1;
      auto align = 1ull << (rng() % 5);
      live.push_back(m.allocate(len, align));
    }
    for (std::size_t i = 0; i < live.size(); ++i)
      for (std::size_t j = i + 1; j < live.size(); ++j) {
        bool overlap = live[i].base < live[j].base + live[j].length &&
                       live[j].base < live[i].base + live[i].length;
        EXPECT_FALSE(overlap);
      }
  }
}

TEST(MemoryLayout, AllocationDeterministic) {
  auto run = [] {
    MemoryLayout m;
    std::vector<Address> bases;
    std::mt19937_64 rng(3);
    std::vector<Region> live;
    for (int i = 0; i < 60; ++i) {
      if (!live.empty() && rng() % 4 == 0) {
        m.release(live.back());
        live.pop_back();
      } else {
        live.push_back(m.allocate(rng() % 100 + 1, 1ull << (rng() % 4)));
        bases.push_back(live.back().base);
      }
    }
    return bases;
  };
  EXPECT_EQ(run(), run());
}
