#include <gtest/gtest.h>

#include <cstdint>
#include <random>
#include <vector>

#include "cachelab/machine.hpp"
#include "cachelab/transpose.hpp"

namespace cachelab {
namespace {

HierarchySpec two_level() {
  HierarchySpec h;
  h.levels.push_back({512, 8, 1, 10});     // 64 lines, B=8
  h.levels.push_back({4096, 32, 1, 100});  // 128 lines, B=32
  h.validate();
  return h;
}

HierarchySpec desk() {
  HierarchySpec h;
  h.levels.push_back({32768, 32, 1, 50});
  h.validate();
  return h;
}

std::vector<Word> random_values(std::uint64_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Word> v(n);
  for (auto& w : v) w = rng() % 1000000;
  return v;
}

std::vector<Word> transposed(const std::vector<Word>& v, std::uint64_t rows,
                             std::uint64_t cols) {
  std::vector<Word> t(v.size());
  for (std::uint64_t i = 0; i < rows; ++i)
    for (std::uint64_t j = 0; j < cols; ++j) t[j * rows + i] = v[i * cols + j];
  return t;
}

Matrix matrix_at(Machine& m, std::uint64_t rows, std::uint64_t cols, Address base,
                 std::uint64_t align, const char* name) {
  Matrix a;
  a.region = m.layout().allocate(rows * cols, align, name, base);
  a.rows = rows;
  a.cols = cols;
  return a;
}

// miss slack beyond the 3-lines-per-row envelope: scratch priming plus edges
std::uint64_t gather_slack(const HierarchySpec& h, std::size_t level, std::uint64_t bk) {
  return 4 * bk / h.levels[level].block + 8;
}

TEST(TransposeTest, MatchesOracleOnSmallAndRaggedShapes) {
  const std::uint64_t shapes[][2] = {{1, 1},  {2, 2},  {2, 5},   {5, 2},   {7, 7},
                                     {2, 33}, {33, 2}, {33, 40}, {40, 33}, {40, 40}};
  for (const auto& s : shapes) {
    Machine m(desk());
    Matrix a = allocate_matrix(m, s[0], s[1], "A");
    Matrix out = allocate_matrix(m, s[1], s[0], "out");
    const auto v = random_values(s[0] * s[1], 11 + s[0] * 100 + s[1]);
    fill_matrix(m, a, v);
    transpose_multilevel(m, a, out);
    EXPECT_EQ(matrix_values(m, out), transposed(v, s[0], s[1]))
        << s[0] << "x" << s[1];
  }
}

TEST(TransposeTest, TransposesInPlaceIncludingRaggedTiles) {
  // 128 tiles exactly; 40 leaves an 8-wide ragged fringe (pair and diagonal)
  for (std::uint64_t n : {128ull, 40ull}) {
    Machine m(two_level());
    Matrix a = allocate_matrix(m, n, n, "A");
    const auto v = random_values(n * n, 23 + n);
    fill_matrix(m, a, v);
    transpose_multilevel(m, a, a);
    EXPECT_EQ(matrix_values(m, a), transposed(v, n, n)) << n;
  }
}

TEST(TransposeTest, RejectsBadShapesAndOptions) {
  Machine m(two_level());
  Matrix a = allocate_matrix(m, 64, 32, "A");
  Matrix bad_shape = allocate_matrix(m, 64, 32, "B");
  EXPECT_THROW(transpose_multilevel(m, a, bad_shape), TransposeError);

  // overlapping but not aliasing
  Matrix shifted = a;
  shifted.region.base += 32;
  shifted.rows = 32;
  shifted.cols = 64;
  EXPECT_THROW(transpose_multilevel(m, a, shifted), TransposeError);

  // in-place rectangular
  Matrix alias = a;
  alias.rows = 32;
  alias.cols = 64;
  EXPECT_THROW(transpose_multilevel(m, a, alias), TransposeError);

  // degraded staging insists on square block-multiple shapes
  Matrix r = allocate_matrix(m, 64, 64, "R");
  Matrix r40 = allocate_matrix(m, 40, 40, "R40");
  TransposeOptions degraded;
  degraded.single_staging_slot = true;
  Matrix rt = allocate_matrix(m, 32, 64, "Rt");
  EXPECT_THROW(transpose_multilevel(m, a, rt, degraded), TransposeError);
  EXPECT_THROW(transpose_multilevel(m, r40, r40, degraded), TransposeError);
  EXPECT_NO_THROW(transpose_multilevel(m, r, r, degraded));
}

TEST(TransposeTest, GatherValidatesItsArguments) {
  Machine m(two_level());
  const std::uint64_t bk = 32;
  Matrix a = allocate_matrix(m, 64, 64, "A");
  Region staging = m.layout().allocate(bk * bk, bk, "st");
  Region scratch = m.layout().allocate(4 * bk, bk, "x");
  Region tiny = m.layout().allocate(2 * bk, bk, "tiny");
  EXPECT_THROW(gather_submatrix(m, a, 48, 0, 32, 32, staging, 0, scratch), TransposeError);
  EXPECT_THROW(gather_submatrix(m, a, 0, 0, 64, 64, staging, 0, scratch), TransposeError);
  EXPECT_THROW(gather_submatrix(m, a, 0, 0, 32, 32, staging, 0, tiny), TransposeError);
}

TEST(TransposeTest, AlignedGatherStaysWithinThreeLinesPerRow) {
  const HierarchySpec h = two_level();
  const std::uint64_t bk = 32, W = bk * bk;
  Machine m(h);
  Matrix a = allocate_matrix(m, 32, 32, "A");
  fill_matrix(m, a, random_values(W, 5));
  Region staging = m.layout().allocate(W, bk, "st");
  Region scratch = m.layout().allocate(4 * bk, bk, "x");
  GatherReport g = gather_submatrix(m, a, 0, 0, bk, bk, staging, 0, scratch);
  for (std::size_t lv = 0; lv < h.levels.size(); ++lv) {
    EXPECT_LE(g.stats.levels[lv].misses,
              3 * W / h.levels[lv].block + gather_slack(h, lv, bk))
        << "level " << lv;
  }
  // the inverse direction honors the same envelope and restores the matrix
  std::vector<Word> staged(W);
  for (std::uint64_t i = 0; i < W; ++i) staged[i] = m.layout().peek(staging, i);
  GatherReport s = scatter_submatrix(m, a, 0, 0, bk, bk, staging, 0, scratch);
  for (std::size_t lv = 0; lv < h.levels.size(); ++lv) {
    EXPECT_LE(s.stats.levels[lv].misses,
              3 * W / h.levels[lv].block + gather_slack(h, lv, bk));
  }
  EXPECT_EQ(matrix_values(m, a), staged);
}

TEST(TransposeTest, GatherBoundHoldsAcrossRandomPlacements) {
  const HierarchySpec h = two_level();
  const std::uint64_t bk = 32, W = bk * bk;
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    Machine m(h);
    const std::uint64_t span = m.layout().space_words() / bk - 4 * W;
    auto random_base = [&]() { return (rng() % span) * bk; };
    Matrix a;
    for (;;) {
      try {
        a = matrix_at(m, bk, bk, random_base(), bk, "A");
        break;
      } catch (const LayoutError&) {
      }
    }
    Region staging, scratch;
    for (;;) {
      try {
        staging = m.layout().allocate(W, bk, "st", random_base());
        break;
      } catch (const LayoutError&) {
      }
    }
    for (;;) {
      try {
        scratch = m.layout().allocate(4 * bk, bk, "x", random_base());
        break;
      } catch (const LayoutError&) {
      }
    }
    fill_matrix(m, a, random_values(W, 100 + trial));
    GatherReport g = gather_submatrix(m, a, 0, 0, bk, bk, staging, 0, scratch);
    for (std::size_t lv = 0; lv < h.levels.size(); ++lv) {
      ASSERT_LE(g.stats.levels[lv].misses,
                3 * W / h.levels[lv].block + gather_slack(h, lv, bk))
          << "trial " << trial << " level " << lv;
    }
  }
}

TEST(TransposeTest, WorstCasePlacementRoutesRowsWithoutThrashing) {
  // every source row lands on the same sets as its staging row at both
  // levels, so every row must detour through the scratch blocks
  const HierarchySpec h = two_level();
  const std::uint64_t bk = 32, W = bk * bk;
  const std::uint64_t wrap = h.levels.back().capacity;  // 4096 words, both levels divide
  Machine m(h);
  Matrix a = matrix_at(m, bk, bk, 0, bk, "A");
  Region staging = m.layout().allocate(W, bk, "st", Address{wrap});
  Region scratch = m.layout().allocate(4 * bk, bk, "x");
  fill_matrix(m, a, random_values(W, 9));
  GatherReport g = gather_submatrix(m, a, 0, 0, bk, bk, staging, 0, scratch);
  EXPECT_EQ(g.routed_rows, bk);
  for (std::size_t lv = 0; lv < h.levels.size(); ++lv) {
    EXPECT_LE(g.stats.levels[lv].misses,
              3 * W / h.levels[lv].block + gather_slack(h, lv, bk))
        << "level " << lv;
  }
  for (std::uint64_t i = 0; i < W; ++i)
    EXPECT_EQ(m.layout().peek(staging, i), m.layout().peek(a.region, i));
}

TEST(TransposeTest, UnalignedGatherStaysWithinFourLinesPerRow) {
  const HierarchySpec h = two_level();
  const std::uint64_t bk = 32, W = bk * bk;
  Machine m(h);
  // base off a block boundary: every source row straddles one extra line
  Matrix a = matrix_at(m, bk, bk, 3, 1, "A");
  fill_matrix(m, a, random_values(W, 13));
  Region staging = m.layout().allocate(W, bk, "st");
  Region scratch = m.layout().allocate(4 * bk, bk, "x");
  GatherReport g = gather_submatrix(m, a, 0, 0, bk, bk, staging, 0, scratch);
  for (std::size_t lv = 0; lv < h.levels.size(); ++lv) {
    EXPECT_LE(g.stats.levels[lv].misses,
              4 * W / h.levels[lv].block + gather_slack(h, lv, bk))
        << "level " << lv;
  }
}

TEST(TransposeTest, CostStaysWithinTheLadderBoundWithCleanInnerPhase) {
  const HierarchySpec h = two_level();
  const std::uint64_t n = 512;
  Machine m(h);
  Matrix a = allocate_matrix(m, n, n, "A");
  Matrix out = allocate_matrix(m, n, n, "out");
  const auto v = random_values(n * n, 42);
  fill_matrix(m, a, v);
  TransposeReport rep = transpose_multilevel(m, a, out);
  EXPECT_EQ(matrix_values(m, out), transposed(v, n, n));

  std::uint64_t bound = 4 * n * n;
  for (const auto& lv : h.levels) bound += 7 * (n * n / lv.block) * lv.latency;
  EXPECT_LE(rep.stats.cost, bound);
  EXPECT_EQ(rep.inner_staging_conflicts, 0u);
}

TEST(TransposeTest, InPlaceInnerPhaseIsConflictFree) {
  const std::uint64_t n = 128;
  Machine m(two_level());
  Matrix a = allocate_matrix(m, n, n, "A");
  const auto v = random_values(n * n, 17);
  fill_matrix(m, a, v);
  TransposeReport rep = transpose_multilevel(m, a, a);
  EXPECT_EQ(matrix_values(m, a), transposed(v, n, n));
  EXPECT_EQ(rep.inner_staging_conflicts, 0u);
}

TEST(TransposeTest, RectangularTransposeIsExact) {
  Machine m(two_level());
  Matrix a = allocate_matrix(m, 96, 64, "A");
  Matrix out = allocate_matrix(m, 64, 96, "out");
  const auto v = random_values(96 * 64, 31);
  fill_matrix(m, a, v);
  transpose_multilevel(m, a, out);
  EXPECT_EQ(matrix_values(m, out), transposed(v, 96, 64));
}

TEST(TransposeTest, SingleStagingSlotCostsAboutTwice) {
  const std::uint64_t n = 256;
  const auto v = random_values(n * n, 77);

  Machine paired(two_level());
  Matrix ap = allocate_matrix(paired, n, n, "A");
  fill_matrix(paired, ap, v);
  TransposeReport rp = transpose_multilevel(paired, ap, ap);
  EXPECT_EQ(matrix_values(paired, ap), transposed(v, n, n));

  Machine single(two_level());
  Matrix as = allocate_matrix(single, n, n, "A");
  fill_matrix(single, as, v);
  TransposeOptions degraded;
  degraded.single_staging_slot = true;
  TransposeReport rs = transpose_multilevel(single, as, as, degraded);
  EXPECT_EQ(matrix_values(single, as), transposed(v, n, n));

  const double factor =
      static_cast<double>(rs.stats.cost) / static_cast<double>(rp.stats.cost);
  EXPECT_GE(factor, 1.2);
  EXPECT_LE(factor, 2.5);
}

TEST(TransposeTest, ReleasesStagingAndWatches) {
  Machine m(two_level());
  Matrix a = allocate_matrix(m, 64, 64, "A");
  Matrix out = allocate_matrix(m, 64, 64, "out");
  fill_matrix(m, a, random_values(64 * 64, 3));
  const std::size_t regions = m.layout().region_count();
  const std::size_t watches = m.watch_count();
  transpose_multilevel(m, a, out);
  transpose_multilevel(m, a, a);
  EXPECT_EQ(m.layout().region_count(), regions);
  EXPECT_EQ(m.watch_count(), watches);
}

}  // namespace
}  // namespace cachelab
