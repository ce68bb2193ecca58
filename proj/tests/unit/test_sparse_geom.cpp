#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <tuple>

#include "sqh/error.hpp"
#include "sqh/nn.hpp"
#include "sqh/sparse_geom.hpp"

using namespace sqh;

namespace {

// Brute-force interleave, bit by bit, x most significant.
uint64_t interleaveOracle(const VoxelCoord& c)
{
  uint64_t key = 0;
  for (int b = 20; b >= 0; --b) {
    key = (key << 1) | ((uint64_t(c.x) >> b) & 1);
    key = (key << 1) | ((uint64_t(c.y) >> b) & 1);
    key = (key << 1) | ((uint64_t(c.z) >> b) & 1);
  }
  return key;
}

std::vector<VoxelCoord> randomCoords(nn::Rng& rng, std::size_t n, int extent)
{
  std::vector<VoxelCoord> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({int32_t(rng.index(extent)), int32_t(rng.index(extent)),
                   int32_t(rng.index(extent))});
  return out;
}

std::set<std::tuple<int, int, int>> asSet(std::span<const VoxelCoord> cs)
{
  std::set<std::tuple<int, int, int>> s;
  for (auto& c : cs)
    s.insert({c.x, c.y, c.z});
  return s;
}

}  // namespace

TEST(Morton, KeyMatchesInterleaveOracle)
{
  nn::Rng rng(3);
  for (auto& c : randomCoords(rng, 500, 1 << 16)) {
    EXPECT_EQ(mortonKey(c), interleaveOracle(c));
    EXPECT_EQ(mortonDecode(mortonKey(c)), c);
  }
}

TEST(Morton, SortSmallExample)
{
  std::vector<VoxelCoord> cs = {{1, 0, 0}, {0, 0, 0}};
  mortonSort(cs);
  EXPECT_EQ(cs[0], (VoxelCoord{0, 0, 0}));
  EXPECT_EQ(cs[1], (VoxelCoord{1, 0, 0}));
}

TEST(Morton, SortMatchesOracleAndIsIdempotent)
{
  nn::Rng rng(11);
  auto cs = randomCoords(rng, 50, 64);
  auto expected = cs;
  std::stable_sort(expected.begin(), expected.end(), [](auto& a, auto& b) {
    return interleaveOracle(a) < interleaveOracle(b);
  });
  mortonSort(cs);
  EXPECT_EQ(cs, expected);
  auto again = cs;
  mortonSort(again);
  EXPECT_EQ(again, cs);
}

TEST(Voxelize, SinglePointMapsToOrigin)
{
  std::vector<std::array<double, 3>> pts = {{0.4, 0.4, 0.4}};
  auto pc = voxelize(pts, 1);
  ASSERT_EQ(pc.numPoints(), 1u);
  EXPECT_EQ(pc.coords[0], (VoxelCoord{0, 0, 0}));
}

TEST(Voxelize, DuplicatesMerge)
{
  std::vector<std::array<double, 3>> pts = {{0, 0, 0}, {10, 10, 10}, {0.01, 0, 0}};
  auto pc = voxelize(pts, 3);
  EXPECT_EQ(pc.numPoints(), 2u);
}

TEST(Voxelize, UnitCubeCorners)
{
  std::vector<std::array<double, 3>> pts;
  for (int i = 0; i < 8; ++i)
    pts.push_back({double(i >> 2 & 1), double(i >> 1 & 1), double(i & 1)});
  auto pc = voxelize(pts, 1);
  ASSERT_EQ(pc.numPoints(), 8u);
  EXPECT_EQ(asSet(pc.coords), asSet(childCoords(std::vector<VoxelCoord>{{0, 0, 0}})));
  EXPECT_TRUE(isStrictlyMortonSorted(pc.coords));
}

TEST(Voxelize, Errors)
{
  std::vector<std::array<double, 3>> none;
  try {
    voxelize(none, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "empty cloud");
  }
  std::vector<std::array<double, 3>> bad = {{0, 0, 0}, {std::nan(""), 0, 0}};
  try {
    voxelize(bad, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "invalid point");
  }
}

TEST(Blocks, SingleBlock)
{
  auto pc = SparsePointCloud::fromCoords(7, {{1, 2, 3}, {5, 6, 7}});
  auto blocks = partitionBlocks(pc, 64);
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].origin, (VoxelCoord{0, 0, 0}));
}

TEST(Blocks, OnePointPerBlock)
{
  auto pc = SparsePointCloud::fromCoords(7, {{64, 0, 0}, {0, 0, 0}});
  auto blocks = partitionBlocks(pc, 64);
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0].origin, (VoxelCoord{0, 0, 0}));
  EXPECT_EQ(blocks[1].origin, (VoxelCoord{64, 0, 0}));
}

TEST(Blocks, ReassembleIsIdentity)
{
  nn::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto pc = SparsePointCloud::fromCoords(8, randomCoords(rng, 100, 256));
    auto blocks = partitionBlocks(pc, 32);
    for (auto& b : blocks)
      for (auto& c : b.cloud.coords) {
        EXPECT_LT(c.x, 32);
        EXPECT_LT(c.y, 32);
        EXPECT_LT(c.z, 32);
      }
    for (std::size_t i = 1; i < blocks.size(); ++i)
      EXPECT_TRUE(mortonLess(blocks[i - 1].origin, blocks[i].origin));
    auto back = reassembleBlocks(blocks, 8);
    EXPECT_EQ(asSet(back.coords), asSet(pc.coords));
    EXPECT_EQ(back.coords, pc.coords);
  }
}

TEST(Coords, ParentsAndAncestors)
{
  std::vector<VoxelCoord> cs = {{0, 0, 0}, {1, 1, 1}, {2, 0, 0}, {7, 7, 7}};
  mortonSort(cs);
  auto parents = parentCoords(cs);
  EXPECT_EQ(parents.size(), 3u);
  EXPECT_TRUE(isStrictlyMortonSorted(parents));
  auto anc = ancestorCoords(cs, 3);
  ASSERT_EQ(anc.size(), 1u);
  EXPECT_EQ(anc[0], (VoxelCoord{0, 0, 0}));
  EXPECT_EQ(findCoord(cs, {2, 0, 0}), 2);
  EXPECT_EQ(findCoord(cs, {3, 0, 0}), -1);
}
