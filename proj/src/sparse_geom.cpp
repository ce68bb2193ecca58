#include "sqh/sparse_geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sqh/error.hpp"

namespace sqh {

namespace {

// Spreads the low 21 bits of v so that bit i lands at bit 3i.
uint64_t spreadBits(uint64_t v)
{
  v &= 0x1fffff;
  v = (v | v << 32) & 0x1f00000000ffffULL;
  v = (v | v << 16) & 0x1f0000ff0000ffULL;
  v = (v | v << 8) & 0x100f00f00f00f00fULL;
  v = (v | v << 4) & 0x10c30c30c30c30c3ULL;
  v = (v | v << 2) & 0x1249249249249249ULL;
  return v;
}

uint64_t compactBits(uint64_t v)
{
  v &= 0x1249249249249249ULL;
  v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ULL;
  v = (v ^ (v >> 4)) & 0x100f00f00f00f00fULL;
  v = (v ^ (v >> 8)) & 0x1f0000ff0000ffULL;
  v = (v ^ (v >> 16)) & 0x1f00000000ffffULL;
  v = (v ^ (v >> 32)) & 0x1fffff;
  return v;
}

}  // namespace

uint64_t mortonKey(const VoxelCoord& c)
{
  return (spreadBits(uint32_t(c.x)) << 2) | (spreadBits(uint32_t(c.y)) << 1)
    | spreadBits(uint32_t(c.z));
}

VoxelCoord mortonDecode(uint64_t key)
{
  return {int32_t(compactBits(key >> 2)), int32_t(compactBits(key >> 1)),
          int32_t(compactBits(key))};
}

void mortonSort(std::vector<VoxelCoord>& coords)
{
  std::stable_sort(coords.begin(), coords.end(), mortonLess);
}

bool isStrictlyMortonSorted(std::span<const VoxelCoord> coords)
{
  for (std::size_t i = 1; i < coords.size(); ++i)
    if (mortonKey(coords[i - 1]) >= mortonKey(coords[i]))
      return false;
  return true;
}

int64_t findCoord(std::span<const VoxelCoord> sorted, const VoxelCoord& c)
{
  if (c.x < 0 || c.y < 0 || c.z < 0)
    return -1;
  const uint64_t key = mortonKey(c);
  auto it = std::lower_bound(
    sorted.begin(), sorted.end(), key,
    [](const VoxelCoord& a, uint64_t k) { return mortonKey(a) < k; });
  if (it == sorted.end() || !(*it == c))
    return -1;
  return it - sorted.begin();
}

int log2Exact(int value)
{
  if (value <= 0 || (value & (value - 1)) != 0)
    fail(ErrorCode::kBadArgument, "value is not a power of two: " + std::to_string(value));
  int bits = 0;
  while ((1 << bits) < value)
    ++bits;
  return bits;
}

//============================================================================

SparsePointCloud SparsePointCloud::fromCoords(int depth, std::vector<VoxelCoord> coords)
{
  SparsePointCloud pc;
  pc.depth = depth;
  mortonSort(coords);
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  pc.coords = std::move(coords);
  pc.validate();
  return pc;
}

void SparsePointCloud::validate() const
{
  if (depth < 1 || depth > 21)
    fail(ErrorCode::kBadArgument, "depth out of range");
  const int32_t limit = int32_t(1) << depth;
  for (const auto& c : coords) {
    if (c.x < 0 || c.y < 0 || c.z < 0 || c.x >= limit || c.y >= limit || c.z >= limit)
      fail(ErrorCode::kBadArgument, "coordinate outside 2^depth grid");
  }
  if (!isStrictlyMortonSorted(coords))
    fail(ErrorCode::kBadArgument, "coordinates not strictly Morton sorted");
  if (features) {
    if (features->rows != coords.size())
      fail(ErrorCode::kBadArgument, "feature rows do not match point count");
  }
}

//============================================================================

SparsePointCloud voxelize(std::span<const std::array<double, 3>> points, int depth)
{
  if (points.empty())
    fail(ErrorCode::kBadArgument, "empty cloud");
  if (depth < 1 || depth > 16)
    fail(ErrorCode::kBadArgument, "depth must be in [1, 16]");

  std::array<double, 3> lo{}, hi{};
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  for (const auto& p : points) {
    for (int a = 0; a < 3; ++a) {
      if (!std::isfinite(p[a]))
        fail(ErrorCode::kBadArgument, "invalid point");
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }

  // One scale for all axes keeps the aspect ratio.
  double extent = 0.0;
  for (int a = 0; a < 3; ++a)
    extent = std::max(extent, hi[a] - lo[a]);
  const double maxCoord = double((1 << depth) - 1);
  const double scale = extent > 0.0 ? maxCoord / extent : 0.0;

  std::vector<VoxelCoord> coords;
  coords.reserve(points.size());
  for (const auto& p : points) {
    std::array<int32_t, 3> v{};
    for (int a = 0; a < 3; ++a) {
      double q = std::floor((p[a] - lo[a]) * scale);
      v[a] = int32_t(std::clamp(q, 0.0, maxCoord));
    }
    coords.push_back({v[0], v[1], v[2]});
  }
  return SparsePointCloud::fromCoords(depth, std::move(coords));
}

std::vector<Block> partitionBlocks(const SparsePointCloud& pc, int blockSize)
{
  const int blockBits = log2Exact(blockSize);
  if (blockBits > pc.depth)
    fail(ErrorCode::kBadArgument, "block size exceeds cloud extent");

  // Blocks of a Morton-sorted cloud are contiguous runs with increasing
  // origin keys, so a single pass suffices.
  std::vector<Block> blocks;
  for (const auto& c : pc.coords) {
    VoxelCoord origin = c.shr(blockBits).shl(blockBits);
    if (blocks.empty() || !(blocks.back().origin == origin)) {
      Block& b = blocks.emplace_back();
      b.origin = origin;
      b.cloud.depth = blockBits;
    }
    blocks.back().cloud.coords.push_back(c - origin);
  }
  return blocks;
}

SparsePointCloud reassembleBlocks(std::span<const Block> blocks, int depth)
{
  std::vector<VoxelCoord> coords;
  for (const auto& b : blocks)
    for (const auto& c : b.cloud.coords)
      coords.push_back(c + b.origin);
  return SparsePointCloud::fromCoords(depth, std::move(coords));
}

std::vector<VoxelCoord> parentCoords(std::span<const VoxelCoord> coords)
{
  return ancestorCoords(coords, 1);
}

std::vector<VoxelCoord> ancestorCoords(std::span<const VoxelCoord> coords, int levels)
{
  std::vector<VoxelCoord> out;
  out.reserve(coords.size());
  for (const auto& c : coords) {
    VoxelCoord p = c.shr(levels);
    if (out.empty() || !(out.back() == p))
      out.push_back(p);
  }
  return out;
}

std::vector<VoxelCoord> childCoords(std::span<const VoxelCoord> coords)
{
  std::vector<VoxelCoord> out;
  out.reserve(coords.size() * 8);
  for (const auto& c : coords) {
    VoxelCoord base = c.shl(1);
    for (int i = 0; i < 8; ++i)
      out.push_back(base + VoxelCoord{(i >> 2) & 1, (i >> 1) & 1, i & 1});
  }
  return out;
}

}  // namespace sqh
