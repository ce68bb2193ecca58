#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sqh/matrix.hpp"

namespace sqh {

//============================================================================

struct VoxelCoord {
  int32_t x = 0;
  int32_t y = 0;
  int32_t z = 0;

  friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;

  VoxelCoord operator+(const VoxelCoord& o) const
  {
    return {x + o.x, y + o.y, z + o.z};
  }
  VoxelCoord operator-(const VoxelCoord& o) const
  {
    return {x - o.x, y - o.y, z - o.z};
  }
  VoxelCoord shr(int bits) const { return {x >> bits, y >> bits, z >> bits}; }
  VoxelCoord shl(int bits) const { return {x << bits, y << bits, z << bits}; }
};

// Interleaved-bit key. At every bit level the triple is (x, y, z) with x the
// most significant, matching the octree child index (x<<2)|(y<<1)|z.
uint64_t mortonKey(const VoxelCoord& c);
VoxelCoord mortonDecode(uint64_t key);

inline bool mortonLess(const VoxelCoord& a, const VoxelCoord& b)
{
  return mortonKey(a) < mortonKey(b);
}

// Stable sort into z-order.
void mortonSort(std::vector<VoxelCoord>& coords);

bool isStrictlyMortonSorted(std::span<const VoxelCoord> coords);

// Index of `c` in a strictly Morton-sorted list, or -1.
int64_t findCoord(std::span<const VoxelCoord> sorted, const VoxelCoord& c);

//============================================================================

// Occupied voxels of a cloud, Morton-sorted and duplicate free. Geometry-only
// clouds carry no explicit features; the occupancy feature is the constant 1.
struct SparsePointCloud {
  int depth = 0;
  std::vector<VoxelCoord> coords;
  std::optional<Matrix> features;

  std::size_t numPoints() const { return coords.size(); }

  // Sorts, merges duplicates and validates the range against `depth`.
  static SparsePointCloud fromCoords(int depth, std::vector<VoxelCoord> coords);

  // Throws when any invariant is broken.
  void validate() const;

  friend bool operator==(const SparsePointCloud&, const SparsePointCloud&) =
    default;
};

// Latent coordinates are stored in down-scaled units (input coordinate divided
// by `stride`); `feats` has one row per coordinate.
struct LatentTensor {
  std::vector<VoxelCoord> coords;
  Matrix feats;
  int stride = 1;

  std::size_t size() const { return coords.size(); }
  std::size_t channels() const { return feats.cols; }
};

//============================================================================

SparsePointCloud voxelize(std::span<const std::array<double, 3>> points, int depth);

struct Block {
  VoxelCoord origin;
  SparsePointCloud cloud;  // local coordinates, depth = log2(block_size)
};

// Splits into non-empty blocks ordered by the Morton order of their origins.
std::vector<Block> partitionBlocks(const SparsePointCloud& pc, int blockSize);

// Inverse of partitionBlocks.
SparsePointCloud reassembleBlocks(std::span<const Block> blocks, int depth);

// Unique parents (c >> 1) of a Morton-sorted list; result stays sorted.
std::vector<VoxelCoord> parentCoords(std::span<const VoxelCoord> coords);

// All eight children of each coordinate, Morton-sorted.
std::vector<VoxelCoord> childCoords(std::span<const VoxelCoord> coords);

// `coords` shifted right `levels` times with duplicates removed.
std::vector<VoxelCoord> ancestorCoords(std::span<const VoxelCoord> coords, int levels);

int log2Exact(int value);

}  // namespace sqh
