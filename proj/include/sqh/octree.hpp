#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sqh/range_coder.hpp"
#include "sqh/sparse_geom.hpp"

namespace sqh::octree {

// Breadth-first occupancy bytes, one per internal node, before entropy coding.
// Child index is (x_bit << 2) | (y_bit << 1) | z_bit, most significant level
// first; bit i of a byte flags child i.
std::vector<uint8_t> occupancyBytes(std::span<const VoxelCoord> sorted, int depthLevels);

// Inverse of occupancyBytes; returns a Morton-sorted set.
std::vector<VoxelCoord> coordsFromOccupancy(std::span<const uint8_t> bytes, int depthLevels);

// Session primitives: several sets may share one coder and adaptive model.
void encodeInto(entropy::RangeEncoder& enc, entropy::AdaptiveByteModel& model,
                std::span<const VoxelCoord> sorted, int depthLevels);
std::vector<VoxelCoord> decodeFrom(entropy::RangeDecoder& dec,
                                   entropy::AdaptiveByteModel& model, int depthLevels);

std::vector<uint8_t> octreeEncode(std::span<const VoxelCoord> sorted, int depthLevels);
std::vector<VoxelCoord> octreeDecode(std::span<const uint8_t> stream, int depthLevels);

}  // namespace sqh::octree
