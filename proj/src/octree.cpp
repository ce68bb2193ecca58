#include "sqh/octree.hpp"

#include <string>

#include "sqh/error.hpp"

namespace sqh::octree {

namespace {

void checkInput(std::span<const VoxelCoord> sorted, int depthLevels)
{
  if (sorted.empty())
    fail(ErrorCode::kBadArgument, "no coordinates");
  if (depthLevels < 1 || depthLevels > 21)
    fail(ErrorCode::kBadArgument, "octree depth out of range");
  const int32_t limit = int32_t(1) << depthLevels;
  for (const auto& c : sorted)
    if (c.x < 0 || c.y < 0 || c.z < 0 || c.x >= limit || c.y >= limit || c.z >= limit)
      fail(ErrorCode::kBadArgument, "coordinate exceeds octree depth");
  if (!isStrictlyMortonSorted(sorted))
    fail(ErrorCode::kBadArgument, "octree input must be Morton sorted");
}

int childIndex(const VoxelCoord& c)
{
  return ((c.x & 1) << 2) | ((c.y & 1) << 1) | (c.z & 1);
}

// Expands one level: every node emits the children flagged in its byte.
template<typename NextByte>
std::vector<VoxelCoord> expand(int depthLevels, NextByte&& nextByte)
{
  std::vector<VoxelCoord> nodes{{0, 0, 0}};
  for (int level = 0; level < depthLevels; ++level) {
    std::vector<VoxelCoord> next;
    next.reserve(nodes.size() * 4);
    for (const auto& n : nodes) {
      const uint8_t occ = nextByte();
      if (occ == 0)
        fail(ErrorCode::kCorruptStream, "corrupt coordinate stream");
      const VoxelCoord base = n.shl(1);
      for (int i = 0; i < 8; ++i)
        if (occ & (1 << i))
          next.push_back(base + VoxelCoord{(i >> 2) & 1, (i >> 1) & 1, i & 1});
    }
    nodes = std::move(next);
  }
  return nodes;
}

}  // namespace

std::vector<uint8_t> occupancyBytes(std::span<const VoxelCoord> sorted, int depthLevels)
{
  checkInput(sorted, depthLevels);
  std::vector<uint8_t> bytes;
  // Levels are Morton-sorted ancestor sets; children of a node form a
  // contiguous run in the next level.
  std::vector<VoxelCoord> parents = ancestorCoords(sorted, depthLevels);
  for (int level = 0; level < depthLevels; ++level) {
    std::vector<VoxelCoord> children =
      ancestorCoords(sorted, depthLevels - level - 1);
    std::size_t ci = 0;
    for (const auto& p : parents) {
      uint8_t occ = 0;
      while (ci < children.size() && children[ci].shr(1) == p)
        occ |= uint8_t(1 << childIndex(children[ci++]));
      bytes.push_back(occ);
    }
    parents = std::move(children);
  }
  return bytes;
}

std::vector<VoxelCoord> coordsFromOccupancy(std::span<const uint8_t> bytes, int depthLevels)
{
  std::size_t pos = 0;
  auto coords = expand(depthLevels, [&]() -> uint8_t {
    if (pos >= bytes.size())
      fail(ErrorCode::kCorruptStream, "corrupt coordinate stream");
    return bytes[pos++];
  });
  if (pos != bytes.size())
    fail(ErrorCode::kCorruptStream, "corrupt coordinate stream");
  return coords;
}

void encodeInto(entropy::RangeEncoder& enc, entropy::AdaptiveByteModel& model,
                std::span<const VoxelCoord> sorted, int depthLevels)
{
  for (uint8_t b : occupancyBytes(sorted, depthLevels))
    model.encode(enc, b);
}

std::vector<VoxelCoord> decodeFrom(entropy::RangeDecoder& dec,
                                   entropy::AdaptiveByteModel& model, int depthLevels)
{
  try {
    return expand(depthLevels, [&] { return model.decode(dec); });
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorruptStream)
      fail(ErrorCode::kCorruptStream, "corrupt coordinate stream");
    throw;
  }
}

std::vector<uint8_t> octreeEncode(std::span<const VoxelCoord> sorted, int depthLevels)
{
  entropy::RangeEncoder enc;
  entropy::AdaptiveByteModel model;
  encodeInto(enc, model, sorted, depthLevels);
  return enc.finish();
}

std::vector<VoxelCoord> octreeDecode(std::span<const uint8_t> stream, int depthLevels)
{
  if (depthLevels < 1 || depthLevels > 21)
    fail(ErrorCode::kBadArgument, "octree depth out of range");
  entropy::AdaptiveByteModel model;
  std::vector<VoxelCoord> coords;
  try {
    entropy::RangeDecoder dec(stream);
    coords = decodeFrom(dec, model, depthLevels);
    if (dec.position() != stream.size())
      fail(ErrorCode::kCorruptStream, "corrupt coordinate stream");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorruptStream)
      fail(ErrorCode::kCorruptStream, "corrupt coordinate stream");
    throw;
  }
  return coords;
}

}  // namespace sqh::octree
