#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sqh/sparse_geom.hpp"

namespace sqh {

// Layered container. All integers big endian:
//   "SQH1" | version u8 | Q u8 | k u8 | depth u8 | block_size_log2 u8 | flags u8
//   | num_points_total u32 | num_blocks u16
//   | per block: origin 3 x u16, n_points u32
//   | per layer: quality_index u8, layer_type u8
//   | base: len_coords u32 + bytes, len_side u32 + bytes, len_latents u32 + bytes
//   | each enhancement: len_sqh u32 + bytes

constexpr uint8_t kContainerVersion = 1;
// Bit 0: sampling factor is one. Required.
constexpr uint8_t kFlagUnitSampling = 0x01;

enum class LayerType : uint8_t { kBase = 0, kEnhancement = 1 };

struct BlockHeader {
  VoxelCoord origin;
  uint32_t nPoints = 0;

  friend bool operator==(const BlockHeader&, const BlockHeader&) = default;
};

struct LayerRecord {
  uint8_t quality = 0;
  LayerType type = LayerType::kBase;
  // Base layer substreams.
  std::vector<uint8_t> coords;
  std::vector<uint8_t> side;
  std::vector<uint8_t> latents;
  // Enhancement substream.
  std::vector<uint8_t> sqh;

  // Serialized size of this record's payload section (length fields included).
  std::size_t payloadBytes() const;

  friend bool operator==(const LayerRecord&, const LayerRecord&) = default;
};

struct ScalableBitstream {
  uint8_t numQualities = 0;
  uint8_t depth = 0;
  uint8_t blockSizeLog2 = 0;
  uint8_t flags = kFlagUnitSampling;
  std::vector<BlockHeader> blocks;
  std::vector<LayerRecord> layers;
  // Number of layers announced by the header; layers.size() may be smaller
  // for a stream truncated at a layer boundary.
  std::size_t declaredLayers = 0;

  uint32_t numPointsTotal() const;
  std::vector<int> ladder() const;

  // Header bytes (everything before the first payload section).
  std::size_t headerBytes() const;
  // Bytes attributed to layer t (0-based): the header is charged to the base.
  std::size_t layerBytes(std::size_t t) const;

  friend bool operator==(const ScalableBitstream&, const ScalableBitstream&) = default;
};

std::vector<uint8_t> serialize(const ScalableBitstream& stream);

// Parses a complete stream or a prefix ending on a layer boundary. Any other
// truncation or malformed field raises "corrupt/incomplete stream".
ScalableBitstream parseBitstream(std::span<const uint8_t> bytes);

// Byte offset just past layer t (0-based) in serialize(stream).
std::size_t layerBoundary(const ScalableBitstream& stream, std::size_t t);

}  // namespace sqh
