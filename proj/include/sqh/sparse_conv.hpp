#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sqh/nn.hpp"
#include "sqh/sparse_geom.hpp"

namespace sqh::nn {

// Input/output row pairs for each kernel offset. Offsets are enumerated in
// lexicographic (x, y, z) order. Maps depend only on coordinates.
struct KernelMap {
  int kernelVolume = 0;
  std::size_t numIn = 0;
  std::size_t numOut = 0;
  std::vector<std::vector<std::pair<int32_t, int32_t>>> pairs;  // [offset] -> (in, out)
};

using KernelMapPtr = std::shared_ptr<const KernelMap>;

inline KernelMapPtr share(KernelMap map)
{
  return std::make_shared<const KernelMap>(std::move(map));
}

// Stride 1, odd kernel: out(c) = sum_o W_o * in(c + o), o in [-k/2, k/2]^3.
// Output coordinates equal the input coordinates.
KernelMap submanifoldMap(std::span<const VoxelCoord> coords, int kernelSize = 3);

// Stride 2, kernel 2: out(c) = sum_o W_o * in(2c + o), o in {0,1}^3, where
// `outCoords` are the parents of the input coordinates.
KernelMap downsampleMap(std::span<const VoxelCoord> inCoords,
                        std::span<const VoxelCoord> outCoords);

// Transposed stride 2, kernel 2: out(c) = W_{c & 1} * in(c >> 1). Every output
// coordinate must have its parent among the inputs.
KernelMap upsampleMap(std::span<const VoxelCoord> inCoords,
                      std::span<const VoxelCoord> outCoords);

enum class ConvDirection { kDown, kUp };

// Generalized sparse convolution layer; weight rows are [offset][in channel].
struct SparseConv {
  int kernelSize = 3;
  int stride = 1;
  ConvDirection direction = ConvDirection::kDown;
  std::size_t inChannels = 0;
  std::size_t outChannels = 0;
  Parameter weight;  // (kernelVolume * in) x out
  Parameter bias;    // 1 x out

  SparseConv() = default;
  SparseConv(const std::string& name, std::size_t in, std::size_t out, int kernelSize,
             int stride, ConvDirection direction, Rng& rng);

  int kernelVolume() const { return kernelSize * kernelSize * kernelSize; }

  Var forward(Tape& t, Var x, const KernelMapPtr& map);
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

// Raw convolution op (no bias) used by SparseConv.
Var sparseConv(Tape& t, Var x, Var weight, KernelMapPtr map);

// Convenience wrappers operating on LatentTensor values (no gradient).
LatentTensor sparseConvForward(SparseConv& layer, const LatentTensor& input);
LatentTensor sparseConvUpForward(SparseConv& layer, const LatentTensor& input,
                                 std::span<const VoxelCoord> targetCoords);

}  // namespace sqh::nn
