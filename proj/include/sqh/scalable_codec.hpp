#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sqh/bitstream.hpp"
#include "sqh/model_bank.hpp"

namespace sqh {

struct BaseLayer {
  LayerRecord record;
  std::vector<LatentTensor> yHat;  // per block, integer valued
};

// Checks 1 <= ladder[0] < ladder[1] < ... <= Q.
void validateLadder(const ModelBank& bank, std::span<const int> ladder);

// Splits a cloud into the bank's blocks; errors "empty cloud".
std::vector<Block> blocksFor(const ModelBank& bank, const SparsePointCloud& x);

BaseLayer encodeBase(ModelBank& bank, std::span<const Block> blocks, int quality, int jobs = 1);

// Codes round(G_a^(target)(x)) under QuLPE(yHatBase, base, target). The
// coded latents are returned through `yHatOut` when given.
LayerRecord encodeEnhancement(ModelBank& bank, std::span<const Block> blocks,
                              std::span<const LatentTensor> yHatBase, int base, int target,
                              std::vector<LatentTensor>* yHatOut = nullptr, int jobs = 1);

std::vector<LatentTensor> decodeBase(ModelBank& bank, const ScalableBitstream& stream);
std::vector<LatentTensor> decodeEnhancement(ModelBank& bank, const LayerRecord& record,
                                            std::span<const LatentTensor> yHatBase, int base,
                                            int target);

// Layer t conditions on the latents of layer t - 1.
ScalableBitstream encodeScalable(ModelBank& bank, const SparsePointCloud& x,
                                 std::span<const int> ladder, int jobs = 1);

// Latents of layer `layer` (1-based) for every block; lower layers are
// entropy decoded but never synthesized.
std::vector<LatentTensor> decodeLatents(ModelBank& bank, const ScalableBitstream& stream,
                                        int layer);

SparsePointCloud decodeScalable(ModelBank& bank, const ScalableBitstream& stream, int layer,
                                int jobs = 1);
SparsePointCloud decodeScalable(ModelBank& bank, std::span<const uint8_t> bytes, int layer,
                                int jobs = 1);

// One standalone single-layer stream per quality.
std::vector<std::vector<uint8_t>> encodeIndependent(ModelBank& bank, const SparsePointCloud& x,
                                                    std::span<const int> ladder, int jobs = 1);

}  // namespace sqh
