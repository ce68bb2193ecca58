#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sqh/codec_model.hpp"
#include "sqh/nn.hpp"
#include "sqh/sparse_conv.hpp"

namespace sqh {

struct QulpeConfig {
  int numQualities = 3;
  int latentChannels = 32;
  int embedHidden = 16;
  int embedDim = 8;
  // Hourglass widths: full resolution, one level down, bottleneck.
  std::vector<int> widths = {48, 64, 96};
  double sigmaMin = 0.11;

  int inputChannels() const { return latentChannels + 2 * embedDim; }
  void validate() const;

  friend bool operator==(const QulpeConfig&, const QulpeConfig&) = default;
};

// One-hot row of length q with a 1 at position i - 1.
Matrix oneHot(int i, int q);

// Predicts Gaussian parameters of quality-`target` latents from decoded
// quality-`base` latents, for every pair base < target with one parameter set.
class QulpeModel {
public:
  QulpeModel() = default;
  QulpeModel(const QulpeConfig& config, uint64_t seed);

  const QulpeConfig& config() const { return config_; }

  // Throws "invalid quality pair" unless 1 <= base < target <= Q.
  void checkPair(int base, int target) const;

  // f(OH(i)) as a 1 x E row.
  nn::Var embed(nn::Tape& t, int quality);

  // Per-coordinate concat(yHat, f(OH(base)), f(OH(target))).
  nn::Var input(nn::Tape& t, nn::Var yHat, int base, int target);

  std::pair<nn::Var, nn::Var> predict(nn::Tape& t, nn::Var yHat,
                                      std::span<const VoxelCoord> coords, int base, int target);

  // Bits of `y` (noisy or integer) under the predicted parameters.
  nn::Var loss(nn::Tape& t, const LatentTensor& yHatBase, const Matrix& yTarget, int base,
               int target);

  GaussianParams predict(const LatentTensor& yHatBase, int base, int target);

  std::vector<nn::Parameter*> parameters();
  // Zeroes the weights that read the skip connections.
  void ablateSkips();

private:
  QulpeConfig config_;
  nn::Mlp embed_;
  nn::SparseConv in0_, down1_, conv1_, down2_, conv2_, up1_, fuse1_, up0_, fuse0_;
  nn::Linear head_;
};

}  // namespace sqh
