#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sqh/factorized_prior.hpp"
#include "sqh/nn.hpp"
#include "sqh/sparse_conv.hpp"
#include "sqh/sparse_geom.hpp"

namespace sqh {

struct CodecConfig {
  // One entry per stride-2 analysis stage; the last is the latent width C_y.
  std::vector<int> analysisWidths = {16, 32, 32};
  // Per synthesis stage, coarse to fine. Must have as many entries as analysisWidths.
  std::vector<int> synthesisWidths = {32, 16, 8};
  int hyperChannels = 16;
  double sigmaMin = 0.11;
  double focalAlpha = 0.7;
  double focalGamma = 2.0;
  // Intermediate synthesis stages at stride s keep ceil(pruneKeep * n_points / s)
  // candidates.
  double pruneKeep = 1.0;

  int stages() const { return int(analysisWidths.size()); }
  int latentChannels() const { return analysisWidths.back(); }
  int latentStride() const { return 1 << stages(); }
  void validate() const;

  friend bool operator==(const CodecConfig&, const CodecConfig&) = default;
};

// Hyper-latents sit two stride-2 levels above the latents.
constexpr int kHyperLevels = 2;

struct GaussianParams {
  Matrix mu;
  Matrix sigma;
};

// Round half away from zero.
double roundHalfAway(double v);
Matrix roundMatrix(const Matrix& m);

// Indices of the `count` highest scores; ties go to the lower index. Returned
// in ascending index order.
std::vector<int32_t> topIndices(std::span<const double> scores, std::size_t count);

// Keeps the `nPoints` candidates with the highest score (probability or
// logit); ties are broken by Morton order, which is the candidate order.
SparsePointCloud binarize(int depth, std::span<const VoxelCoord> candidates,
                          std::span<const double> scores, std::size_t nPoints);

// One synthesis stage: candidate coordinates at the stage resolution and
// their occupancy logits.
struct SynthesisStage {
  int stride = 1;
  std::vector<VoxelCoord> candidates;
  nn::Var logits;
  std::vector<uint8_t> targets;  // filled when ground truth is supplied
};

struct RdTerms {
  nn::Var loss;
  double distortion = 0.0;
  double rateBits = 0.0;
  double bpp = 0.0;
};

// Mean-scale hyperprior transforms for one quality index. All models built
// from the same config have identical strides, so the latent coordinates
// depend on the input only.
class CodecModel {
public:
  CodecModel() = default;
  CodecModel(const CodecConfig& config, uint64_t seed);
  CodecModel(const CodecModel&) = delete;
  CodecModel& operator=(const CodecModel&) = delete;
  CodecModel(CodecModel&&) = default;
  CodecModel& operator=(CodecModel&&) = default;

  const CodecConfig& config() const { return config_; }

  //--------------------------------------------------------------------------
  // Recorded forms.

  // y = G_a(x); `pyramid` receives the coordinates at strides 1, 2, ..., with
  // the latent coordinates last.
  nn::Var analyze(nn::Tape& t, std::span<const VoxelCoord> x,
                  std::vector<std::vector<VoxelCoord>>& pyramid);
  // z = HG_a(y) on ancestorCoords(yCoords, kHyperLevels).
  nn::Var hyperAnalyze(nn::Tape& t, nn::Var y, std::span<const VoxelCoord> yCoords);
  // (mu, sigma) = HG_s(zhat) on exactly yCoords.
  std::pair<nn::Var, nn::Var> hyperSynthesize(nn::Tape& t, nn::Var zHat,
                                              std::span<const VoxelCoord> yCoords);
  // Coarse-to-fine stages of G_s. With `groundTruth` (block coordinates at
  // stride 1) the kept set of every intermediate stage also includes the true
  // voxels and targets are filled in.
  std::vector<SynthesisStage> synthesize(nn::Tape& t, nn::Var yHat,
                                         std::span<const VoxelCoord> yCoords,
                                         std::size_t nPoints,
                                         std::span<const VoxelCoord> groundTruth = {});

  // D + lambda * R / n_points with D the per-stage mean focal loss summed over
  // stages and R in bits. With `noise` the quantizer is replaced by additive
  // U(-0.5, 0.5) noise, otherwise values are rounded.
  RdTerms rdLoss(nn::Tape& t, const SparsePointCloud& block, double lambda, nn::Rng* noise);

  //--------------------------------------------------------------------------
  // Inference forms.

  LatentTensor analyzeLatents(const SparsePointCloud& block);
  Matrix hyperLatents(const LatentTensor& y);
  GaussianParams hyperParams(const Matrix& zHat, std::span<const VoxelCoord> yCoords);
  // Final-stage candidates with occupancy logits and probabilities.
  struct Candidates {
    std::vector<VoxelCoord> coords;
    std::vector<double> logits;
    std::vector<double> probs;
  };
  Candidates synthesizeCandidates(const LatentTensor& yHat, std::size_t nPoints);
  SparsePointCloud reconstruct(const LatentTensor& yHat, std::size_t nPoints, int blockDepth);

  // Number of synthesis-transform runs since construction.
  long synthesisCount() const { return synthesisCount_->load(); }

  FactorizedDensity& prior() { return prior_; }
  const FactorizedDensity& prior() const { return prior_; }

  std::vector<nn::Parameter*> parameters();
  void copyParametersFrom(CodecModel& other);

private:
  struct Stage {
    nn::SparseConv conv;
    nn::SparseConv resample;
  };
  struct SynthStage {
    nn::SparseConv up;
    nn::SparseConv conv;
    nn::Linear head;
  };

  nn::Var analysisStages(nn::Tape& t, nn::Var x, std::vector<Stage>& stages,
                         std::vector<std::vector<VoxelCoord>>& pyramid);
  std::size_t keepCount(std::size_t nPoints, int stride, std::size_t candidates) const;

  CodecConfig config_;
  std::vector<Stage> gA_;
  std::vector<Stage> hgA_;
  struct UpStage {
    nn::SparseConv up;
    nn::SparseConv conv;
  };
  std::vector<UpStage> hgS_;
  nn::Linear hgSHead_;
  std::vector<SynthStage> gS_;
  FactorizedDensity prior_;
  std::unique_ptr<std::atomic<long>> synthesisCount_ = std::make_unique<std::atomic<long>>(0);
};

}  // namespace sqh
