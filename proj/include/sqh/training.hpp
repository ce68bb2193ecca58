#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqh/model_bank.hpp"
#include "sqh/synth.hpp"

namespace sqh {

struct TrainConfig {
  QualityLadder ladder = QualityLadder::desk();
  CodecConfig codec;
  QulpeConfig qulpe;
  int blockSize = 64;
  // Crop size for codec training; 0 means blockSize. The transforms are
  // fully convolutional, so smaller crops only change the optimisation.
  int trainBlockSize = 32;
  int depth = 6;
  std::size_t density = 1200;
  std::size_t trainClouds = 40;
  std::size_t validationClouds = 10;
  // Blocks with fewer points are left out of training.
  std::size_t minBlockPoints = 64;
  uint64_t seed = 1;
  SeedSplit split;
  int scratchEpochs = 60;  // model Q, and every model of a control bank
  int warmEpochs = 30;     // models Q-1 .. 1
  int qulpeMaxEpochs = 100;
  double lr = 1e-3;
  double qulpeLr = 1e-3;
  int accumulate = 8;      // blocks per optimizer step
  int qulpePatience = 7;   // stagnant epochs before the rate drops tenfold
  int qulpeStop = 10;      // stagnant epochs before stopping
  bool control = false;    // independent initialisations instead of warm starts
  std::string outDir;
  std::vector<std::string> trainPly;
  std::vector<std::string> validationPly;

  int codecCropSize() const { return trainBlockSize > 0 ? trainBlockSize : blockSize; }
  void validate() const;
  static TrainConfig fromJson(const nlohmann::json& j);
  nlohmann::json toJson() const;
};

// Blocks of every cloud holding at least `minPoints` points.
std::vector<SparsePointCloud> trainingBlocks(std::span<const SparsePointCloud> clouds,
                                             int blockSize, std::size_t minPoints);

struct CodecLogRow {
  int quality = 0;
  int epoch = 0;
  double loss = 0.0;
  double distortion = 0.0;
  double bpp = 0.0;
};

// Trains one model for `epochs` passes with noise quantization. Blocks are
// visited in a per-epoch shuffled order and gradients are summed over
// `accumulate` blocks per step. Non-finite losses raise ErrorCode::kNumeric.
void trainCodecModel(CodecModel& model, std::span<const SparsePointCloud> blocks, double lambda,
                     int epochs, const TrainConfig& cfg, uint64_t seed, int quality,
                     std::vector<CodecLogRow>* log = nullptr,
                     const std::function<void(const CodecLogRow&)>& onEpoch = {});

// Model Q from its own initialisation, then each model i < Q starting from the
// weights of model i + 1. With cfg.control every model keeps its own
// initialisation and gets cfg.scratchEpochs.
void trainCodecBank(ModelBank& bank, std::span<const SparsePointCloud> blocks,
                    const TrainConfig& cfg, std::vector<CodecLogRow>* log = nullptr,
                    const std::function<void(const CodecLogRow&)>& onEpoch = {});

struct LatentsEntry {
  LatentTensor yHat;  // rounded latents
  Matrix y;           // pre-rounding features on the same coordinates
};

struct LatentsDataset {
  int numQualities = 0;
  std::vector<std::vector<LatentsEntry>> blocks;  // [block][quality - 1]

  std::size_t size() const { return blocks.size() * std::size_t(numQualities); }
};

LatentsDataset buildLatentsDataset(ModelBank& bank, std::span<const SparsePointCloud> blocks);

// Learning-rate plateau schedule driven by a validation loss.
class PlateauSchedule {
public:
  PlateauSchedule(double lr, int patience, int stop) : lr_(lr), patience_(patience), stop_(stop) {}

  // Returns true when `loss` improves on the best so far.
  bool update(double loss);
  bool shouldStop() const { return stagnant_ >= stop_; }
  double learningRate() const { return lr_; }
  double best() const { return best_; }

private:
  double lr_;
  int patience_;
  int stop_;
  int stagnant_ = 0;
  double best_ = 1e300;
};

struct QulpePair {
  int base, target;
};
std::vector<QulpePair> qualityPairs(int q);

// Bits per latent element of the integer target latents for every pair.
std::vector<double> qulpeValidation(QulpeModel& model, const LatentsDataset& data);
// Same under a fixed N(0, 1) prior.
std::vector<double> standardNormalBaseline(const LatentsDataset& data);

struct QulpeLogRow {
  int epoch = 0;
  double lr = 0.0;
  std::vector<double> pairLoss;
  double meanLoss = 0.0;
};

struct QulpeTrainResult {
  int epochsRun = 0;
  int bestEpoch = 0;
  double bestLoss = 0.0;
  std::vector<QulpeLogRow> log;
};

// Each training block is paired with one (base, target) drawn uniformly per
// visit; the best validation checkpoint is restored at the end.
QulpeTrainResult trainQulpe(QulpeModel& model, const LatentsDataset& train,
                            const LatentsDataset& validation, const TrainConfig& cfg,
                            uint64_t seed,
                            const std::function<void(const QulpeLogRow&)>& onEpoch = {});

// (a, b) is the mean cosine similarity of the pre-rounding features of
// qualities a and b over shared coordinates; zero vectors count as 0. Pooled
// over all coordinates by default, or the mean of per-block means.
std::vector<std::vector<double>> cosineSimilarityMatrix(const LatentsDataset& data,
                                                        bool perBlock = false);

struct TrainingCorpus {
  std::vector<SparsePointCloud> train;
  std::vector<SparsePointCloud> validation;
};
TrainingCorpus loadCorpus(const TrainConfig& cfg);

struct TrainOutcome {
  ModelBank bank;
  QulpeTrainResult qulpe;
  std::vector<CodecLogRow> codecLog;
};

// Full pipeline: codec ladder, latents datasets, QuLPE. Writes the bank and
// CSV logs into cfg.outDir when it is set. `progress` receives one line per
// finished epoch.
TrainOutcome trainAll(const TrainConfig& cfg,
                      const std::function<void(const std::string&)>& progress = {});

void writeCodecLog(std::ostream& out, std::span<const CodecLogRow> rows);
void writeQulpeLog(std::ostream& out, int numQualities, std::span<const QulpeLogRow> rows);

}  // namespace sqh
