#include "sqh/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "sqh/error.hpp"
#include "sqh/losses.hpp"
#include "sqh/ply.hpp"

namespace sqh {

using nlohmann::json;

//============================================================================
// Configuration

void TrainConfig::validate() const
{
  ladder.validate();
  codec.validate();
  log2Exact(blockSize);
  if (blockSize < codec.latentStride() << kHyperLevels)
    fail(ErrorCode::kBadArgument, "block size must cover the hyper-latent stride");
  log2Exact(codecCropSize());
  if (codecCropSize() < codec.latentStride() << kHyperLevels || codecCropSize() > blockSize)
    fail(ErrorCode::kBadArgument, "training crop must lie between the hyper-latent stride and the block size");
  if (depth < log2Exact(blockSize) || depth > 16)
    fail(ErrorCode::kBadArgument, "depth must lie between log2(block_size) and 16");
  if (scratchEpochs < 0 || warmEpochs < 0 || qulpeMaxEpochs < 0)
    fail(ErrorCode::kBadArgument, "epoch counts must be non-negative");
  if (accumulate < 1 || qulpePatience < 1 || qulpeStop < 1)
    fail(ErrorCode::kBadArgument, "accumulate, patience and stop must be positive");
  if (!(lr > 0.0) || !(qulpeLr > 0.0))
    fail(ErrorCode::kBadArgument, "learning rates must be positive");
  if (trainPly.empty() && trainClouds == 0)
    fail(ErrorCode::kBadArgument, "no training content");
}

TrainConfig TrainConfig::fromJson(const json& j)
{
  TrainConfig c;
  try {
    if (j.contains("ladder"))
      c.ladder.lambdas = j.at("ladder").get<std::vector<double>>();
    if (j.contains("codec")) {
      const json& k = j.at("codec");
      c.codec.analysisWidths = k.value("analysis_widths", c.codec.analysisWidths);
      c.codec.synthesisWidths = k.value("synthesis_widths", c.codec.synthesisWidths);
      c.codec.hyperChannels = k.value("hyper_channels", c.codec.hyperChannels);
      c.codec.sigmaMin = k.value("sigma_min", c.codec.sigmaMin);
      c.codec.focalAlpha = k.value("focal_alpha", c.codec.focalAlpha);
      c.codec.focalGamma = k.value("focal_gamma", c.codec.focalGamma);
      c.codec.pruneKeep = k.value("prune_keep", c.codec.pruneKeep);
    }
    if (j.contains("qulpe")) {
      const json& k = j.at("qulpe");
      c.qulpe.embedHidden = k.value("embed_hidden", c.qulpe.embedHidden);
      c.qulpe.embedDim = k.value("embed_dim", c.qulpe.embedDim);
      c.qulpe.widths = k.value("widths", c.qulpe.widths);
      c.qulpe.sigmaMin = k.value("sigma_min", c.qulpe.sigmaMin);
    }
    c.blockSize = j.value("block_size", c.blockSize);
    c.trainBlockSize = j.value("train_block_size", c.trainBlockSize);
    c.depth = j.value("depth", c.depth);
    c.density = j.value("density", c.density);
    c.trainClouds = j.value("train_clouds", c.trainClouds);
    c.validationClouds = j.value("validation_clouds", c.validationClouds);
    c.minBlockPoints = j.value("min_block_points", c.minBlockPoints);
    c.accumulate = j.value("accumulate", c.accumulate);
    c.lr = j.value("lr", c.lr);
    c.qulpeLr = j.value("qulpe_lr", c.qulpeLr);
    c.qulpePatience = j.value("qulpe_patience", c.qulpePatience);
    c.qulpeStop = j.value("qulpe_stop", c.qulpeStop);
    c.control = j.value("control", c.control);
    if (j.contains("seeds")) {
      const json& s = j.at("seeds");
      c.seed = s.value("model", c.seed);
      c.split.train = s.value("train", c.split.train);
      c.split.validation = s.value("validation", c.split.validation);
      c.split.test = s.value("test", c.split.test);
    }
    if (j.contains("epochs")) {
      const json& e = j.at("epochs");
      c.scratchEpochs = e.value("scratch", c.scratchEpochs);
      c.warmEpochs = e.value("warm", c.warmEpochs);
      c.qulpeMaxEpochs = e.value("qulpe_max", c.qulpeMaxEpochs);
    }
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      c.outDir = p.value("out", c.outDir);
      c.trainPly = p.value("train_ply", c.trainPly);
      c.validationPly = p.value("validation_ply", c.validationPly);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kBadArgument, std::string("invalid training config: ") + e.what());
  }
  c.validate();
  return c;
}

json TrainConfig::toJson() const
{
  return {{"ladder", ladder.lambdas},
          {"codec",
           {{"analysis_widths", codec.analysisWidths},
            {"synthesis_widths", codec.synthesisWidths},
            {"hyper_channels", codec.hyperChannels},
            {"sigma_min", codec.sigmaMin},
            {"focal_alpha", codec.focalAlpha},
            {"focal_gamma", codec.focalGamma},
            {"prune_keep", codec.pruneKeep}}},
          {"qulpe",
           {{"embed_hidden", qulpe.embedHidden},
            {"embed_dim", qulpe.embedDim},
            {"widths", qulpe.widths},
            {"sigma_min", qulpe.sigmaMin}}},
          {"block_size", blockSize},
          {"train_block_size", trainBlockSize},
          {"depth", depth},
          {"density", density},
          {"train_clouds", trainClouds},
          {"validation_clouds", validationClouds},
          {"min_block_points", minBlockPoints},
          {"accumulate", accumulate},
          {"lr", lr},
          {"qulpe_lr", qulpeLr},
          {"qulpe_patience", qulpePatience},
          {"qulpe_stop", qulpeStop},
          {"control", control},
          {"seeds",
           {{"model", seed},
            {"train", split.train},
            {"validation", split.validation},
            {"test", split.test}}},
          {"epochs",
           {{"scratch", scratchEpochs}, {"warm", warmEpochs}, {"qulpe_max", qulpeMaxEpochs}}},
          {"paths", {{"out", outDir}, {"train_ply", trainPly}, {"validation_ply", validationPly}}}};
}

//============================================================================
// Codec training

std::vector<SparsePointCloud> trainingBlocks(std::span<const SparsePointCloud> clouds,
                                             int blockSize, std::size_t minPoints)
{
  std::vector<SparsePointCloud> out;
  for (const auto& c : clouds)
    for (auto& b : partitionBlocks(c, blockSize))
      if (b.cloud.numPoints() >= minPoints)
        out.push_back(std::move(b.cloud));
  return out;
}

void trainCodecModel(CodecModel& model, std::span<const SparsePointCloud> blocks, double lambda,
                     int epochs, const TrainConfig& cfg, uint64_t seed, int quality,
                     std::vector<CodecLogRow>* log,
                     const std::function<void(const CodecLogRow&)>& onEpoch)
{
  if (blocks.empty())
    fail(ErrorCode::kBadArgument, "no training blocks");
  nn::Rng order(seed);
  nn::Rng noise(seed ^ 0xA5A5A5A5ull);
  nn::Adam adam(cfg.lr);
  auto params = model.parameters();
  nn::zeroGrad(params);
  long step = 0;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::vector<std::size_t> idx(blocks.size());
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    order.shuffle(idx);
    CodecLogRow row{quality, epoch, 0.0, 0.0, 0.0};
    int pending = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      nn::Tape t;
      RdTerms r = model.rdLoss(t, blocks[idx[k]], lambda, &noise);
      const double loss = t.value(r.loss).data[0];
      if (!std::isfinite(loss))
        fail(ErrorCode::kNumeric, "training diverged: model " + std::to_string(quality) +
                                    " step " + std::to_string(step + 1));
      t.backward(nn::ops::scale(t, r.loss, 1.0 / double(cfg.accumulate)));
      row.loss += loss;
      row.distortion += r.distortion;
      row.bpp += r.bpp;
      if (++pending == cfg.accumulate || k + 1 == idx.size()) {
        // A short final group is rescaled to the same per-block weight.
        if (pending != cfg.accumulate)
          for (auto* p : params)
            for (auto& g : p->grad.data)
              g *= double(cfg.accumulate) / double(pending);
        adam.step(params);
        nn::zeroGrad(params);
        pending = 0;
        ++step;
      }
    }
    const double n = double(idx.size());
    row.loss /= n;
    row.distortion /= n;
    row.bpp /= n;
    if (log)
      log->push_back(row);
    if (onEpoch)
      onEpoch(row);
  }
}

void trainCodecBank(ModelBank& bank, std::span<const SparsePointCloud> blocks,
                    const TrainConfig& cfg, std::vector<CodecLogRow>* log,
                    const std::function<void(const CodecLogRow&)>& onEpoch)
{
  const int q = bank.numQualities();
  for (int i = q; i >= 1; --i) {
    const bool scratch = cfg.control || i == q;
    if (!scratch)
      bank.model(i).copyParametersFrom(bank.model(i + 1));
    trainCodecModel(bank.model(i), blocks, bank.ladder.lambda(i),
                    scratch ? cfg.scratchEpochs : cfg.warmEpochs, cfg,
                    cfg.seed * 7919 + uint64_t(i), i, log, onEpoch);
  }
}

//============================================================================
// Latents dataset

LatentsDataset buildLatentsDataset(ModelBank& bank, std::span<const SparsePointCloud> blocks)
{
  LatentsDataset data;
  data.numQualities = bank.numQualities();
  for (const auto& block : blocks) {
    std::vector<LatentsEntry> entries;
    for (int i = 1; i <= data.numQualities; ++i) {
      LatentTensor y = bank.model(i).analyzeLatents(block);
      if (!entries.empty() && y.coords != entries.front().yHat.coords)
        fail(ErrorCode::kNumeric, "latent coordinates differ across qualities");
      LatentsEntry e;
      e.y = y.feats;
      e.yHat = std::move(y);
      e.yHat.feats = roundMatrix(e.y);
      entries.push_back(std::move(e));
    }
    data.blocks.push_back(std::move(entries));
  }
  return data;
}

//============================================================================
// QuLPE training

bool PlateauSchedule::update(double loss)
{
  if (loss < best_) {
    best_ = loss;
    stagnant_ = 0;
    return true;
  }
  ++stagnant_;
  if (stagnant_ % patience_ == 0)
    lr_ /= 10.0;
  return false;
}

std::vector<QulpePair> qualityPairs(int q)
{
  std::vector<QulpePair> out;
  for (int a = 1; a <= q; ++a)
    for (int b = a + 1; b <= q; ++b)
      out.push_back({a, b});
  return out;
}

std::vector<double> qulpeValidation(QulpeModel& model, const LatentsDataset& data)
{
  const auto pairs = qualityPairs(data.numQualities);
  std::vector<double> out;
  for (auto [a, b] : pairs) {
    double bits = 0.0, elements = 0.0;
    for (const auto& block : data.blocks) {
      const auto& base = block[std::size_t(a - 1)];
      const auto& target = block[std::size_t(b - 1)];
      GaussianParams p = model.predict(base.yHat, a, b);
      bits += nn::gaussianBitsValue(target.yHat.feats, p.mu, p.sigma);
      elements += double(target.yHat.feats.data.size());
    }
    out.push_back(elements > 0 ? bits / elements : 0.0);
  }
  return out;
}

std::vector<double> standardNormalBaseline(const LatentsDataset& data)
{
  const auto pairs = qualityPairs(data.numQualities);
  std::vector<double> out;
  for (auto [a, b] : pairs) {
    (void)a;
    double bits = 0.0, elements = 0.0;
    for (const auto& block : data.blocks) {
      const Matrix& y = block[std::size_t(b - 1)].yHat.feats;
      Matrix mu(y.rows, y.cols), sigma(y.rows, y.cols);
      for (auto& s : sigma.data)
        s = 1.0;
      bits += nn::gaussianBitsValue(y, mu, sigma);
      elements += double(y.data.size());
    }
    out.push_back(elements > 0 ? bits / elements : 0.0);
  }
  return out;
}

QulpeTrainResult trainQulpe(QulpeModel& model, const LatentsDataset& train,
                            const LatentsDataset& validation, const TrainConfig& cfg,
                            uint64_t seed, const std::function<void(const QulpeLogRow&)>& onEpoch)
{
  if (train.blocks.empty() || validation.blocks.empty())
    fail(ErrorCode::kBadArgument, "qulpe training needs training and validation latents");
  const auto pairs = qualityPairs(train.numQualities);
  if (pairs.empty())
    fail(ErrorCode::kBadArgument, "qulpe training needs at least two qualities");
  nn::Rng rng(seed);
  nn::Adam adam(cfg.qulpeLr);
  PlateauSchedule schedule(cfg.qulpeLr, cfg.qulpePatience, cfg.qulpeStop);
  auto params = model.parameters();
  QulpeTrainResult result;
  std::vector<uint8_t> best = nn::serializeParameters(params);
  nn::zeroGrad(params);

  for (int epoch = 1; epoch <= cfg.qulpeMaxEpochs; ++epoch) {
    adam.setLearningRate(schedule.learningRate());
    std::vector<std::size_t> idx(train.blocks.size());
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    rng.shuffle(idx);
    int pending = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto [a, b] = pairs[rng.index(pairs.size())];
      const auto& block = train.blocks[idx[k]];
      const auto& base = block[std::size_t(a - 1)];
      Matrix yNoisy = block[std::size_t(b - 1)].y;
      for (auto& v : yNoisy.data)
        v += rng.uniform(-0.5, 0.5);
      nn::Tape t;
      nn::Var bits = model.loss(t, base.yHat, yNoisy, a, b);
      const double elements = double(std::max<std::size_t>(yNoisy.data.size(), 1));
      if (!std::isfinite(t.value(bits).data[0]))
        fail(ErrorCode::kNumeric, "qulpe training diverged at epoch " + std::to_string(epoch));
      t.backward(nn::ops::scale(t, bits, 1.0 / (elements * double(cfg.accumulate))));
      if (++pending == cfg.accumulate || k + 1 == idx.size()) {
        if (pending != cfg.accumulate)
          for (auto* p : params)
            for (auto& g : p->grad.data)
              g *= double(cfg.accumulate) / double(pending);
        adam.step(params);
        nn::zeroGrad(params);
        pending = 0;
      }
    }

    QulpeLogRow row;
    row.epoch = epoch;
    row.lr = schedule.learningRate();
    row.pairLoss = qulpeValidation(model, validation);
    row.meanLoss = std::accumulate(row.pairLoss.begin(), row.pairLoss.end(), 0.0) /
                   double(row.pairLoss.size());
    result.log.push_back(row);
    if (onEpoch)
      onEpoch(row);
    result.epochsRun = epoch;
    if (schedule.update(row.meanLoss)) {
      best = nn::serializeParameters(params);
      result.bestEpoch = epoch;
      result.bestLoss = row.meanLoss;
    }
    if (schedule.shouldStop())
      break;
  }
  nn::deserializeParameters(best, params);
  return result;
}

//============================================================================
// Latent similarity

std::vector<std::vector<double>> cosineSimilarityMatrix(const LatentsDataset& data,
                                                        bool perBlock)
{
  const int q = data.numQualities;
  std::vector<std::vector<double>> m(std::size_t(q), std::vector<double>(std::size_t(q), 0.0));
  auto cosine = [](const Matrix& a, const Matrix& b, std::size_t r) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) {
      dot += a(r, c) * b(r, c);
      na += a(r, c) * a(r, c);
      nb += b(r, c) * b(r, c);
    }
    return (na > 0.0 && nb > 0.0) ? dot / std::sqrt(na * nb) : 0.0;
  };
  for (int a = 0; a < q; ++a) {
    m[std::size_t(a)][std::size_t(a)] = 1.0;
    for (int b = a + 1; b < q; ++b) {
      double total = 0.0, count = 0.0;
      for (const auto& block : data.blocks) {
        const Matrix& fa = block[std::size_t(a)].y;
        const Matrix& fb = block[std::size_t(b)].y;
        double sum = 0.0;
        for (std::size_t r = 0; r < fa.rows; ++r)
          sum += cosine(fa, fb, r);
        if (perBlock) {
          if (fa.rows > 0) {
            total += sum / double(fa.rows);
            count += 1.0;
          }
        } else {
          total += sum;
          count += double(fa.rows);
        }
      }
      const double v = count > 0.0 ? total / count : 0.0;
      m[std::size_t(a)][std::size_t(b)] = m[std::size_t(b)][std::size_t(a)] = v;
    }
  }
  return m;
}

//============================================================================
// Pipeline

TrainingCorpus loadCorpus(const TrainConfig& cfg)
{
  TrainingCorpus c;
  if (!cfg.trainPly.empty()) {
    for (const auto& p : cfg.trainPly)
      c.train.push_back(loadPly(p, cfg.depth));
  } else {
    c.train = generateCorpus(cfg.depth, cfg.density, cfg.trainClouds, cfg.split.train);
  }
  if (!cfg.validationPly.empty()) {
    for (const auto& p : cfg.validationPly)
      c.validation.push_back(loadPly(p, cfg.depth));
  } else {
    c.validation =
      generateCorpus(cfg.depth, cfg.density, cfg.validationClouds, cfg.split.validation);
  }
  return c;
}

void writeCodecLog(std::ostream& out, std::span<const CodecLogRow> rows)
{
  out << "quality_index,epoch,loss,distortion,bpp\n" << std::setprecision(8);
  for (const auto& r : rows)
    out << r.quality << ',' << r.epoch << ',' << r.loss << ',' << r.distortion << ',' << r.bpp
        << '\n';
}

void writeQulpeLog(std::ostream& out, int numQualities, std::span<const QulpeLogRow> rows)
{
  out << "epoch,lr";
  for (auto [a, b] : qualityPairs(numQualities))
    out << ",val_" << a << '_' << b;
  out << ",val_mean\n" << std::setprecision(8);
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.lr;
    for (double v : r.pairLoss)
      out << ',' << v;
    out << ',' << r.meanLoss << '\n';
  }
}

TrainOutcome trainAll(const TrainConfig& cfg,
                      const std::function<void(const std::string&)>& progress)
{
  cfg.validate();
  TrainingCorpus corpus = loadCorpus(cfg);
  auto cropSet = trainingBlocks(corpus.train, cfg.codecCropSize(), cfg.minBlockPoints);
  auto trainSet = trainingBlocks(corpus.train, cfg.blockSize, cfg.minBlockPoints);
  auto valSet = trainingBlocks(corpus.validation, cfg.blockSize, cfg.minBlockPoints);
  if (trainSet.empty() || cropSet.empty())
    fail(ErrorCode::kBadArgument, "no training block reaches the minimum point count");

  TrainOutcome out;
  out.bank = ModelBank(cfg.ladder, cfg.codec, cfg.qulpe, cfg.blockSize, cfg.seed);
  trainCodecBank(out.bank, cropSet, cfg, &out.codecLog, [&](const CodecLogRow& r) {
    if (progress) {
      std::ostringstream s;
      s << "codec " << r.quality << " epoch " << r.epoch << " loss " << r.loss << " bpp "
        << r.bpp;
      progress(s.str());
    }
  });

  const int q = out.bank.numQualities();
  if (q >= 2) {
    if (valSet.empty())
      fail(ErrorCode::kBadArgument, "no validation block reaches the minimum point count");
    LatentsDataset trainLatents = buildLatentsDataset(out.bank, trainSet);
    LatentsDataset valLatents = buildLatentsDataset(out.bank, valSet);
    out.qulpe = trainQulpe(out.bank.estimator, trainLatents, valLatents, cfg, cfg.seed + 4242,
                           [&](const QulpeLogRow& r) {
                             if (progress) {
                               std::ostringstream s;
                               s << "qulpe epoch " << r.epoch << " lr " << r.lr << " val "
                                 << r.meanLoss;
                               progress(s.str());
                             }
                           });
  }

  if (!cfg.outDir.empty()) {
    std::filesystem::create_directories(cfg.outDir);
    out.bank.save(cfg.outDir);
    std::ofstream codecLog(cfg.outDir + "/codec_log.csv");
    writeCodecLog(codecLog, out.codecLog);
    if (q >= 2) {
      std::ofstream qulpeLog(cfg.outDir + "/qulpe_log.csv");
      writeQulpeLog(qulpeLog, q, out.qulpe.log);
    }
    std::ofstream(cfg.outDir + "/train_config.json") << cfg.toJson().dump(2) << '\n';
  }
  return out;
}

}  // namespace sqh
