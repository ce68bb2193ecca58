#include <gtest/gtest.h>

#include <cmath>

#include "sqh/error.hpp"
#include "sqh/training.hpp"

using namespace sqh;

namespace {

TrainConfig tinyConfig()
{
  TrainConfig c;
  c.codec.analysisWidths = {4, 4, 4};
  c.codec.synthesisWidths = {4, 4, 4};
  c.codec.hyperChannels = 2;
  c.qulpe.embedHidden = 4;
  c.qulpe.embedDim = 2;
  c.qulpe.widths = {8, 8, 8};
  c.blockSize = 32;
  c.depth = 5;
  c.density = 300;
  c.trainClouds = 3;
  c.validationClouds = 2;
  c.scratchEpochs = 1;
  c.warmEpochs = 1;
  c.qulpeMaxEpochs = 2;
  c.accumulate = 2;
  return c;
}

std::vector<SparsePointCloud> tinyBlocks(const TrainConfig& c, uint64_t seed = 0)
{
  auto clouds = generateCorpus(c.depth, c.density, c.trainClouds, seed);
  return trainingBlocks(clouds, c.blockSize, 1);
}

LatentsDataset syntheticLatents(const std::vector<std::vector<std::vector<double>>>& rows)
{
  // rows[block][quality] is a flat list of 2-channel features.
  LatentsDataset d;
  d.numQualities = int(rows.front().size());
  for (const auto& block : rows) {
    std::vector<LatentsEntry> entries;
    for (const auto& q : block) {
      LatentsEntry e;
      const std::size_t n = q.size() / 2;
      e.y = Matrix(n, 2);
      e.y.data = q;
      for (std::size_t i = 0; i < n; ++i)
        e.yHat.coords.push_back({int32_t(i), 0, 0});
      e.yHat.feats = e.y;
      entries.push_back(e);
    }
    d.blocks.push_back(entries);
  }
  return d;
}

}  // namespace

TEST(Plateau, StopsAfterExactlyTenStagnantEpochs)
{
  PlateauSchedule s(1e-3, 7, 10);
  int epochs = 0;
  while (!s.shouldStop()) {
    ++epochs;
    s.update(1.0);
    if (epochs == 7) {
      EXPECT_DOUBLE_EQ(s.learningRate(), 1e-3);
    }
    if (epochs == 8) {
      EXPECT_DOUBLE_EQ(s.learningRate(), 1e-4);
    }
  }
  EXPECT_EQ(epochs, 11);
  EXPECT_DOUBLE_EQ(s.best(), 1.0);
}

TEST(Plateau, ImprovementResetsCounter)
{
  PlateauSchedule s(1.0, 2, 3);
  EXPECT_TRUE(s.update(5.0));
  EXPECT_FALSE(s.update(5.0));
  EXPECT_TRUE(s.update(4.0));
  EXPECT_FALSE(s.update(4.5));
  EXPECT_FALSE(s.update(4.5));
  EXPECT_DOUBLE_EQ(s.learningRate(), 0.1);
  EXPECT_FALSE(s.shouldStop());
  EXPECT_FALSE(s.update(4.5));
  EXPECT_TRUE(s.shouldStop());
}

TEST(QualityPairs, EnumeratesAllOrderedPairs)
{
  auto p = qualityPairs(5);
  EXPECT_EQ(p.size(), 10u);
  for (auto [a, b] : p)
    EXPECT_LT(a, b);
  EXPECT_TRUE(qualityPairs(1).empty());
}

TEST(Cosine, DiagonalSymmetryAndOrthogonality)
{
  // Quality 2 is orthogonal to quality 1, quality 3 is a scaled copy of 1.
  auto d = syntheticLatents({{{1, 0, 0, 2}, {0, 1, 3, 0}, {2, 0, 0, 5}}});
  auto m = cosineSimilarityMatrix(d);
  for (int a = 0; a < 3; ++a) {
    EXPECT_EQ(m[a][a], 1.0);
    for (int b = 0; b < 3; ++b)
      EXPECT_EQ(m[a][b], m[b][a]);
  }
  EXPECT_NEAR(m[0][1], 0.0, 1e-15);
  EXPECT_NEAR(m[0][2], 1.0, 1e-15);
}

TEST(Cosine, ZeroVectorsCountAsZeroAndPoolingFlag)
{
  // Block 0 has one coordinate with similarity 1; block 1 has three, one of
  // them a zero vector and two with similarity 1.
  auto d = syntheticLatents({{{1, 1}, {2, 2}}, {{0, 0, 1, 0, 0, 1}, {1, 0, 1, 0, 0, 3}}});
  auto pooled = cosineSimilarityMatrix(d, false);
  auto perBlock = cosineSimilarityMatrix(d, true);
  EXPECT_NEAR(pooled[0][1], 3.0 / 4.0, 1e-15);
  EXPECT_NEAR(perBlock[0][1], (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(Training, LatentsDatasetShapes)
{
  TrainConfig c = tinyConfig();
  ModelBank bank(c.ladder, c.codec, c.qulpe, c.blockSize, 1);
  auto blocks = tinyBlocks(c);
  auto d = buildLatentsDataset(bank, blocks);
  EXPECT_EQ(d.size(), blocks.size() * 3);
  for (const auto& b : d.blocks) {
    ASSERT_EQ(b.size(), 3u);
    for (const auto& e : b) {
      EXPECT_EQ(e.yHat.coords, b[0].yHat.coords);
      for (std::size_t i = 0; i < e.y.data.size(); ++i)
        EXPECT_EQ(e.yHat.feats.data[i], roundHalfAway(e.y.data[i]));
    }
  }
}

TEST(Training, WarmStartCopiesWeights)
{
  TrainConfig c = tinyConfig();
  c.scratchEpochs = 0;
  c.warmEpochs = 0;
  ModelBank bank(c.ladder, c.codec, c.qulpe, c.blockSize, 1);
  trainCodecBank(bank, tinyBlocks(c), c);
  for (int i = 1; i < 3; ++i)
    EXPECT_EQ(nn::serializeParameters(bank.model(i).parameters()),
              nn::serializeParameters(bank.model(i + 1).parameters()));

  c.control = true;
  ModelBank control(c.ladder, c.codec, c.qulpe, c.blockSize, 1);
  trainCodecBank(control, tinyBlocks(c), c);
  EXPECT_NE(nn::serializeParameters(control.model(1).parameters()),
            nn::serializeParameters(control.model(2).parameters()));
}

TEST(Training, SingleQualityLadder)
{
  TrainConfig c = tinyConfig();
  c.ladder = QualityLadder{{0.01}};
  ModelBank bank(c.ladder, c.codec, c.qulpe, c.blockSize, 1);
  std::vector<CodecLogRow> log;
  trainCodecBank(bank, tinyBlocks(c), c, &log);
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].quality, 1);
}

TEST(Training, ReproducibleAndChangesWeights)
{
  TrainConfig c = tinyConfig();
  auto blocks = tinyBlocks(c);
  CodecModel a(c.codec, 5), b(c.codec, 5);
  const auto initial = nn::serializeParameters(a.parameters());
  trainCodecModel(a, blocks, 0.01, 2, c, 99, 1);
  trainCodecModel(b, blocks, 0.01, 2, c, 99, 1);
  EXPECT_EQ(nn::serializeParameters(a.parameters()), nn::serializeParameters(b.parameters()));
  EXPECT_NE(nn::serializeParameters(a.parameters()), initial);
}

TEST(Training, DivergenceNamesModelAndStep)
{
  TrainConfig c = tinyConfig();
  CodecModel m(c.codec, 5);
  try {
    trainCodecModel(m, tinyBlocks(c), std::nan(""), 1, c, 1, 2);
    ADD_FAILURE() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
    EXPECT_NE(std::string(e.what()).find("model 2 step 1"), std::string::npos) << e.what();
  }
}

TEST(Training, QulpeBeatsStandardNormalOnShiftedLatents)
{
  // Target latents are the base latents plus one: learnable from the input.
  nn::Rng rng(3);
  std::vector<std::vector<std::vector<double>>> rows;
  for (int b = 0; b < 24; ++b) {
    std::vector<double> base(2 * 8);
    for (auto& v : base)
      v = std::round(rng.uniform(-3.0, 3.0));
    std::vector<double> mid = base, top = base;
    for (auto& v : mid)
      v += 1.0;
    for (auto& v : top)
      v += 2.0;
    rows.push_back({base, mid, top});
  }
  auto train = syntheticLatents(rows);
  auto val = syntheticLatents({rows.begin(), rows.begin() + 6});
  TrainConfig c = tinyConfig();
  c.qulpe.numQualities = 3;
  c.qulpe.latentChannels = 2;
  c.qulpeMaxEpochs = 40;
  c.qulpeLr = 1e-2;
  QulpeModel model(c.qulpe, 4);
  auto result = trainQulpe(model, train, val, c, 5);
  EXPECT_GE(result.epochsRun, 1);
  EXPECT_EQ(result.log.front().pairLoss.size(), 3u);
  const auto trained = qulpeValidation(model, val);
  const auto baseline = standardNormalBaseline(val);
  for (std::size_t p = 0; p < trained.size(); ++p)
    EXPECT_LT(trained[p], baseline[p]) << p;
  EXPECT_DOUBLE_EQ(trained.size() ? result.bestLoss : 0.0,
                   (trained[0] + trained[1] + trained[2]) / 3.0);
}

TEST(TrainConfig, JsonRoundTripAndValidation)
{
  TrainConfig c = tinyConfig();
  c.outDir = "out";
  auto back = TrainConfig::fromJson(c.toJson());
  EXPECT_EQ(back.toJson(), c.toJson());
  auto j = c.toJson();
  j["ladder"] = {0.01, 0.05};
  EXPECT_THROW(TrainConfig::fromJson(j), Error);
  j = c.toJson();
  j["block_size"] = 48;
  EXPECT_THROW(TrainConfig::fromJson(j), Error);
  j = c.toJson();
  j["epochs"]["scratch"] = "many";
  EXPECT_THROW(TrainConfig::fromJson(j), Error);
}

TEST(Training, PipelineWritesBankAndLogs)
{
  TrainConfig c = tinyConfig();
  c.outDir = ::testing::TempDir() + "/sqh_train_pipeline";
  auto out = trainAll(c);
  EXPECT_EQ(out.codecLog.size(), 3u);
  ModelBank loaded = ModelBank::load(c.outDir);
  EXPECT_EQ(nn::serializeParameters(loaded.model(2).parameters()),
            nn::serializeParameters(out.bank.model(2).parameters()));
  EXPECT_EQ(nn::serializeParameters(loaded.estimator.parameters()),
            nn::serializeParameters(out.bank.estimator.parameters()));
}
