#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "sqh/codec_model.hpp"
#include "sqh/error.hpp"
#include "sqh/selftest.hpp"
#include "sqh/synth.hpp"

using namespace sqh;

namespace {

CodecConfig smallConfig()
{
  CodecConfig c;
  c.analysisWidths = {8, 8, 8};
  c.synthesisWidths = {8, 8, 4};
  c.hyperChannels = 4;
  return c;
}

}  // namespace

TEST(Rounding, HalfAwayFromZero)
{
  EXPECT_EQ(roundHalfAway(0.5), 1.0);
  EXPECT_EQ(roundHalfAway(-0.5), -1.0);
  EXPECT_EQ(roundHalfAway(1.49), 1.0);
  EXPECT_EQ(roundHalfAway(-2.5), -3.0);
  EXPECT_EQ(roundHalfAway(0.0), 0.0);
}

TEST(TopIndices, MatchesStableSortOracle)
{
  nn::Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(1 + rng.index(60));
    for (auto& v : s)
      v = double(rng.index(8));  // many ties
    const std::size_t k = rng.index(s.size() + 2);
    std::vector<int32_t> order(s.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s[a] > s[b]; });
    order.resize(std::min(k, s.size()));
    std::sort(order.begin(), order.end());
    EXPECT_EQ(topIndices(s, k), order);
  }
}

TEST(Binarize, KeepsHighestScoresWithMortonTieBreak)
{
  std::vector<VoxelCoord> cand = {{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {1, 0, 0}};
  std::vector<double> scores = {0.2, 0.9, 0.2, 0.2};
  auto pc = binarize(1, cand, scores, 2);
  ASSERT_EQ(pc.numPoints(), 2u);
  EXPECT_EQ(pc.coords[0], (VoxelCoord{0, 0, 0}));
  EXPECT_EQ(pc.coords[1], (VoxelCoord{0, 0, 1}));
  EXPECT_EQ(binarize(1, cand, scores, 10).numPoints(), 4u);
}

TEST(CodecModel, LatentCoordinatesDependOnInputOnly)
{
  const auto block = generateCloud(Shape::kSphereSurface, 6, 800, 3);
  CodecModel a(smallConfig(), 1), b(smallConfig(), 2);
  auto ya = a.analyzeLatents(block), yb = b.analyzeLatents(block);
  EXPECT_EQ(ya.coords, yb.coords);
  EXPECT_EQ(ya.coords, ancestorCoords(block.coords, 3));
  EXPECT_EQ(ya.stride, 8);
  EXPECT_EQ(ya.channels(), 8u);
  EXPECT_NE(ya.feats, yb.feats);
}

TEST(CodecModel, SameSeedSameWeights)
{
  CodecModel a(smallConfig(), 9), b(smallConfig(), 9);
  EXPECT_EQ(nn::serializeParameters(a.parameters()), nn::serializeParameters(b.parameters()));
}

TEST(CodecModel, HyperScalesRespectFloor)
{
  const auto block = generateCloud(Shape::kCubeFrame, 6, 900, 4);
  CodecModel m(smallConfig(), 3);
  auto y = m.analyzeLatents(block);
  auto z = roundMatrix(m.hyperLatents(y));
  auto p = m.hyperParams(z, y.coords);
  ASSERT_EQ(p.sigma.rows, y.size());
  for (double s : p.sigma.data)
    EXPECT_GE(s, smallConfig().sigmaMin);
}

TEST(CodecModel, ReconstructionHasRequestedCountAndCountsSynthesis)
{
  const auto block = generateCloud(Shape::kPlane, 6, 700, 5);
  CodecModel m(smallConfig(), 4);
  auto y = m.analyzeLatents(block);
  y.feats = roundMatrix(y.feats);
  EXPECT_EQ(m.synthesisCount(), 0);
  auto rec = m.reconstruct(y, block.numPoints(), 6);
  EXPECT_EQ(m.synthesisCount(), 1);
  EXPECT_EQ(rec.numPoints(), block.numPoints());
  EXPECT_NO_THROW(rec.validate());
  // Every reconstructed voxel descends from a latent coordinate.
  for (const auto& c : rec.coords)
    EXPECT_GE(findCoord(y.coords, c.shr(3)), 0);
}

TEST(CodecModel, CopyParametersMakesIdenticalModels)
{
  CodecModel a(smallConfig(), 1), b(smallConfig(), 2);
  b.copyParametersFrom(a);
  EXPECT_EQ(nn::serializeParameters(a.parameters()), nn::serializeParameters(b.parameters()));
  CodecConfig other = smallConfig();
  other.hyperChannels = 5;
  CodecModel c(other, 1);
  EXPECT_THROW(c.copyParametersFrom(a), Error);
}

TEST(CodecModel, RateDistortionTermsAreConsistent)
{
  const auto block = generateCloud(Shape::kGaussianBlobs, 6, 600, 6);
  CodecModel m(smallConfig(), 5);
  nn::Tape t;
  auto r = m.rdLoss(t, block, 0.01, nullptr);
  EXPECT_NEAR(t.value(r.loss).data[0], r.distortion + 0.01 * r.bpp, 1e-12);
  EXPECT_NEAR(r.bpp, r.rateBits / double(block.numPoints()), 1e-12);
  EXPECT_GT(r.rateBits, 0.0);
}

TEST(CodecModel, EndToEndGradientCheck)
{
  auto r = checkGradients(1e-4, 1e-4, 17);
  EXPECT_TRUE(r.ok()) << r.detail;
  EXPECT_GE(r.cases, 10);
}

TEST(CodecConfig, Validation)
{
  CodecConfig c;
  c.synthesisWidths = {8, 8};
  EXPECT_THROW(c.validate(), Error);
  c = CodecConfig{};
  c.sigmaMin = 0.0;
  EXPECT_THROW(c.validate(), Error);
}
