#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "sqh/error.hpp"
#include "sqh/metrics.hpp"
#include "sqh/scalable_codec.hpp"
#include "sqh/synth.hpp"

using namespace sqh;

namespace {

SparsePointCloud randomCloud(nn::Rng& rng, int depth, std::size_t n)
{
  std::vector<VoxelCoord> c;
  const std::size_t size = std::size_t(1) << depth;
  for (std::size_t i = 0; i < n; ++i)
    c.push_back({int32_t(rng.index(size)), int32_t(rng.index(size)), int32_t(rng.index(size))});
  return SparsePointCloud::fromCoords(depth, std::move(c));
}

double oracleMse(const SparsePointCloud& a, const SparsePointCloud& b)
{
  double total = 0.0;
  for (const auto& p : a.coords) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b.coords) {
      const double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    total += best;
  }
  return total / double(a.numPoints());
}

double oraclePsnr(const SparsePointCloud& a, const SparsePointCloud& b)
{
  const double d = std::max(oracleMse(a, b), oracleMse(b, a));
  const double p = double((1 << a.depth) - 1);
  return d == 0.0 ? 100.0 : std::min(100.0, 10.0 * std::log10(3.0 * p * p / d));
}

}  // namespace

TEST(Psnr, SingleVoxelClosedForm)
{
  auto a = SparsePointCloud::fromCoords(4, {{0, 0, 0}});
  auto b = SparsePointCloud::fromCoords(4, {{1, 0, 0}});
  EXPECT_NEAR(psnrD1(a, b), 10.0 * std::log10(3.0 * 225.0), 1e-12);
  EXPECT_NEAR(psnrD1(a, b), 28.29, 0.005);
}

TEST(Psnr, IdenticalCloudsHitTheCap)
{
  nn::Rng rng(1);
  auto a = randomCloud(rng, 6, 300);
  EXPECT_EQ(psnrD1(a, a), kPsnrCap);
}

TEST(Psnr, Errors)
{
  auto a = SparsePointCloud::fromCoords(4, {{0, 0, 0}});
  SparsePointCloud empty;
  empty.depth = 4;
  EXPECT_THROW(psnrD1(a, empty), Error);
  EXPECT_THROW(psnrD1(empty, a), Error);
  auto deeper = SparsePointCloud::fromCoords(5, {{0, 0, 0}});
  EXPECT_THROW(psnrD1(a, deeper), Error);
}

TEST(Psnr, MatchesBruteForceOracleAndIsSymmetric)
{
  nn::Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = randomCloud(rng, 7, 1 + rng.index(500));
    auto b = randomCloud(rng, 7, 1 + rng.index(500));
    EXPECT_NEAR(psnrD1(a, b), oraclePsnr(a, b), 1e-9);
    EXPECT_EQ(psnrD1(a, b), psnrD1(b, a));
  }
}

TEST(Psnr, SpatialIndexMatchesBruteForce)
{
  nn::Rng rng(3);
  auto a = randomCloud(rng, 8, 900);
  auto b = randomCloud(rng, 8, 1200);
  ASSERT_GT(b.numPoints(), kBruteForceLimit);
  EXPECT_NEAR(meanNearestSquaredDistance(a, b), oracleMse(a, b), 1e-9);
  EXPECT_NEAR(meanNearestSquaredDistance(b, a), oracleMse(b, a), 1e-9);
}

TEST(Bpp, Basics)
{
  EXPECT_DOUBLE_EQ(bitsPerPoint(800, 1000), 0.8);
  EXPECT_THROW(bitsPerPoint(800, 0), Error);
}

TEST(RateOverhead, HandComputed)
{
  std::vector<RdPoint> ind = {{1, 1, 1.0, 1.0, 30.0}, {2, 2, 1.0, 2.0, 32.0},
                              {3, 3, 2.0, 4.0, 34.0}};
  EXPECT_EQ(rateOverhead(ind, ind), (std::vector<double>{0.0, 0.0, 0.0}));
  std::vector<RdPoint> one = {{1, 1, 0.9, 0.9, 30.0}};
  std::vector<RdPoint> ref = {{1, 1, 1.0, 1.0, 30.0}};
  EXPECT_NEAR(rateOverhead(one, ref)[0], -10.0, 1e-12);
  // (1.0 - 1.0) / 1.0, (1.6 - 2.0) / 2.0, (3.0 - 4.0) / 4.0
  std::vector<RdPoint> sc = {{1, 1, 1.0, 1.0, 30.0}, {2, 2, 0.6, 1.6, 32.0},
                             {3, 3, 1.4, 3.0, 34.0}};
  auto d = rateOverhead(sc, ind);
  EXPECT_NEAR(d[0], 0.0, 1e-12);
  EXPECT_NEAR(d[1], -20.0, 1e-12);
  EXPECT_NEAR(d[2], -25.0, 1e-12);
  EXPECT_THROW(rateOverhead(one, ind), Error);
}

TEST(CumulativeRd, RatesAddUp)
{
  CodecConfig codec;
  codec.analysisWidths = {8, 8, 8};
  codec.synthesisWidths = {8, 8, 4};
  codec.hyperChannels = 4;
  QulpeConfig q;
  q.widths = {12, 16, 20};
  ModelBank bank(QualityLadder::desk(), codec, q, 32, 5);
  const auto x = generateCloud(Shape::kSphereSurface, 6, 700, 9);
  const auto stream = encodeScalable(bank, x, std::vector<int>{1, 2, 3});
  const auto bytes = serialize(stream);
  const auto rd = cumulativeRd(bank, bytes, x);
  ASSERT_EQ(rd.size(), 3u);
  double sum = 0.0;
  for (std::size_t t = 0; t < rd.size(); ++t) {
    sum += rd[t].bppLayer;
    EXPECT_NEAR(rd[t].bppCumulative, sum, 1e-12);
    EXPECT_NEAR(rd[t].bppLayer, 8.0 * double(stream.layerBytes(t)) / double(x.numPoints()),
                1e-12);
    if (t > 0) {
      EXPECT_GT(rd[t].bppCumulative, rd[t - 1].bppCumulative);
    }
    EXPECT_EQ(rd[t].quality, int(t) + 1);
    EXPECT_NEAR(rd[t].psnrD1, psnrD1(x, decodeScalable(bank, bytes, int(t) + 1)), 1e-12);
  }
  EXPECT_NEAR(rd.back().bppCumulative, 8.0 * double(bytes.size()) / double(x.numPoints()),
              1e-12);

  const auto single = cumulativeRd(bank, std::span(bytes).first(layerBoundary(stream, 0)), x);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].bppCumulative, rd[0].bppCumulative);
}

TEST(RdCsv, RoundTripAndSvg)
{
  std::vector<RdSeries> s = {{"sphere", "sqh(1 2 3)", {{1, 1, 0.5, 0.5, 30.25}, {2, 2, 0.25, 0.75, 33.5}}},
                             {"sphere", "independent", {{1, 1, 0.6, 0.6, 30.25}}}};
  std::stringstream csv;
  writeRdCsv(csv, s);
  const std::string text = csv.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "content,config,layer,quality_index,bpp_layer,bpp_cumulative,psnr_d1_db");
  auto back = readRdCsv(csv);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].config, "sqh(1 2 3)");
  ASSERT_EQ(back[0].points.size(), 2u);
  EXPECT_EQ(back[0].points[1].bppCumulative, 0.75);
  EXPECT_EQ(back[1].points[0].psnrD1, 30.25);

  std::stringstream svg;
  writeRdSvg(svg, s);
  const std::string out = svg.str();
  std::size_t polylines = 0;
  for (std::size_t p = out.find("<polyline"); p != std::string::npos;
       p = out.find("<polyline", p + 1))
    ++polylines;
  EXPECT_EQ(polylines, 2u);
  EXPECT_NE(out.find("<svg"), std::string::npos);

  std::stringstream bad("not,a,header\n");
  EXPECT_THROW(readRdCsv(bad), Error);
}
