#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "sqh/error.hpp"
#include "sqh/ply.hpp"
#include "sqh/synth.hpp"

using namespace sqh;

TEST(Synth, SphereShellOracle)
{
  const auto pc = generateCloud(Shape::kSphereSurface, 6, 2000, 11);
  EXPECT_GE(pc.numPoints(), 1800u);
  EXPECT_LE(pc.numPoints(), 2200u);
  const SphereFit f = sphereParameters(6, 2000, 11);
  for (const auto& c : pc.coords) {
    const double d = std::sqrt((c.x - f.cx) * (c.x - f.cx) + (c.y - f.cy) * (c.y - f.cy) +
                               (c.z - f.cz) * (c.z - f.cz));
    EXPECT_LE(std::fabs(d - f.radius), 1.5);
  }
  EXPECT_NO_THROW(pc.validate());
}

TEST(Synth, SameSeedSameCloud)
{
  for (Shape s : allShapes()) {
    EXPECT_EQ(generateCloud(s, 6, 1000, 4), generateCloud(s, 6, 1000, 4)) << shapeName(s);
    EXPECT_NE(generateCloud(s, 6, 1000, 4), generateCloud(s, 6, 1000, 5)) << shapeName(s);
  }
}

TEST(Synth, DensityWithinTenPercent)
{
  for (Shape s : allShapes())
    for (std::size_t density : {400u, 1200u, 2500u})
      for (uint64_t seed : {1u, 2u, 3u}) {
        const auto pc = generateCloud(s, 6, density, seed);
        const double rel = std::fabs(double(pc.numPoints()) - double(density)) / double(density);
        EXPECT_LE(rel, 0.10) << shapeName(s) << " " << density << " " << seed;
        EXPECT_NO_THROW(pc.validate());
      }
}

TEST(Synth, PlaneFillsOneSlab)
{
  const auto pc = generateCloud(Shape::kPlane, 6, 1500, 8);
  int lo[3] = {1 << 20, 1 << 20, 1 << 20}, hi[3] = {-1, -1, -1};
  for (const auto& c : pc.coords) {
    const int v[3] = {c.x, c.y, c.z};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], v[a]);
      hi[a] = std::max(hi[a], v[a]);
    }
  }
  int thin = 0;
  for (int a = 0; a < 3; ++a)
    thin += hi[a] == lo[a];
  EXPECT_EQ(thin, 1);
}

TEST(Synth, ParseShape)
{
  for (Shape s : allShapes())
    EXPECT_EQ(parseShape(shapeName(s)), s);
  EXPECT_THROW(parseShape("torus"), Error);
  EXPECT_THROW(generateCloud(Shape::kSphereSurface, 3, 100000, 1), Error);
}

TEST(Synth, CorpusCyclesShapes)
{
  auto corpus = generateCorpus(6, 600, 7, 100);
  ASSERT_EQ(corpus.size(), 7u);
  EXPECT_EQ(corpus[0], generateCloud(Shape::kSphereSurface, 6, 600, 100));
  EXPECT_EQ(corpus[5], generateCloud(Shape::kSphereSurface, 6, 600, 105));
}

TEST(Ply, RoundTripAsciiAndBinaryAgree)
{
  const auto pc = generateCloud(Shape::kComposite, 7, 1500, 2);
  const std::string a = ::testing::TempDir() + "/sqh_rt_ascii.ply";
  const std::string b = ::testing::TempDir() + "/sqh_rt_binary.ply";
  savePly(pc, a, PlyFormat::kAscii);
  savePly(pc, b, PlyFormat::kBinaryLittleEndian);
  EXPECT_EQ(loadPly(a, 7), pc);
  EXPECT_EQ(loadPly(b, 7), pc);
  EXPECT_EQ(readPly(a).points, readPly(b).points);
  EXPECT_EQ(readPly(b).format, PlyFormat::kBinaryLittleEndian);
  EXPECT_TRUE(readPly(a).integerTyped);
}

TEST(Ply, MalformedHeader)
{
  const std::string p = ::testing::TempDir() + "/sqh_bad.ply";
  std::ofstream(p) << "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nbogus\n";
  try {
    readPly(p);
    ADD_FAILURE() << "accepted";
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("invalid PLY", 0), 0u) << e.what();
  }
}
