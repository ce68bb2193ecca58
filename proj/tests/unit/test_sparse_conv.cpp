#include <gtest/gtest.h>

#include <map>

#include "sqh/error.hpp"
#include "sqh/sparse_conv.hpp"

using namespace sqh;
using namespace sqh::nn;

namespace {

constexpr int kGrid = 8;

std::vector<VoxelCoord> randomSites(Rng& rng, int n, int extent)
{
  std::vector<VoxelCoord> cs;
  for (int i = 0; i < n; ++i)
    cs.push_back({int32_t(rng.index(extent)), int32_t(rng.index(extent)),
                  int32_t(rng.index(extent))});
  return SparsePointCloud::fromCoords(8, cs).coords;
}

LatentTensor randomTensor(Rng& rng, int n, int extent, std::size_t channels)
{
  LatentTensor t;
  t.coords = randomSites(rng, n, extent);
  t.feats = Matrix(t.coords.size(), channels);
  for (auto& v : t.feats.data)
    v = rng.uniform(-1, 1);
  return t;
}

// Dense grid [x][y][z][channel], zero outside occupied sites.
using Dense = std::vector<double>;

Dense densify(const LatentTensor& t, int extent)
{
  const std::size_t c = t.channels();
  Dense d(std::size_t(extent * extent * extent) * c, 0.0);
  for (std::size_t i = 0; i < t.coords.size(); ++i) {
    auto& p = t.coords[i];
    for (std::size_t a = 0; a < c; ++a)
      d[((std::size_t(p.x) * extent + p.y) * extent + p.z) * c + a] = t.feats(i, a);
  }
  return d;
}

double denseAt(const Dense& d, int extent, std::size_t c, int x, int y, int z, std::size_t a)
{
  if (x < 0 || y < 0 || z < 0 || x >= extent || y >= extent || z >= extent)
    return 0.0;
  return d[((std::size_t(x) * extent + y) * extent + z) * c + a];
}

}  // namespace

TEST(SparseConv, IdentityKernel)
{
  Rng rng(1);
  SparseConv layer("id", 4, 4, 3, 1, ConvDirection::kDown, rng);
  layer.weight.value.zero();
  for (int a = 0; a < 4; ++a)
    layer.weight.value(13 * 4 + a, a) = 1.0;  // center offset
  auto in = randomTensor(rng, 40, kGrid, 4);
  auto out = sparseConvForward(layer, in);
  EXPECT_EQ(out.coords, in.coords);
  EXPECT_EQ(out.feats, in.feats);
}

TEST(SparseConv, SingleSiteDownsample)
{
  Rng rng(2);
  SparseConv layer("d", 1, 2, 2, 2, ConvDirection::kDown, rng);
  LatentTensor in;
  in.coords = {{5, 3, 6}};
  in.feats = Matrix(1, 1, 1.0);
  auto out = sparseConvForward(layer, in);
  ASSERT_EQ(out.coords.size(), 1u);
  EXPECT_EQ(out.coords[0], (VoxelCoord{2, 1, 3}));
  EXPECT_EQ(out.stride, 2);
}

TEST(SparseConv, SubmanifoldMatchesDenseOracle)
{
  Rng rng(3);
  const std::size_t ci = 3, co = 2;
  SparseConv layer("s", ci, co, 3, 1, ConvDirection::kDown, rng);
  for (auto& v : layer.bias.value.data)
    v = rng.uniform(-1, 1);
  auto in = randomTensor(rng, 120, kGrid, ci);
  auto out = sparseConvForward(layer, in);
  Dense d = densify(in, kGrid);
  for (std::size_t r = 0; r < out.coords.size(); ++r) {
    auto c = out.coords[r];
    for (std::size_t b = 0; b < co; ++b) {
      double acc = layer.bias.value(0, b);
      int k = 0;
      for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dz = -1; dz <= 1; ++dz, ++k)
            for (std::size_t a = 0; a < ci; ++a)
              acc += layer.weight.value(k * ci + a, b) *
                     denseAt(d, kGrid, ci, c.x + dx, c.y + dy, c.z + dz, a);
      EXPECT_NEAR(out.feats(r, b), acc, 1e-12);
    }
  }
}

TEST(SparseConv, DownsampleMatchesDenseOracle)
{
  Rng rng(4);
  const std::size_t ci = 2, co = 3;
  SparseConv layer("d", ci, co, 2, 2, ConvDirection::kDown, rng);
  auto in = randomTensor(rng, 150, kGrid, ci);
  auto out = sparseConvForward(layer, in);
  EXPECT_EQ(out.coords, parentCoords(in.coords));
  Dense d = densify(in, kGrid);
  for (std::size_t r = 0; r < out.coords.size(); ++r) {
    auto c = out.coords[r];
    for (std::size_t b = 0; b < co; ++b) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k)
        for (std::size_t a = 0; a < ci; ++a)
          acc += layer.weight.value(k * ci + a, b) *
                 denseAt(d, kGrid, ci, 2 * c.x + (k >> 2 & 1), 2 * c.y + (k >> 1 & 1),
                         2 * c.z + (k & 1), a);
      EXPECT_NEAR(out.feats(r, b), acc, 1e-12);
    }
  }
}

TEST(SparseConv, TransposedMatchesDenseOracle)
{
  Rng rng(5);
  const std::size_t ci = 3, co = 2;
  SparseConv layer("u", ci, co, 2, 2, ConvDirection::kUp, rng);
  auto in = randomTensor(rng, 30, kGrid / 2, ci);
  auto out = sparseConvUpForward(layer, in, {});
  EXPECT_EQ(out.coords.size(), in.coords.size() * 8);
  Dense d = densify(in, kGrid / 2);
  for (std::size_t r = 0; r < out.coords.size(); ++r) {
    auto c = out.coords[r];
    const int k = ((c.x & 1) << 2) | ((c.y & 1) << 1) | (c.z & 1);
    for (std::size_t b = 0; b < co; ++b) {
      double acc = 0.0;
      for (std::size_t a = 0; a < ci; ++a)
        acc += layer.weight.value(k * ci + a, b) *
               denseAt(d, kGrid / 2, ci, c.x >> 1, c.y >> 1, c.z >> 1, a);
      EXPECT_NEAR(out.feats(r, b), acc, 1e-12);
    }
  }
}

TEST(SparseConv, UpsampleSingleSiteAndTargets)
{
  Rng rng(6);
  SparseConv layer("u", 1, 1, 2, 2, ConvDirection::kUp, rng);
  LatentTensor in;
  in.coords = {{1, 1, 1}};
  in.feats = Matrix(1, 1, 1.0);
  in.stride = 2;
  auto all = sparseConvUpForward(layer, in, {});
  EXPECT_EQ(all.coords, childCoords(in.coords));
  std::vector<VoxelCoord> subset = {all.coords[1], all.coords[6]};
  auto some = sparseConvUpForward(layer, in, subset);
  EXPECT_EQ(some.coords, subset);
  EXPECT_EQ(some.feats(0, 0), all.feats(1, 0));
}

TEST(SparseConv, MapsIgnoreWeights)
{
  Rng rng(7);
  auto in = randomTensor(rng, 60, kGrid, 2);
  SparseConv a("a", 2, 2, 2, 2, ConvDirection::kDown, rng);
  SparseConv b("b", 2, 2, 2, 2, ConvDirection::kDown, rng);
  EXPECT_EQ(sparseConvForward(a, in).coords, sparseConvForward(b, in).coords);
}

TEST(SparseConv, ChannelMismatch)
{
  Rng rng(8);
  SparseConv layer("x", 3, 2, 3, 1, ConvDirection::kDown, rng);
  auto in = randomTensor(rng, 10, kGrid, 2);
  EXPECT_THROW(sparseConvForward(layer, in), Error);
}

TEST(SparseConv, GradientCheckAllKinds)
{
  Rng rng(9);
  auto in = randomTensor(rng, 40, 4, 2);
  Parameter x("x", in.feats.rows, in.feats.cols);
  x.value = in.feats;
  SparseConv sub("sub", 2, 3, 3, 1, ConvDirection::kDown, rng);
  SparseConv down("down", 3, 4, 2, 2, ConvDirection::kDown, rng);
  SparseConv up("up", 4, 2, 2, 2, ConvDirection::kUp, rng);
  auto parents = parentCoords(in.coords);
  auto subMap = share(submanifoldMap(in.coords));
  auto downMap = share(downsampleMap(in.coords, parents));
  auto upMap = share(upsampleMap(parents, in.coords));
  std::vector<Parameter*> ps = {&x};
  for (auto* l : {&sub, &down, &up})
    for (auto* p : l->parameters())
      ps.push_back(p);
  for (auto* p : ps)
    if (p->name.ends_with(".bias"))
      for (auto& v : p->value.data)
        v = rng.uniform(-0.5, 0.5);
  auto build = [&](Tape& t) {
    Var h = sub.forward(t, t.parameter(x), subMap);
    h = down.forward(t, h, downMap);
    h = up.forward(t, h, upMap);
    return ops::sum(t, ops::mul(t, h, h));
  };
  EXPECT_LT(gradientCheck(build, ps), 1e-4);
}
