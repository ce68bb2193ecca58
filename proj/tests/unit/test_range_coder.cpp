#include <gtest/gtest.h>

#include <cmath>

#include "sqh/error.hpp"
#include "sqh/nn.hpp"
#include "sqh/range_coder.hpp"

using namespace sqh;
using namespace sqh::entropy;

namespace {

double erfPhi(double x)
{
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

QuantizedCdf randomTable(nn::Rng& rng)
{
  const int32_t lo = int32_t(rng.index(41)) - 20;
  const int32_t hi = lo + int32_t(rng.index(30));
  std::vector<double> p(std::size_t(hi - lo + 1));
  double s = 0.0;
  for (auto& v : p) {
    v = std::pow(rng.uniform(), 3.0);
    s += v;
  }
  for (auto& v : p)
    v /= s * 1.001;
  return QuantizedCdf::fromProbabilities(lo, hi, p);
}

}  // namespace

TEST(QuantizedCdf, InvariantsFromRandomGaussians)
{
  nn::Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const double mu = rng.uniform(-20, 20), sigma = rng.uniform(0.11, 30);
    auto cdf = gaussianCdf(mu, sigma, -40, 40);
    EXPECT_NO_THROW(cdf.validate());
    EXPECT_EQ(cdf.cdf.front(), 0u);
    EXPECT_EQ(cdf.cdf.back(), kCdfTotal);
    for (int s = 0; s <= cdf.numSymbols(); ++s)
      EXPECT_GE(cdf.frequency(s), 1u);
  }
}

TEST(GaussianMass, MatchesErfOracle)
{
  EXPECT_NEAR(gaussianMass(0, 1, 0), erfPhi(0.5) - erfPhi(-0.5), 1e-12);
  EXPECT_NEAR(gaussianMass(0, 1, 0), 0.3829, 1e-4);
  EXPECT_GT(gaussianMass(0, 0.11, 0), 0.99);
  auto cdf = gaussianCdf(0.0, 0.11, -4, 4);
  EXPECT_GT(double(cdf.frequency(4)) / kCdfTotal, 0.99);
}

TEST(GaussianMass, QuantizedTableIsSymmetric)
{
  for (double sigma : {0.2, 1.0, 3.7}) {
    auto cdf = gaussianCdf(0.0, sigma, -10, 10);
    for (int k = 1; k <= 10; ++k)
      EXPECT_EQ(cdf.frequency(10 + k), cdf.frequency(10 - k));
  }
}

TEST(EntropyBits, Trivial)
{
  std::vector<double> four = {0.25, 0.25, 0.25, 0.25};
  EXPECT_DOUBLE_EQ(entropyBits(four), 8.0);
  std::vector<double> one = {1.0};
  EXPECT_DOUBLE_EQ(entropyBits(one), 0.0);
}

TEST(RangeCoder, EmptyStream)
{
  auto bytes = rangeEncode({}, {});
  EXPECT_LE(bytes.size(), 8u);
  EXPECT_TRUE(rangeDecode(bytes, {}).empty());
}

TEST(RangeCoder, UniformBinaryNearOneBitPerSymbol)
{
  nn::Rng rng(2);
  std::vector<int32_t> syms(1000);
  for (auto& s : syms)
    s = int32_t(rng.index(2));
  // Two equal symbols; the escape slot takes a single count.
  std::vector<double> p = {0.5, 0.5};
  std::vector<QuantizedCdf> cdfs(syms.size(), QuantizedCdf::fromProbabilities(0, 1, p));
  auto bytes = rangeEncode(syms, cdfs);
  EXPECT_GE(bytes.size() * 8, 1000u);
  EXPECT_LE(bytes.size() * 8, 1064u);
  EXPECT_EQ(rangeDecode(bytes, cdfs), syms);
}

TEST(RangeCoder, RandomRoundTripWithEscapes)
{
  nn::Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = rng.index(200);
    std::vector<int32_t> syms(n);
    std::vector<QuantizedCdf> cdfs;
    for (std::size_t i = 0; i < n; ++i) {
      cdfs.push_back(randomTable(rng));
      const auto& c = cdfs.back();
      if (rng.uniform() < 0.05)
        syms[i] = c.symbolMax + 1 + int32_t(rng.index(100000));
      else
        syms[i] = c.symbolMin + int32_t(rng.index(std::size_t(c.numSymbols())));
    }
    auto bytes = rangeEncode(syms, cdfs);
    ASSERT_EQ(rangeDecode(bytes, cdfs), syms) << "trial " << trial;
  }
}

TEST(RangeCoder, LengthWithinEntropyBound)
{
  nn::Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int32_t> syms(10000);
    std::vector<QuantizedCdf> cdfs;
    for (auto& s : syms) {
      const double mu = rng.uniform(-3, 3), sigma = rng.uniform(0.2, 4);
      cdfs.push_back(gaussianCdf(mu, sigma, -20, 20));
      // Inverse-CDF sample from the quantized table.
      const uint32_t u = uint32_t(rng.index(kCdfTotal));
      int slot = 0;
      while (cdfs.back().cdf[std::size_t(slot) + 1] <= u)
        ++slot;
      s = slot >= cdfs.back().numSymbols() ? -21 : -20 + slot;
    }
    auto bytes = rangeEncode(syms, cdfs);
    const double ideal = quantizedEntropyBits(syms, cdfs);
    EXPECT_LE(double(bytes.size() * 8), ideal + 64.0 + 0.02 * ideal);
  }
}

TEST(RangeCoder, TruncationIsCorrupt)
{
  nn::Rng rng(4);
  std::vector<int32_t> syms(500);
  std::vector<QuantizedCdf> cdfs(500, QuantizedCdf::uniform(0, 255));
  for (auto& s : syms)
    s = int32_t(rng.index(256));
  auto bytes = rangeEncode(syms, cdfs);
  bytes.resize(bytes.size() - 3);
  try {
    rangeDecode(bytes, cdfs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorruptStream);
    EXPECT_STREQ(e.what(), "corrupt stream");
  }
}

TEST(AdaptiveByteModel, RoundTripAndHalving)
{
  nn::Rng rng(8);
  std::vector<uint8_t> data(20000);
  for (auto& b : data)
    b = rng.uniform() < 0.7 ? 1 : uint8_t(rng.index(256));
  RangeEncoder enc;
  AdaptiveByteModel m;
  for (auto b : data) {
    m.encode(enc, b);
    EXPECT_LE(m.total(), AdaptiveByteModel::kLimit + AdaptiveByteModel::kIncrement);
  }
  auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  AdaptiveByteModel m2;
  for (auto b : data)
    ASSERT_EQ(m2.decode(dec), b);
  EXPECT_EQ(dec.position(), bytes.size());
}

TEST(Substream, FramingRoundTrip)
{
  std::vector<int32_t> vals = {-3, 5, 0};
  auto r = symbolRangeOf(vals);
  EXPECT_EQ(r.min, -4);
  EXPECT_EQ(r.max, 6);
  std::vector<uint8_t> payload = {1, 2, 3};
  auto framed = frameSubstream(r, payload);
  ASSERT_EQ(framed.size(), 7u);
  EXPECT_EQ(framed[0], 0xFF);
  EXPECT_EQ(framed[1], 0xFC);
  EXPECT_EQ(framed[2], 0x00);
  EXPECT_EQ(framed[3], 0x06);
  auto parsed = parseSubstream(framed);
  EXPECT_EQ(parsed.range.min, -4);
  EXPECT_EQ(parsed.range.max, 6);
  EXPECT_EQ(std::vector<uint8_t>(parsed.payload.begin(), parsed.payload.end()), payload);
}
