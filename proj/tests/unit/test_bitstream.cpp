#include <gtest/gtest.h>

#include "sqh/bitstream.hpp"
#include "sqh/error.hpp"

using namespace sqh;

namespace {

ScalableBitstream twoLayerStream()
{
  ScalableBitstream s;
  s.numQualities = 3;
  s.depth = 6;
  s.blockSizeLog2 = 6;
  s.blocks = {{{0, 0, 0}, 5}};
  LayerRecord base;
  base.quality = 1;
  base.type = LayerType::kBase;
  base.coords = {0xAA};
  base.latents = {1, 2};
  LayerRecord enh;
  enh.quality = 3;
  enh.type = LayerType::kEnhancement;
  enh.sqh = {7};
  s.layers = {base, enh};
  s.declaredLayers = 2;
  return s;
}

}  // namespace

TEST(Bitstream, GoldenLayout)
{
  const std::vector<uint8_t> expected = {
    'S', 'Q', 'H', '1', 1, 3, 2, 6, 6, 1,  // magic, version, Q, k, depth, log2 block, flags
    0, 0, 0, 5,                           // total points
    0, 1,                                 // blocks
    0, 0, 0, 0, 0, 0, 0, 0, 0, 5,         // origin, points
    1, 0, 3, 1,                           // layer table
    0, 0, 0, 1, 0xAA,                     // coordinates
    0, 0, 0, 0,                           // side
    0, 0, 0, 2, 1, 2,                     // latents
    0, 0, 0, 1, 7};                       // enhancement
  const auto s = twoLayerStream();
  EXPECT_EQ(serialize(s), expected);
  EXPECT_EQ(s.headerBytes(), 30u);
  EXPECT_EQ(s.layerBytes(0), 45u);
  EXPECT_EQ(s.layerBytes(1), 5u);
  EXPECT_EQ(layerBoundary(s, 0), 45u);
  EXPECT_EQ(layerBoundary(s, 1), 50u);
  EXPECT_EQ(s.ladder(), (std::vector<int>{1, 3}));
  EXPECT_EQ(s.numPointsTotal(), 5u);
}

TEST(Bitstream, ParseRoundTrip)
{
  const auto s = twoLayerStream();
  EXPECT_EQ(parseBitstream(serialize(s)), s);
}

TEST(Bitstream, LayerPrefixesParseAndOtherCutsAreCorrupt)
{
  const auto s = twoLayerStream();
  const auto bytes = serialize(s);
  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    const auto prefix = std::span(bytes).first(cut);
    if (cut == layerBoundary(s, 0)) {
      auto p = parseBitstream(prefix);
      ASSERT_EQ(p.layers.size(), 1u);
      EXPECT_EQ(p.layers[0], s.layers[0]);
      EXPECT_EQ(p.declaredLayers, 2u);
      continue;
    }
    try {
      parseBitstream(prefix);
      ADD_FAILURE() << "cut " << cut << " accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kCorruptStream);
      EXPECT_STREQ(e.what(), "corrupt/incomplete stream");
    }
  }
}

TEST(Bitstream, MalformedFieldsAreCorrupt)
{
  auto bytes = serialize(twoLayerStream());
  auto expectCorrupt = [](std::vector<uint8_t> b) {
    try {
      parseBitstream(b);
      ADD_FAILURE() << "accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kCorruptStream);
    }
  };
  auto badMagic = bytes;
  badMagic[0] = 'X';
  expectCorrupt(badMagic);
  auto trailing = bytes;
  trailing.push_back(0);
  expectCorrupt(trailing);
  auto badType = bytes;
  badType[27] = 9;  // second layer type
  expectCorrupt(badType);
}

TEST(Bitstream, SerializeRejectsEmptyStream)
{
  ScalableBitstream s;
  EXPECT_THROW(serialize(s), Error);
}
