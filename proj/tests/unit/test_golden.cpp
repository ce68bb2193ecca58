#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "sqh/ply.hpp"
#include "sqh/scalable_codec.hpp"

using namespace sqh;

namespace {

const std::string kDir = std::string(SQH_FIXTURE_DIR) + "/golden";

std::vector<uint8_t> fixtureBytes(const std::string& name)
{
  std::ifstream in(kDir + "/" + name, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Golden, DecodesToFixtureClouds)
{
  ModelBank bank = ModelBank::load(kDir + "/bank");
  const auto bytes = fixtureBytes("stream.sqh");
  ASSERT_FALSE(bytes.empty());
  const auto stream = parseBitstream(bytes);
  EXPECT_EQ(stream.ladder(), (std::vector<int>{1, 2, 3}));
  for (int t = 1; t <= 3; ++t)
    EXPECT_EQ(decodeScalable(bank, bytes, t),
              loadPly(kDir + "/decoded_layer" + std::to_string(t) + ".ply", stream.depth))
        << t;
}

TEST(Golden, ReencodeReproducesBytes)
{
  ModelBank bank = ModelBank::load(kDir + "/bank");
  const auto bytes = fixtureBytes("stream.sqh");
  const auto stream = parseBitstream(bytes);
  const auto input = loadPly(kDir + "/input.ply", stream.depth);
  EXPECT_EQ(serialize(encodeScalable(bank, input, stream.ladder())), bytes);
  EXPECT_EQ(serialize(encodeScalable(bank, input, stream.ladder(), 4)), bytes);
}
