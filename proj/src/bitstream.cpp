#include "sqh/bitstream.hpp"

#include <cstring>

#include "sqh/error.hpp"

namespace sqh {

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'H', '1'};

[[noreturn]] void corrupt()
{
  fail(ErrorCode::kCorruptStream, "corrupt/incomplete stream");
}

class Writer {
public:
  void u8(uint32_t v) { out.push_back(uint8_t(v)); }
  void u16(uint32_t v)
  {
    u8(v >> 8);
    u8(v);
  }
  void u32(uint32_t v)
  {
    u16(v >> 16);
    u16(v & 0xFFFF);
  }
  void bytes(std::span<const uint8_t> b) { out.insert(out.end(), b.begin(), b.end()); }
  void chunk(std::span<const uint8_t> b)
  {
    if (b.size() > 0xFFFFFFFFu)
      fail(ErrorCode::kBadArgument, "substream too large");
    u32(uint32_t(b.size()));
    bytes(b);
  }

  std::vector<uint8_t> out;
};

class Reader {
public:
  explicit Reader(std::span<const uint8_t> b) : bytes_(b) {}

  bool atEnd() const { return pos_ == bytes_.size(); }
  uint32_t u8()
  {
    if (pos_ >= bytes_.size())
      corrupt();
    return bytes_[pos_++];
  }
  uint32_t u16()
  {
    const uint32_t hi = u8();
    return (hi << 8) | u8();
  }
  uint32_t u32()
  {
    const uint32_t hi = u16();
    return (hi << 16) | u16();
  }
  std::vector<uint8_t> chunk()
  {
    const uint32_t n = u32();
    if (bytes_.size() - pos_ < n)
      corrupt();
    std::vector<uint8_t> out(bytes_.begin() + std::ptrdiff_t(pos_),
                             bytes_.begin() + std::ptrdiff_t(pos_ + n));
    pos_ += n;
    return out;
  }

private:
  std::span<const uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t LayerRecord::payloadBytes() const
{
  if (type == LayerType::kBase)
    return 12 + coords.size() + side.size() + latents.size();
  return 4 + sqh.size();
}

uint32_t ScalableBitstream::numPointsTotal() const
{
  uint64_t total = 0;
  for (auto& b : blocks)
    total += b.nPoints;
  if (total > 0xFFFFFFFFu)
    fail(ErrorCode::kBadArgument, "too many points");
  return uint32_t(total);
}

std::vector<int> ScalableBitstream::ladder() const
{
  std::vector<int> out;
  for (auto& l : layers)
    out.push_back(l.quality);
  return out;
}

std::size_t ScalableBitstream::headerBytes() const
{
  return 4 + 6 + 4 + 2 + blocks.size() * 10 + std::max(declaredLayers, layers.size()) * 2;
}

std::size_t ScalableBitstream::layerBytes(std::size_t t) const
{
  return layers.at(t).payloadBytes() + (t == 0 ? headerBytes() : 0);
}

std::size_t layerBoundary(const ScalableBitstream& stream, std::size_t t)
{
  std::size_t end = 0;
  for (std::size_t i = 0; i <= t; ++i)
    end += stream.layerBytes(i);
  return end;
}

std::vector<uint8_t> serialize(const ScalableBitstream& s)
{
  if (s.layers.empty() || s.layers.size() > 255 || s.blocks.size() > 0xFFFF)
    fail(ErrorCode::kBadArgument, "stream must hold 1..255 layers and at most 65535 blocks");
  Writer w;
  w.bytes({reinterpret_cast<const uint8_t*>(kMagic), 4});
  w.u8(kContainerVersion);
  w.u8(s.numQualities);
  w.u8(uint32_t(s.layers.size()));
  w.u8(s.depth);
  w.u8(s.blockSizeLog2);
  w.u8(s.flags);
  w.u32(s.numPointsTotal());
  w.u16(uint32_t(s.blocks.size()));
  for (auto& b : s.blocks) {
    if (b.origin.x < 0 || b.origin.y < 0 || b.origin.z < 0 || b.origin.x > 0xFFFF ||
        b.origin.y > 0xFFFF || b.origin.z > 0xFFFF)
      fail(ErrorCode::kBadArgument, "block origin out of range");
    w.u16(uint32_t(b.origin.x));
    w.u16(uint32_t(b.origin.y));
    w.u16(uint32_t(b.origin.z));
    w.u32(b.nPoints);
  }
  for (auto& l : s.layers) {
    w.u8(l.quality);
    w.u8(uint8_t(l.type));
  }
  for (auto& l : s.layers) {
    if (l.type == LayerType::kBase) {
      w.chunk(l.coords);
      w.chunk(l.side);
      w.chunk(l.latents);
    } else {
      w.chunk(l.sqh);
    }
  }
  return std::move(w.out);
}

ScalableBitstream parseBitstream(std::span<const uint8_t> bytes)
{
  Reader r(bytes);
  for (char c : kMagic)
    if (r.u8() != uint8_t(c))
      corrupt();
  if (r.u8() != kContainerVersion)
    corrupt();
  ScalableBitstream s;
  s.numQualities = uint8_t(r.u8());
  const uint32_t k = r.u8();
  s.depth = uint8_t(r.u8());
  s.blockSizeLog2 = uint8_t(r.u8());
  s.flags = uint8_t(r.u8());
  if (!(s.flags & kFlagUnitSampling) || k == 0 || s.depth < 1 || s.depth > 16 ||
      s.blockSizeLog2 > s.depth)
    corrupt();
  const uint32_t total = r.u32();
  const uint32_t numBlocks = r.u16();
  if (numBlocks == 0)
    corrupt();
  const int32_t extent = 1 << s.depth;
  for (uint32_t b = 0; b < numBlocks; ++b) {
    BlockHeader h;
    h.origin.x = int32_t(r.u16());
    h.origin.y = int32_t(r.u16());
    h.origin.z = int32_t(r.u16());
    h.nPoints = r.u32();
    if (h.origin.x >= extent || h.origin.y >= extent || h.origin.z >= extent || h.nPoints == 0)
      corrupt();
    s.blocks.push_back(h);
  }
  if (s.numPointsTotal() != total)
    corrupt();
  std::vector<LayerRecord> table(k);
  for (auto& l : table) {
    l.quality = uint8_t(r.u8());
    const uint32_t type = r.u8();
    if (type > 1)
      corrupt();
    l.type = LayerType(type);
  }
  if (table[0].type != LayerType::kBase)
    corrupt();
  for (uint32_t i = 1; i < k; ++i)
    if (table[i].type != LayerType::kEnhancement)
      corrupt();
  s.declaredLayers = k;
  for (auto& l : table) {
    if (r.atEnd() && !s.layers.empty())
      break;  // prefix ending on a layer boundary
    if (l.type == LayerType::kBase) {
      l.coords = r.chunk();
      l.side = r.chunk();
      l.latents = r.chunk();
    } else {
      l.sqh = r.chunk();
    }
    s.layers.push_back(std::move(l));
  }
  if (!r.atEnd())
    corrupt();
  return s;
}

}  // namespace sqh
