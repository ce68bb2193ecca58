#include "sqh/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sqh/error.hpp"

namespace sqh::entropy {

namespace {

constexpr uint32_t kTop = 1u << 24;

[[noreturn]] void corrupt()
{
  fail(ErrorCode::kCorruptStream, "corrupt stream");
}

uint32_t zigzag(int32_t v)
{
  return (uint32_t(v) << 1) ^ uint32_t(v >> 31);
}

int32_t unzigzag(uint32_t u)
{
  return int32_t(u >> 1) ^ -int32_t(u & 1);
}

}  // namespace

//============================================================================

void QuantizedCdf::validate() const
{
  if (numSymbols() < 1 || numSymbols() > kMaxAlphabet)
    fail(ErrorCode::kNumeric, "cdf alphabet size out of range");
  if (cdf.size() != std::size_t(numSymbols()) + 2)
    fail(ErrorCode::kNumeric, "cdf table has wrong length");
  if (cdf.front() != 0 || cdf.back() != kCdfTotal)
    fail(ErrorCode::kNumeric, "cdf endpoints invalid");
  for (std::size_t i = 1; i < cdf.size(); ++i)
    if (cdf[i] <= cdf[i - 1])
      fail(ErrorCode::kNumeric, "cdf slot with zero frequency");
}

QuantizedCdf QuantizedCdf::fromProbabilities(int32_t symbolMin, int32_t symbolMax,
                                             std::span<const double> probs)
{
  const int n = symbolMax - symbolMin + 1;
  if (n < 1 || n > kMaxAlphabet || probs.size() != std::size_t(n))
    fail(ErrorCode::kNumeric, "bad probability table");

  const int slots = n + 1;
  const double spread = double(kCdfTotal - uint32_t(slots));
  std::vector<uint32_t> freq(slots);
  double inRange = 0.0;
  int best = 0;
  for (int i = 0; i < n; ++i) {
    double p = std::isfinite(probs[i]) ? std::clamp(probs[i], 0.0, 1.0) : 0.0;
    inRange += p;
    freq[i] = 1 + uint32_t(std::floor(p * spread));
    if (freq[i] > freq[best])
      best = i;
  }
  double escape = std::clamp(1.0 - inRange, 0.0, 1.0);
  freq[n] = 1 + uint32_t(std::floor(escape * spread));

  uint64_t sum = 0;
  for (auto f : freq)
    sum += f;
  if (sum > kCdfTotal) {
    // Only reachable when probs sum above one; rescale the largest slot down.
    uint64_t excess = sum - kCdfTotal;
    freq[best] -= uint32_t(std::min<uint64_t>(excess, freq[best] - 1));
    sum = 0;
    for (auto f : freq)
      sum += f;
    if (sum != kCdfTotal)
      fail(ErrorCode::kNumeric, "probability table does not normalise");
  } else {
    freq[best] += uint32_t(kCdfTotal - sum);
  }

  QuantizedCdf q;
  q.symbolMin = symbolMin;
  q.symbolMax = symbolMax;
  q.cdf.resize(slots + 1);
  q.cdf[0] = 0;
  for (int i = 0; i < slots; ++i)
    q.cdf[i + 1] = q.cdf[i] + freq[i];
  return q;
}

QuantizedCdf QuantizedCdf::uniform(int32_t symbolMin, int32_t symbolMax)
{
  const int n = symbolMax - symbolMin + 1;
  std::vector<double> p(std::max(n, 0), 1.0 / double(std::max(n, 1)));
  return fromProbabilities(symbolMin, symbolMax, p);
}

//============================================================================

void RangeEncoder::encode(uint32_t cumLow, uint32_t freq, uint32_t total)
{
  const uint32_t r = range_ / total;
  low_ += uint64_t(r) * cumLow;
  range_ = r * freq;
  while (range_ < kTop) {
    range_ <<= 8;
    shiftLow();
  }
}

void RangeEncoder::shiftLow()
{
  if (uint32_t(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    uint8_t carry = uint8_t(low_ >> 32);
    uint8_t temp = cache_;
    do {
      // The first byte of the stream is always zero and is not emitted.
      if (leadingByte_)
        leadingByte_ = false;
      else
        out_.push_back(uint8_t(temp + carry));
      temp = 0xFF;
    } while (--cacheSize_ != 0);
    cache_ = uint8_t(uint32_t(low_) >> 24);
  }
  ++cacheSize_;
  low_ = uint64_t(uint32_t(low_) << 8);
}

std::vector<uint8_t> RangeEncoder::finish()
{
  for (int i = 0; i < 5; ++i)
    shiftLow();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : bytes_(bytes)
{
  for (int i = 0; i < 4; ++i)
    code_ = (code_ << 8) | nextByte();
}

uint8_t RangeDecoder::nextByte()
{
  if (pos_ >= bytes_.size())
    corrupt();
  return bytes_[pos_++];
}

uint32_t RangeDecoder::target(uint32_t total)
{
  scale_ = range_ / total;
  uint32_t v = code_ / scale_;
  if (v >= total)
    corrupt();
  return v;
}

void RangeDecoder::consume(uint32_t cumLow, uint32_t freq, uint32_t /*total*/)
{
  code_ -= scale_ * cumLow;
  range_ = scale_ * freq;
  while (range_ < kTop) {
    code_ = (code_ << 8) | nextByte();
    range_ <<= 8;
  }
}

//============================================================================

AdaptiveByteModel::AdaptiveByteModel() : total_(256)
{
  std::fill(std::begin(freq_), std::end(freq_), 1u);
}

void AdaptiveByteModel::update(uint8_t byte)
{
  freq_[byte] += kIncrement;
  total_ += kIncrement;
  if (total_ > kLimit) {
    total_ = 0;
    for (auto& f : freq_) {
      f = (f + 1) / 2;
      total_ += f;
    }
  }
}

void AdaptiveByteModel::encode(RangeEncoder& enc, uint8_t byte)
{
  uint32_t cum = 0;
  for (int i = 0; i < byte; ++i)
    cum += freq_[i];
  enc.encode(cum, freq_[byte], total_);
  update(byte);
}

uint8_t AdaptiveByteModel::decode(RangeDecoder& dec)
{
  const uint32_t t = dec.target(total_);
  uint32_t cum = 0;
  int s = 0;
  while (cum + freq_[s] <= t)
    cum += freq_[s++];
  dec.consume(cum, freq_[s], total_);
  update(uint8_t(s));
  return uint8_t(s);
}

//============================================================================

void SymbolEncoder::encode(int32_t symbol, const QuantizedCdf& cdf)
{
  int slot = cdf.escapeSlot();
  if (cdf.inRange(symbol))
    slot = symbol - cdf.symbolMin;
  else
    escapes_.push_back(symbol);
  enc_.encode(cdf.cdf[slot], cdf.frequency(slot), kCdfTotal);
}

std::vector<uint8_t> SymbolEncoder::finish()
{
  std::vector<uint8_t> out = enc_.finish();
  for (int32_t v : escapes_) {
    uint32_t u = zigzag(v);
    do {
      uint8_t b = u & 0x7F;
      u >>= 7;
      out.push_back(u ? uint8_t(b | 0x80) : b);
    } while (u);
  }
  return out;
}

std::optional<int32_t> SymbolDecoder::decode(const QuantizedCdf& cdf)
{
  const uint32_t t = dec_.target(kCdfTotal);
  // upper_bound over the table gives the slot containing t.
  auto it = std::upper_bound(cdf.cdf.begin(), cdf.cdf.end(), t);
  int slot = int(it - cdf.cdf.begin()) - 1;
  dec_.consume(cdf.cdf[slot], cdf.frequency(slot), kCdfTotal);
  if (slot == cdf.escapeSlot()) {
    ++numEscapes_;
    return std::nullopt;
  }
  return cdf.symbolMin + slot;
}

std::vector<int32_t> SymbolDecoder::finish()
{
  std::size_t pos = dec_.position();
  std::vector<int32_t> values;
  values.reserve(numEscapes_);
  for (std::size_t i = 0; i < numEscapes_; ++i) {
    uint32_t u = 0;
    int shift = 0;
    while (true) {
      if (pos >= bytes_.size() || shift > 28)
        corrupt();
      uint8_t b = bytes_[pos++];
      u |= uint32_t(b & 0x7F) << shift;
      shift += 7;
      if (!(b & 0x80))
        break;
    }
    values.push_back(unzigzag(u));
  }
  if (pos != bytes_.size())
    corrupt();
  return values;
}

std::vector<uint8_t> rangeEncode(std::span<const int32_t> symbols,
                                 std::span<const QuantizedCdf> cdfs)
{
  if (symbols.size() != cdfs.size())
    fail(ErrorCode::kBadArgument, "one cdf per symbol required");
  SymbolEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i)
    enc.encode(symbols[i], cdfs[i]);
  return enc.finish();
}

std::vector<int32_t> rangeDecode(std::span<const uint8_t> stream,
                                 std::span<const QuantizedCdf> cdfs)
{
  SymbolDecoder dec(stream);
  std::vector<int32_t> out(cdfs.size());
  std::vector<std::size_t> escaped;
  for (std::size_t i = 0; i < cdfs.size(); ++i) {
    auto s = dec.decode(cdfs[i]);
    if (s)
      out[i] = *s;
    else
      escaped.push_back(i);
  }
  auto values = dec.finish();
  for (std::size_t j = 0; j < escaped.size(); ++j)
    out[escaped[j]] = values[j];
  return out;
}

//============================================================================

double normalCdf(double x)
{
  return 0.5 * std::erfc(-x * M_SQRT1_2);
}

double gaussianMass(double mu, double sigma, double k)
{
  const double d = std::fabs(k - mu);
  return normalCdf((0.5 - d) / sigma) - normalCdf((-0.5 - d) / sigma);
}

QuantizedCdf gaussianCdf(double mu, double sigma, int32_t symbolMin, int32_t symbolMax)
{
  const int n = symbolMax - symbolMin + 1;
  std::vector<double> p(std::max(n, 0));
  for (int i = 0; i < n; ++i)
    p[i] = gaussianMass(mu, sigma, double(symbolMin + i));
  return QuantizedCdf::fromProbabilities(symbolMin, symbolMax, p);
}

double entropyBits(std::span<const double> probabilities)
{
  double bits = 0.0;
  for (double p : probabilities) {
    if (!(p > 0.0))
      fail(ErrorCode::kNumeric, "entropy of a zero-probability symbol");
    bits -= std::log2(p);
  }
  return bits;
}

double quantizedEntropyBits(std::span<const int32_t> symbols,
                            std::span<const QuantizedCdf> cdfs)
{
  double bits = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const auto& c = cdfs[i];
    int slot = c.inRange(symbols[i]) ? symbols[i] - c.symbolMin : c.escapeSlot();
    bits -= std::log2(double(c.frequency(slot)) / double(kCdfTotal));
  }
  return bits;
}

//============================================================================

SymbolRange symbolRangeOf(std::span<const int32_t> values)
{
  constexpr int32_t kLo = -(kMaxAlphabet / 2) + 1;
  constexpr int32_t kHi = kMaxAlphabet / 2 - 2;
  if (values.empty())
    return {0, 0};
  auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  SymbolRange r{std::clamp(*mn - 1, kLo, kHi), std::clamp(*mx + 1, kLo, kHi)};
  return r;
}

std::vector<uint8_t> frameSubstream(SymbolRange range, std::span<const uint8_t> payload)
{
  std::vector<uint8_t> out;
  out.reserve(payload.size() + 4);
  auto put16 = [&](int32_t v) {
    uint16_t u = uint16_t(int16_t(v));
    out.push_back(uint8_t(u >> 8));
    out.push_back(uint8_t(u));
  };
  put16(range.min);
  put16(range.max);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Substream parseSubstream(std::span<const uint8_t> bytes)
{
  if (bytes.size() < 4)
    corrupt();
  auto get16 = [&](std::size_t at) {
    return int32_t(int16_t(uint16_t((bytes[at] << 8) | bytes[at + 1])));
  };
  Substream s;
  s.range = {get16(0), get16(2)};
  if (s.range.max < s.range.min || s.range.max - s.range.min + 1 > kMaxAlphabet)
    corrupt();
  s.payload = bytes.subspan(4);
  return s;
}

}  // namespace sqh::entropy
