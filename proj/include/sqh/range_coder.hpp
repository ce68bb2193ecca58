#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace sqh::entropy {

constexpr int kCdfPrecision = 16;
constexpr uint32_t kCdfTotal = 1u << kCdfPrecision;

// Largest symbol alphabet a QuantizedCdf may carry (escape slot excluded).
constexpr int kMaxAlphabet = 1 << 14;

//============================================================================
// 16-bit cumulative frequency table over [symbolMin, symbolMax] plus one
// trailing escape slot. cdf has numSymbols() + 2 entries, cdf.front() == 0 and
// cdf.back() == kCdfTotal; every slot has frequency >= 1.

struct QuantizedCdf {
  int32_t symbolMin = 0;
  int32_t symbolMax = -1;
  std::vector<uint32_t> cdf;

  int numSymbols() const { return symbolMax - symbolMin + 1; }
  int escapeSlot() const { return numSymbols(); }
  uint32_t frequency(int slot) const { return cdf[slot + 1] - cdf[slot]; }
  bool inRange(int32_t s) const { return s >= symbolMin && s <= symbolMax; }

  // Throws if any table invariant is broken.
  void validate() const;

  // `probs` holds one probability per in-range symbol; the escape slot gets
  // the leftover mass. Each slot receives a floor of one count, the rest is
  // distributed proportionally and the rounding remainder goes to the most
  // probable slot.
  static QuantizedCdf fromProbabilities(int32_t symbolMin, int32_t symbolMax,
                                        std::span<const double> probs);

  static QuantizedCdf uniform(int32_t symbolMin, int32_t symbolMax);
};

//============================================================================
// Carry-propagating range coder with a 64-bit low register and 32-bit range.

class RangeEncoder {
public:
  void encode(uint32_t cumLow, uint32_t freq, uint32_t total);
  // Flushes and returns the payload. The encoder is spent afterwards.
  std::vector<uint8_t> finish();

private:
  void shiftLow();

  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cacheSize_ = 1;
  bool leadingByte_ = true;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
public:
  explicit RangeDecoder(std::span<const uint8_t> bytes);

  // Returns a value in [0, total); call consume() with the matching interval.
  uint32_t target(uint32_t total);
  void consume(uint32_t cumLow, uint32_t freq, uint32_t total);

  // Bytes read so far. After the last symbol this equals the encoder payload
  // length exactly.
  std::size_t position() const { return pos_; }

private:
  uint8_t nextByte();

  std::span<const uint8_t> bytes_;
  std::size_t pos_ = 0;
  uint32_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t scale_ = 0;
};

//============================================================================
// Adaptive order-0 model over 256 byte values: counts start at 1, grow by
// kIncrement per coded byte and are halved once the total exceeds 2^15.

class AdaptiveByteModel {
public:
  static constexpr uint32_t kIncrement = 32;
  static constexpr uint32_t kLimit = 1u << 15;

  AdaptiveByteModel();

  void encode(RangeEncoder& enc, uint8_t byte);
  uint8_t decode(RangeDecoder& dec);

  uint32_t total() const { return total_; }
  uint32_t frequency(uint8_t b) const { return freq_[b]; }

private:
  void update(uint8_t byte);

  uint32_t freq_[256];
  uint32_t total_;
};

//============================================================================
// Symbol coder over QuantizedCdf tables. Out-of-range symbols are coded as the
// escape slot and their values are appended after the range-coded payload as
// zig-zag LEB128 varints (the bypass section).

class SymbolEncoder {
public:
  void encode(int32_t symbol, const QuantizedCdf& cdf);
  RangeEncoder& range() { return enc_; }
  std::vector<uint8_t> finish();

private:
  RangeEncoder enc_;
  std::vector<int32_t> escapes_;
};

class SymbolDecoder {
public:
  explicit SymbolDecoder(std::span<const uint8_t> bytes) : bytes_(bytes), dec_(bytes) {}

  // nullopt marks an escaped symbol whose value is resolved by finish().
  std::optional<int32_t> decode(const QuantizedCdf& cdf);
  RangeDecoder& range() { return dec_; }

  // Reads the bypass section; returns escaped values in coding order. Throws
  // if the stream is short or has trailing bytes.
  std::vector<int32_t> finish();

private:
  std::span<const uint8_t> bytes_;
  RangeDecoder dec_;
  std::size_t numEscapes_ = 0;
};

std::vector<uint8_t> rangeEncode(std::span<const int32_t> symbols,
                                 std::span<const QuantizedCdf> cdfs);

std::vector<int32_t> rangeDecode(std::span<const uint8_t> stream,
                                 std::span<const QuantizedCdf> cdfs);

//============================================================================

// Standard normal CDF.
double normalCdf(double x);

// Probability of integer k under a Gaussian(mu, sigma) integrated over
// [k - 0.5, k + 0.5]; evaluated on |k - mu| so that it is exactly symmetric.
double gaussianMass(double mu, double sigma, double k);

QuantizedCdf gaussianCdf(double mu, double sigma, int32_t symbolMin, int32_t symbolMax);

// Sum of -log2(p) over the given probabilities.
double entropyBits(std::span<const double> probabilities);

// Ideal code length of `symbols` under their tables, using the quantized pmf.
double quantizedEntropyBits(std::span<const int32_t> symbols,
                            std::span<const QuantizedCdf> cdfs);

//============================================================================
// Substream framing: [s_min: i16 BE][s_max: i16 BE][payload].

struct SymbolRange {
  int32_t min = 0;
  int32_t max = 0;
};

// [min - 1, max + 1] of the values, clamped to int16.
SymbolRange symbolRangeOf(std::span<const int32_t> values);

std::vector<uint8_t> frameSubstream(SymbolRange range, std::span<const uint8_t> payload);

struct Substream {
  SymbolRange range;
  std::span<const uint8_t> payload;
};

Substream parseSubstream(std::span<const uint8_t> bytes);

}  // namespace sqh::entropy
