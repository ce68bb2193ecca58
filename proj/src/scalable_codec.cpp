#include "sqh/scalable_codec.hpp"

#include <cmath>
#include <optional>

#include "sqh/error.hpp"
#include "sqh/octree.hpp"
#include "sqh/parallel.hpp"
#include "sqh/range_coder.hpp"

namespace sqh {

namespace {

using entropy::QuantizedCdf;

std::vector<int32_t> toSymbols(const Matrix& m)
{
  std::vector<int32_t> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double v = m.data[i];
    if (!(std::fabs(v) < 2147483647.0))
      fail(ErrorCode::kNumeric, "latent value out of integer range");
    out[i] = int32_t(v);
  }
  return out;
}

int latentLevels(const ModelBank& bank)
{
  return log2Exact(bank.blockSize) - bank.codec.stages();
}

// Gaussian-coded substream over all blocks: element order is block, row,
// channel.
std::vector<uint8_t> encodeGaussian(std::span<const Matrix> values,
                                    std::span<const GaussianParams> params)
{
  std::vector<int32_t> all;
  for (auto& v : values) {
    auto s = toSymbols(v);
    all.insert(all.end(), s.begin(), s.end());
  }
  const auto range = entropy::symbolRangeOf(all);
  entropy::SymbolEncoder enc;
  std::size_t k = 0;
  for (std::size_t b = 0; b < values.size(); ++b)
    for (std::size_t i = 0; i < values[b].size(); ++i, ++k)
      enc.encode(all[k], entropy::gaussianCdf(params[b].mu.data[i], params[b].sigma.data[i],
                                              range.min, range.max));
  return entropy::frameSubstream(range, enc.finish());
}

// Decodes the elements described by `params` (shapes give the row counts).
std::vector<Matrix> decodeGaussian(std::span<const uint8_t> bytes,
                                   std::span<const GaussianParams> params)
{
  auto sub = entropy::parseSubstream(bytes);
  entropy::SymbolDecoder dec(sub.payload);
  std::vector<Matrix> out;
  std::vector<double*> escaped;
  for (auto& p : params) {
    out.emplace_back(p.mu.rows, p.mu.cols);
  }
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t i = 0; i < params[b].mu.size(); ++i) {
      auto s = dec.decode(entropy::gaussianCdf(params[b].mu.data[i], params[b].sigma.data[i],
                                               sub.range.min, sub.range.max));
      if (s)
        out[b].data[i] = double(*s);
      else
        escaped.push_back(&out[b].data[i]);
    }
  auto escapes = dec.finish();
  for (std::size_t e = 0; e < escaped.size(); ++e)
    *escaped[e] = double(escapes[e]);
  return out;
}

std::vector<QuantizedCdf> priorTables(CodecModel& model, entropy::SymbolRange range)
{
  std::vector<QuantizedCdf> tables;
  for (int c = 0; c < model.prior().channels(); ++c)
    tables.push_back(model.prior().quantizedCdf(c, range.min, range.max));
  return tables;
}

void checkStreamAgainstBank(const ModelBank& bank, const ScalableBitstream& s)
{
  if (s.numQualities != bank.numQualities())
    fail(ErrorCode::kLadderMismatch, "ladder mismatch: stream expects " +
                                         std::to_string(s.numQualities) + " qualities");
  if ((1 << s.blockSizeLog2) != bank.blockSize)
    fail(ErrorCode::kLadderMismatch, "ladder mismatch: block size differs from the model bank");
  std::vector<int> ladder;
  for (auto& l : s.layers)
    ladder.push_back(l.quality);
  validateLadder(bank, ladder);
}

}  // namespace

void validateLadder(const ModelBank& bank, std::span<const int> ladder)
{
  if (ladder.empty())
    fail(ErrorCode::kBadArgument, "empty ladder");
  for (std::size_t t = 0; t < ladder.size(); ++t) {
    if (ladder[t] < 1 || ladder[t] > bank.numQualities())
      fail(ErrorCode::kLadderMismatch,
           "ladder mismatch: quality index " + std::to_string(ladder[t]));
    if (t > 0 && ladder[t] <= ladder[t - 1])
      fail(ErrorCode::kBadArgument, "invalid quality pair");
  }
}

std::vector<Block> blocksFor(const ModelBank& bank, const SparsePointCloud& x)
{
  if (x.coords.empty())
    fail(ErrorCode::kBadArgument, "empty cloud");
  if ((1 << x.depth) < bank.blockSize)
    fail(ErrorCode::kBadArgument, "cloud depth is below the block size of the model bank");
  return partitionBlocks(x, bank.blockSize);
}

BaseLayer encodeBase(ModelBank& bank, std::span<const Block> blocks, int quality, int jobs)
{
  if (blocks.empty())
    fail(ErrorCode::kBadArgument, "empty cloud");
  CodecModel& model = bank.model(quality);
  const std::size_t n = blocks.size();
  BaseLayer out;
  out.record.quality = uint8_t(quality);
  out.record.type = LayerType::kBase;
  out.yHat.resize(n);
  std::vector<Matrix> zHat(n);
  std::vector<GaussianParams> params(n);
  parallelFor(jobs, n, [&](std::size_t b) {
    LatentTensor y = model.analyzeLatents(blocks[b].cloud);
    zHat[b] = roundMatrix(model.hyperLatents(y));
    params[b] = model.hyperParams(zHat[b], y.coords);
    y.feats = roundMatrix(y.feats);
    out.yHat[b] = std::move(y);
  });

  // Coordinates: one adaptive model across blocks.
  {
    entropy::RangeEncoder enc;
    entropy::AdaptiveByteModel byteModel;
    for (auto& y : out.yHat)
      octree::encodeInto(enc, byteModel, y.coords, latentLevels(bank));
    out.record.coords = enc.finish();
  }
  // Side information under the factorized prior.
  {
    std::vector<int32_t> all;
    for (auto& z : zHat) {
      auto s = toSymbols(z);
      all.insert(all.end(), s.begin(), s.end());
    }
    const auto range = entropy::symbolRangeOf(all);
    const auto tables = priorTables(model, range);
    entropy::SymbolEncoder enc;
    std::size_t k = 0;
    for (auto& z : zHat)
      for (std::size_t r = 0; r < z.rows; ++r)
        for (std::size_t c = 0; c < z.cols; ++c)
          enc.encode(all[k++], tables[c]);
    out.record.side = entropy::frameSubstream(range, enc.finish());
  }
  std::vector<Matrix> values;
  for (auto& y : out.yHat)
    values.push_back(y.feats);
  out.record.latents = encodeGaussian(values, params);
  return out;
}

LayerRecord encodeEnhancement(ModelBank& bank, std::span<const Block> blocks,
                              std::span<const LatentTensor> yHatBase, int base, int target,
                              std::vector<LatentTensor>* yHatOut, int jobs)
{
  bank.estimator.checkPair(base, target);
  validateLadder(bank, std::vector<int>{base, target});
  if (yHatBase.size() != blocks.size())
    fail(ErrorCode::kBadArgument, "base latents do not match the block list");
  CodecModel& model = bank.model(target);
  const std::size_t n = blocks.size();
  std::vector<LatentTensor> yHat(n);
  std::vector<GaussianParams> params(n);
  parallelFor(jobs, n, [&](std::size_t b) {
    LatentTensor y = model.analyzeLatents(blocks[b].cloud);
    if (y.coords != yHatBase[b].coords)
      fail(ErrorCode::kNumeric, "latent coordinates differ between qualities");
    y.feats = roundMatrix(y.feats);
    params[b] = bank.estimator.predict(yHatBase[b], base, target);
    yHat[b] = std::move(y);
  });
  LayerRecord rec;
  rec.quality = uint8_t(target);
  rec.type = LayerType::kEnhancement;
  std::vector<Matrix> values;
  for (auto& y : yHat)
    values.push_back(y.feats);
  rec.sqh = encodeGaussian(values, params);
  if (yHatOut)
    *yHatOut = std::move(yHat);
  return rec;
}

std::vector<LatentTensor> decodeBase(ModelBank& bank, const ScalableBitstream& stream)
{
  if (stream.layers.empty() || stream.layers[0].type != LayerType::kBase)
    fail(ErrorCode::kCorruptStream, "corrupt/incomplete stream");
  const LayerRecord& rec = stream.layers[0];
  CodecModel& model = bank.model(rec.quality);
  const std::size_t n = stream.blocks.size();
  std::vector<LatentTensor> yHat(n);
  {
    entropy::RangeDecoder dec(rec.coords);
    entropy::AdaptiveByteModel byteModel;
    for (auto& y : yHat) {
      y.coords = octree::decodeFrom(dec, byteModel, latentLevels(bank));
      y.stride = bank.codec.latentStride();
    }
    if (dec.position() != rec.coords.size())
      fail(ErrorCode::kCorruptStream, "corrupt coordinate stream");
  }
  std::vector<Matrix> zHat(n);
  {
    auto sub = entropy::parseSubstream(rec.side);
    const auto tables = priorTables(model, sub.range);
    entropy::SymbolDecoder dec(sub.payload);
    std::vector<double*> escaped;
    for (std::size_t b = 0; b < n; ++b) {
      zHat[b] = Matrix(ancestorCoords(yHat[b].coords, kHyperLevels).size(),
                       std::size_t(bank.codec.hyperChannels));
      for (std::size_t r = 0; r < zHat[b].rows; ++r)
        for (std::size_t c = 0; c < zHat[b].cols; ++c) {
          auto s = dec.decode(tables[c]);
          if (s)
            zHat[b](r, c) = double(*s);
          else
            escaped.push_back(&zHat[b](r, c));
        }
    }
    auto escapes = dec.finish();
    for (std::size_t e = 0; e < escaped.size(); ++e)
      *escaped[e] = double(escapes[e]);
  }
  std::vector<GaussianParams> params(n);
  for (std::size_t b = 0; b < n; ++b)
    params[b] = model.hyperParams(zHat[b], yHat[b].coords);
  auto values = decodeGaussian(rec.latents, params);
  for (std::size_t b = 0; b < n; ++b)
    yHat[b].feats = std::move(values[b]);
  return yHat;
}

std::vector<LatentTensor> decodeEnhancement(ModelBank& bank, const LayerRecord& record,
                                            std::span<const LatentTensor> yHatBase, int base,
                                            int target)
{
  bank.estimator.checkPair(base, target);
  if (record.type != LayerType::kEnhancement)
    fail(ErrorCode::kCorruptStream, "corrupt/incomplete stream");
  std::vector<GaussianParams> params;
  for (auto& y : yHatBase)
    params.push_back(bank.estimator.predict(y, base, target));
  auto values = decodeGaussian(record.sqh, params);
  std::vector<LatentTensor> out(yHatBase.size());
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].coords = yHatBase[b].coords;
    out[b].stride = yHatBase[b].stride;
    out[b].feats = std::move(values[b]);
  }
  return out;
}

ScalableBitstream encodeScalable(ModelBank& bank, const SparsePointCloud& x,
                                 std::span<const int> ladder, int jobs)
{
  validateLadder(bank, ladder);
  auto blocks = blocksFor(bank, x);
  ScalableBitstream s;
  s.numQualities = uint8_t(bank.numQualities());
  s.depth = uint8_t(x.depth);
  s.blockSizeLog2 = uint8_t(log2Exact(bank.blockSize));
  for (auto& b : blocks)
    s.blocks.push_back({b.origin, uint32_t(b.cloud.numPoints())});
  s.declaredLayers = ladder.size();

  BaseLayer base = encodeBase(bank, blocks, ladder[0], jobs);
  s.layers.push_back(std::move(base.record));
  std::vector<LatentTensor> previous = std::move(base.yHat);
  for (std::size_t t = 1; t < ladder.size(); ++t) {
    std::vector<LatentTensor> next;
    s.layers.push_back(
      encodeEnhancement(bank, blocks, previous, ladder[t - 1], ladder[t], &next, jobs));
    previous = std::move(next);
  }
  return s;
}

std::vector<LatentTensor> decodeLatents(ModelBank& bank, const ScalableBitstream& stream,
                                        int layer)
{
  checkStreamAgainstBank(bank, stream);
  if (layer < 1 || std::size_t(layer) > stream.layers.size())
    fail(ErrorCode::kCorruptStream, "corrupt/incomplete stream: layer " + std::to_string(layer) +
                                        " is not present");
  auto latents = decodeBase(bank, stream);
  for (int t = 1; t < layer; ++t)
    latents = decodeEnhancement(bank, stream.layers[std::size_t(t)], latents,
                                stream.layers[std::size_t(t - 1)].quality,
                                stream.layers[std::size_t(t)].quality);
  return latents;
}

SparsePointCloud decodeScalable(ModelBank& bank, const ScalableBitstream& stream, int layer,
                                int jobs)
{
  auto latents = decodeLatents(bank, stream, layer);
  CodecModel& model = bank.model(stream.layers[std::size_t(layer - 1)].quality);
  const int blockDepth = stream.blockSizeLog2;
  std::vector<Block> blocks(stream.blocks.size());
  parallelFor(jobs, blocks.size(), [&](std::size_t b) {
    blocks[b].origin = stream.blocks[b].origin;
    blocks[b].cloud = model.reconstruct(latents[b], stream.blocks[b].nPoints, blockDepth);
  });
  return reassembleBlocks(blocks, stream.depth);
}

SparsePointCloud decodeScalable(ModelBank& bank, std::span<const uint8_t> bytes, int layer,
                                int jobs)
{
  return decodeScalable(bank, parseBitstream(bytes), layer, jobs);
}

std::vector<std::vector<uint8_t>> encodeIndependent(ModelBank& bank, const SparsePointCloud& x,
                                                    std::span<const int> ladder, int jobs)
{
  validateLadder(bank, ladder);
  std::vector<std::vector<uint8_t>> out;
  for (int q : ladder) {
    const int single[1] = {q};
    out.push_back(serialize(encodeScalable(bank, x, single, jobs)));
  }
  return out;
}

}  // namespace sqh
