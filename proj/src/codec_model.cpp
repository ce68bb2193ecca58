#include "sqh/codec_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sqh/error.hpp"
#include "sqh/losses.hpp"

namespace sqh {

using nn::ConvDirection;
using nn::SparseConv;
using nn::Tape;
using nn::Var;
namespace ops = nn::ops;

void CodecConfig::validate() const
{
  if (analysisWidths.empty() || analysisWidths.size() != synthesisWidths.size())
    fail(ErrorCode::kBadArgument, "codec config: analysis and synthesis stage counts differ");
  for (int w : analysisWidths)
    if (w < 1)
      fail(ErrorCode::kBadArgument, "codec config: widths must be positive");
  for (int w : synthesisWidths)
    if (w < 1)
      fail(ErrorCode::kBadArgument, "codec config: widths must be positive");
  if (hyperChannels < 1 || !(sigmaMin > 0.0) || !(pruneKeep > 0.0))
    fail(ErrorCode::kBadArgument, "codec config: invalid hyper channels, sigma_min or prune ratio");
}

double roundHalfAway(double v)
{
  return std::round(v);
}

Matrix roundMatrix(const Matrix& m)
{
  Matrix out = m;
  for (auto& v : out.data)
    v = roundHalfAway(v);
  return out;
}

std::vector<int32_t> topIndices(std::span<const double> scores, std::size_t count)
{
  std::vector<int32_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  count = std::min(count, idx.size());
  auto key = [&](int32_t i) {
    const double s = scores[std::size_t(i)];
    return std::isnan(s) ? -std::numeric_limits<double>::infinity() : s;
  };
  std::partial_sort(idx.begin(), idx.begin() + std::ptrdiff_t(count), idx.end(),
                    [&](int32_t a, int32_t b) {
                      const double ka = key(a), kb = key(b);
                      return ka > kb || (ka == kb && a < b);
                    });
  if (count > 0 && count < idx.size()) {
    const auto next = std::max_element(idx.begin() + std::ptrdiff_t(count), idx.end(),
                                       [&](int32_t a, int32_t b) { return key(a) < key(b); });
    nn::KinkProbe::observe(key(idx[count - 1]) - key(*next));
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

SparsePointCloud binarize(int depth, std::span<const VoxelCoord> candidates,
                          std::span<const double> scores, std::size_t nPoints)
{
  if (candidates.size() != scores.size())
    fail(ErrorCode::kBadArgument, "binarize: probability count mismatch");
  if (nPoints < 1)
    fail(ErrorCode::kBadArgument, "binarize: n_points must be positive");
  SparsePointCloud pc;
  pc.depth = depth;
  for (int32_t i : topIndices(scores, nPoints))
    pc.coords.push_back(candidates[std::size_t(i)]);
  pc.validate();
  return pc;
}

//============================================================================

CodecModel::CodecModel(const CodecConfig& config, uint64_t seed) : config_(config)
{
  config_.validate();
  nn::Rng rng(seed);
  const std::size_t cy = std::size_t(config_.latentChannels());
  const std::size_t ch = std::size_t(config_.hyperChannels);

  std::size_t in = 1;
  for (int s = 0; s < config_.stages(); ++s) {
    const std::size_t w = std::size_t(config_.analysisWidths[std::size_t(s)]);
    const std::string p = "g_a." + std::to_string(s);
    gA_.push_back({SparseConv(p + ".conv", in, w, 3, 1, ConvDirection::kDown, rng),
                   SparseConv(p + ".down", w, w, 2, 2, ConvDirection::kDown, rng)});
    in = w;
  }
  in = cy;
  for (int s = 0; s < kHyperLevels; ++s) {
    const std::string p = "hg_a." + std::to_string(s);
    hgA_.push_back({SparseConv(p + ".conv", in, ch, 3, 1, ConvDirection::kDown, rng),
                    SparseConv(p + ".down", ch, ch, 2, 2, ConvDirection::kDown, rng)});
    in = ch;
  }
  for (int s = 0; s < kHyperLevels; ++s) {
    const std::size_t w = s + 1 == kHyperLevels ? cy : ch;
    const std::string p = "hg_s." + std::to_string(s);
    hgS_.push_back({SparseConv(p + ".up", in, w, 2, 2, ConvDirection::kUp, rng),
                    SparseConv(p + ".conv", w, w, 3, 1, ConvDirection::kDown, rng)});
    in = w;
  }
  hgSHead_ = nn::Linear("hg_s.head", cy, 2 * cy, rng);
  in = cy;
  for (int s = 0; s < config_.stages(); ++s) {
    const std::size_t w = std::size_t(config_.synthesisWidths[std::size_t(s)]);
    const std::string p = "g_s." + std::to_string(s);
    gS_.push_back({SparseConv(p + ".up", in, w, 2, 2, ConvDirection::kUp, rng),
                   SparseConv(p + ".conv", w, w, 3, 1, ConvDirection::kDown, rng),
                   nn::Linear(p + ".occupancy", w, 1, rng)});
    in = w;
  }
  prior_ = FactorizedDensity("prior", config_.hyperChannels, rng);
}

std::vector<nn::Parameter*> CodecModel::parameters()
{
  std::vector<nn::Parameter*> out;
  auto add = [&](std::vector<nn::Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  for (auto& s : gA_) {
    add(s.conv.parameters());
    add(s.resample.parameters());
  }
  for (auto& s : hgA_) {
    add(s.conv.parameters());
    add(s.resample.parameters());
  }
  for (auto& s : hgS_) {
    add(s.up.parameters());
    add(s.conv.parameters());
  }
  add(hgSHead_.parameters());
  for (auto& s : gS_) {
    add(s.up.parameters());
    add(s.conv.parameters());
    add(s.head.parameters());
  }
  add(prior_.parameters());
  return out;
}

void CodecModel::copyParametersFrom(CodecModel& other)
{
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size())
    fail(ErrorCode::kLadderMismatch, "codec models have different architectures");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->name != src[i]->name || !dst[i]->value.sameShape(src[i]->value))
      fail(ErrorCode::kLadderMismatch, "codec models have different architectures");
    dst[i]->value = src[i]->value;
    dst[i]->m.zero();
    dst[i]->v.zero();
  }
}

//============================================================================

Var CodecModel::analysisStages(Tape& t, Var x, std::vector<Stage>& stages,
                               std::vector<std::vector<VoxelCoord>>& pyramid)
{
  Var h = x;
  for (auto& stage : stages) {
    const auto& coords = pyramid.back();
    h = ops::relu(t, stage.conv.forward(t, h, nn::share(nn::submanifoldMap(coords))));
    auto parents = parentCoords(coords);
    h = stage.resample.forward(t, h, nn::share(nn::downsampleMap(coords, parents)));
    pyramid.push_back(std::move(parents));
  }
  return h;
}

Var CodecModel::analyze(Tape& t, std::span<const VoxelCoord> x,
                        std::vector<std::vector<VoxelCoord>>& pyramid)
{
  if (x.empty())
    fail(ErrorCode::kBadArgument, "empty cloud");
  pyramid.clear();
  pyramid.emplace_back(x.begin(), x.end());
  return analysisStages(t, t.constant(Matrix(x.size(), 1, 1.0)), gA_, pyramid);
}

Var CodecModel::hyperAnalyze(Tape& t, Var y, std::span<const VoxelCoord> yCoords)
{
  std::vector<std::vector<VoxelCoord>> pyramid;
  pyramid.emplace_back(yCoords.begin(), yCoords.end());
  return analysisStages(t, y, hgA_, pyramid);
}

std::pair<Var, Var> CodecModel::hyperSynthesize(Tape& t, Var zHat,
                                                std::span<const VoxelCoord> yCoords)
{
  Var h = zHat;
  auto coarse = ancestorCoords(yCoords, kHyperLevels);
  if (t.value(zHat).rows != coarse.size())
    fail(ErrorCode::kBadArgument, "hyper-latents do not match latent coordinates");
  for (int s = 0; s < kHyperLevels; ++s) {
    auto fine = ancestorCoords(yCoords, kHyperLevels - 1 - s);
    auto& stage = hgS_[std::size_t(s)];
    h = ops::relu(t, stage.up.forward(t, h, nn::share(nn::upsampleMap(coarse, fine))));
    h = ops::relu(t, stage.conv.forward(t, h, nn::share(nn::submanifoldMap(fine))));
    coarse = std::move(fine);
  }
  const std::size_t cy = std::size_t(config_.latentChannels());
  Var head = hgSHead_.forward(t, h);
  Var mu = ops::sliceCols(t, head, 0, cy);
  Var sigma = ops::addScalar(t, ops::softplus(t, ops::sliceCols(t, head, cy, 2 * cy)),
                             config_.sigmaMin);
  return {mu, sigma};
}

std::size_t CodecModel::keepCount(std::size_t nPoints, int stride, std::size_t candidates) const
{
  const double k = std::ceil(config_.pruneKeep * double(nPoints) / double(stride));
  return std::clamp<std::size_t>(std::size_t(k), 1, candidates);
}

std::vector<SynthesisStage> CodecModel::synthesize(Tape& t, Var yHat,
                                                   std::span<const VoxelCoord> yCoords,
                                                   std::size_t nPoints,
                                                   std::span<const VoxelCoord> groundTruth)
{
  std::vector<SynthesisStage> out;
  std::vector<VoxelCoord> coords(yCoords.begin(), yCoords.end());
  Var h = yHat;
  int stride = config_.latentStride();
  for (std::size_t s = 0; s < gS_.size(); ++s) {
    auto& stage = gS_[s];
    stride /= 2;
    SynthesisStage result;
    result.stride = stride;
    result.candidates = childCoords(coords);
    h = ops::relu(t, stage.up.forward(t, h, nn::share(nn::upsampleMap(coords, result.candidates))));
    h = ops::relu(t, stage.conv.forward(t, h, nn::share(nn::submanifoldMap(result.candidates))));
    result.logits = stage.head.forward(t, h);

    if (!groundTruth.empty()) {
      auto truth = ancestorCoords(groundTruth, log2Exact(stride));
      result.targets.resize(result.candidates.size());
      for (std::size_t i = 0; i < result.candidates.size(); ++i)
        result.targets[i] = findCoord(truth, result.candidates[i]) >= 0;
    }

    if (s + 1 < gS_.size()) {
      const auto& logits = t.value(result.logits).data;
      auto keep = topIndices(logits, keepCount(nPoints, stride, logits.size()));
      if (!groundTruth.empty()) {
        std::vector<int32_t> merged;
        std::vector<int32_t> truthIdx;
        for (std::size_t i = 0; i < result.targets.size(); ++i)
          if (result.targets[i])
            truthIdx.push_back(int32_t(i));
        std::set_union(keep.begin(), keep.end(), truthIdx.begin(), truthIdx.end(),
                       std::back_inserter(merged));
        keep = std::move(merged);
      }
      coords.clear();
      for (int32_t i : keep)
        coords.push_back(result.candidates[std::size_t(i)]);
      h = ops::gatherRows(t, h, keep);
    }
    out.push_back(std::move(result));
  }
  return out;
}

RdTerms CodecModel::rdLoss(Tape& t, const SparsePointCloud& block, double lambda, nn::Rng* noise)
{
  std::vector<std::vector<VoxelCoord>> pyramid;
  Var y = analyze(t, block.coords, pyramid);
  const auto& yCoords = pyramid.back();
  Var z = hyperAnalyze(t, y, yCoords);

  auto quantize = [&](Var v) {
    if (!noise)
      return t.constant(roundMatrix(t.value(v)));
    Matrix u(t.value(v).rows, t.value(v).cols);
    for (auto& e : u.data)
      e = noise->uniform(-0.5, 0.5);
    return ops::add(t, v, t.constant(std::move(u)));
  };
  Var yTilde = quantize(y);
  Var zTilde = quantize(z);
  auto [mu, sigma] = hyperSynthesize(t, zTilde, yCoords);
  Var rate = ops::add(t, nn::gaussianBits(t, yTilde, mu, sigma), prior_.bits(t, zTilde));

  auto stages = synthesize(t, yTilde, yCoords, block.numPoints(), block.coords);
  Var distortion;
  for (auto& st : stages) {
    Var f = nn::focalLoss(t, st.logits, st.targets, config_.focalAlpha, config_.focalGamma);
    f = ops::scale(t, f, 1.0 / double(st.candidates.size()));
    distortion = distortion.valid() ? ops::add(t, distortion, f) : f;
  }
  const double n = double(block.numPoints());
  RdTerms terms;
  terms.loss = ops::add(t, distortion, ops::scale(t, rate, lambda / n));
  terms.distortion = t.value(distortion).data[0];
  terms.rateBits = t.value(rate).data[0];
  terms.bpp = terms.rateBits / n;
  return terms;
}

//============================================================================

LatentTensor CodecModel::analyzeLatents(const SparsePointCloud& block)
{
  Tape t(false);
  std::vector<std::vector<VoxelCoord>> pyramid;
  Var y = analyze(t, block.coords, pyramid);
  LatentTensor out;
  out.coords = std::move(pyramid.back());
  out.feats = t.value(y);
  out.stride = config_.latentStride();
  return out;
}

Matrix CodecModel::hyperLatents(const LatentTensor& y)
{
  Tape t(false);
  return t.value(hyperAnalyze(t, t.constant(y.feats), y.coords));
}

GaussianParams CodecModel::hyperParams(const Matrix& zHat, std::span<const VoxelCoord> yCoords)
{
  Tape t(false);
  auto [mu, sigma] = hyperSynthesize(t, t.constant(zHat), yCoords);
  return {t.value(mu), t.value(sigma)};
}

CodecModel::Candidates CodecModel::synthesizeCandidates(const LatentTensor& yHat,
                                                        std::size_t nPoints)
{
  if (yHat.feats.cols != std::size_t(config_.latentChannels()) ||
      yHat.feats.rows != yHat.coords.size())
    fail(ErrorCode::kBadArgument, "synthesis input does not match the latent shape");
  synthesisCount_->fetch_add(1);
  Tape t(false);
  auto stages = synthesize(t, t.constant(yHat.feats), yHat.coords, nPoints);
  Candidates c;
  c.coords = std::move(stages.back().candidates);
  c.logits = t.value(stages.back().logits).data;
  c.probs.resize(c.logits.size());
  for (std::size_t i = 0; i < c.logits.size(); ++i)
    c.probs[i] = 1.0 / (1.0 + std::exp(-c.logits[i]));
  return c;
}

SparsePointCloud CodecModel::reconstruct(const LatentTensor& yHat, std::size_t nPoints,
                                         int blockDepth)
{
  auto c = synthesizeCandidates(yHat, nPoints);
  // Logits rank identically to probabilities but do not saturate.
  return binarize(blockDepth, c.coords, c.logits, nPoints);
}

}  // namespace sqh
