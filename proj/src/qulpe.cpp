#include "sqh/qulpe.hpp"

#include "sqh/error.hpp"
#include "sqh/losses.hpp"

namespace sqh {

using nn::ConvDirection;
using nn::SparseConv;
using nn::Tape;
using nn::Var;
namespace ops = nn::ops;

void QulpeConfig::validate() const
{
  if (numQualities < 2)
    fail(ErrorCode::kBadArgument, "qulpe config: at least two qualities are required");
  if (latentChannels < 1 || embedHidden < 1 || embedDim < 1 || widths.size() != 3 ||
      !(sigmaMin > 0.0))
    fail(ErrorCode::kBadArgument, "qulpe config: invalid widths");
  for (int w : widths)
    if (w < 1)
      fail(ErrorCode::kBadArgument, "qulpe config: invalid widths");
}

Matrix oneHot(int i, int q)
{
  if (i < 1 || i > q)
    fail(ErrorCode::kBadArgument, "invalid quality pair");
  Matrix m(1, std::size_t(q));
  m.data[std::size_t(i - 1)] = 1.0;
  return m;
}

QulpeModel::QulpeModel(const QulpeConfig& config, uint64_t seed) : config_(config)
{
  config_.validate();
  nn::Rng rng(seed);
  const std::size_t q = std::size_t(config_.numQualities);
  const std::size_t w0 = std::size_t(config_.widths[0]);
  const std::size_t w1 = std::size_t(config_.widths[1]);
  const std::size_t w2 = std::size_t(config_.widths[2]);
  const std::size_t cy = std::size_t(config_.latentChannels);
  embed_.layers.emplace_back("qulpe.embed.0", q, std::size_t(config_.embedHidden), rng);
  embed_.layers.emplace_back("qulpe.embed.1", std::size_t(config_.embedHidden),
                             std::size_t(config_.embedDim), rng);
  const std::size_t in = std::size_t(config_.inputChannels());
  in0_ = SparseConv("qulpe.in0", in, w0, 3, 1, ConvDirection::kDown, rng);
  down1_ = SparseConv("qulpe.down1", w0, w1, 2, 2, ConvDirection::kDown, rng);
  conv1_ = SparseConv("qulpe.conv1", w1, w1, 3, 1, ConvDirection::kDown, rng);
  down2_ = SparseConv("qulpe.down2", w1, w2, 2, 2, ConvDirection::kDown, rng);
  conv2_ = SparseConv("qulpe.conv2", w2, w2, 3, 1, ConvDirection::kDown, rng);
  up1_ = SparseConv("qulpe.up1", w2, w1, 2, 2, ConvDirection::kUp, rng);
  fuse1_ = SparseConv("qulpe.fuse1", 2 * w1, w1, 3, 1, ConvDirection::kDown, rng);
  up0_ = SparseConv("qulpe.up0", w1, w0, 2, 2, ConvDirection::kUp, rng);
  fuse0_ = SparseConv("qulpe.fuse0", 2 * w0, w0, 3, 1, ConvDirection::kDown, rng);
  head_ = nn::Linear("qulpe.head", w0, 2 * cy, rng);
}

void QulpeModel::checkPair(int base, int target) const
{
  if (base < 1 || target > config_.numQualities || base >= target)
    fail(ErrorCode::kBadArgument, "invalid quality pair");
}

Var QulpeModel::embed(Tape& t, int quality)
{
  return embed_.forward(t, t.constant(oneHot(quality, config_.numQualities)));
}

Var QulpeModel::input(Tape& t, Var yHat, int base, int target)
{
  checkPair(base, target);
  const std::size_t rows = t.value(yHat).rows;
  if (t.value(yHat).cols != std::size_t(config_.latentChannels))
    fail(ErrorCode::kBadArgument, "qulpe: latent channel mismatch");
  Var eb = ops::broadcastRows(t, embed(t, base), rows);
  Var et = ops::broadcastRows(t, embed(t, target), rows);
  return ops::concatCols(t, {yHat, eb, et});
}

std::pair<Var, Var> QulpeModel::predict(Tape& t, Var yHat, std::span<const VoxelCoord> coords,
                                        int base, int target)
{
  Var x = input(t, yHat, base, target);
  std::vector<VoxelCoord> c0(coords.begin(), coords.end());
  auto c1 = parentCoords(c0);
  auto c2 = parentCoords(c1);
  auto sub0 = nn::share(nn::submanifoldMap(c0));
  auto sub1 = nn::share(nn::submanifoldMap(c1));

  Var skip0 = ops::relu(t, in0_.forward(t, x, sub0));
  Var h = ops::relu(t, down1_.forward(t, skip0, nn::share(nn::downsampleMap(c0, c1))));
  Var skip1 = ops::relu(t, conv1_.forward(t, h, sub1));
  h = ops::relu(t, down2_.forward(t, skip1, nn::share(nn::downsampleMap(c1, c2))));
  h = ops::relu(t, conv2_.forward(t, h, nn::share(nn::submanifoldMap(c2))));
  h = ops::relu(t, up1_.forward(t, h, nn::share(nn::upsampleMap(c2, c1))));
  h = ops::relu(t, fuse1_.forward(t, ops::concatCols(t, {h, skip1}), sub1));
  h = ops::relu(t, up0_.forward(t, h, nn::share(nn::upsampleMap(c1, c0))));
  h = ops::relu(t, fuse0_.forward(t, ops::concatCols(t, {h, skip0}), sub0));

  const std::size_t cy = std::size_t(config_.latentChannels);
  Var head = head_.forward(t, h);
  Var mu = ops::sliceCols(t, head, 0, cy);
  Var sigma = ops::addScalar(t, ops::softplus(t, ops::sliceCols(t, head, cy, 2 * cy)),
                             config_.sigmaMin);
  return {mu, sigma};
}

Var QulpeModel::loss(Tape& t, const LatentTensor& yHatBase, const Matrix& yTarget, int base,
                     int target)
{
  if (!yTarget.sameShape(yHatBase.feats))
    fail(ErrorCode::kBadArgument, "qulpe: target latents do not match base latents");
  auto [mu, sigma] = predict(t, t.constant(yHatBase.feats), yHatBase.coords, base, target);
  return nn::gaussianBits(t, t.constant(yTarget), mu, sigma);
}

GaussianParams QulpeModel::predict(const LatentTensor& yHatBase, int base, int target)
{
  Tape t(false);
  auto [mu, sigma] = predict(t, t.constant(yHatBase.feats), yHatBase.coords, base, target);
  return {t.value(mu), t.value(sigma)};
}

std::vector<nn::Parameter*> QulpeModel::parameters()
{
  std::vector<nn::Parameter*> out = embed_.parameters();
  for (auto* l : {&in0_, &down1_, &conv1_, &down2_, &conv2_, &up1_, &fuse1_, &up0_, &fuse0_})
    for (auto* p : l->parameters())
      out.push_back(p);
  for (auto* p : head_.parameters())
    out.push_back(p);
  return out;
}

void QulpeModel::ablateSkips()
{
  // Weight rows are [offset][input channel]; skip channels follow the
  // upsampled ones.
  for (auto* l : {&fuse1_, &fuse0_}) {
    const std::size_t half = l->inChannels / 2;
    Matrix& w = l->weight.value;
    for (int k = 0; k < l->kernelVolume(); ++k)
      for (std::size_t a = half; a < l->inChannels; ++a)
        for (std::size_t b = 0; b < w.cols; ++b)
          w(std::size_t(k) * l->inChannels + a, b) = 0.0;
  }
}

}  // namespace sqh
