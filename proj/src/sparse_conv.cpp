#include "sqh/sparse_conv.hpp"

#include <algorithm>

#include "sqh/error.hpp"

namespace sqh::nn {

KernelMap submanifoldMap(std::span<const VoxelCoord> coords, int kernelSize)
{
  if (kernelSize % 2 != 1)
    fail(ErrorCode::kBadArgument, "stride-1 kernels must be odd");
  const int r = kernelSize / 2;
  KernelMap map;
  map.kernelVolume = kernelSize * kernelSize * kernelSize;
  map.numIn = map.numOut = coords.size();
  map.pairs.resize(map.kernelVolume);
  std::vector<uint64_t> keys(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i)
    keys[i] = mortonKey(coords[i]);
  int k = 0;
  for (int dx = -r; dx <= r; ++dx)
    for (int dy = -r; dy <= r; ++dy)
      for (int dz = -r; dz <= r; ++dz, ++k) {
        auto& pairs = map.pairs[k];
        const VoxelCoord off{dx, dy, dz};
        if (dx == 0 && dy == 0 && dz == 0) {
          for (std::size_t i = 0; i < coords.size(); ++i)
            pairs.emplace_back(int32_t(i), int32_t(i));
          continue;
        }
        for (std::size_t o = 0; o < coords.size(); ++o) {
          const VoxelCoord c = coords[o] + off;
          if (c.x < 0 || c.y < 0 || c.z < 0)
            continue;
          const uint64_t key = mortonKey(c);
          auto it = std::lower_bound(keys.begin(), keys.end(), key);
          if (it != keys.end() && *it == key)
            pairs.emplace_back(int32_t(it - keys.begin()), int32_t(o));
        }
      }
  return map;
}

KernelMap downsampleMap(std::span<const VoxelCoord> inCoords,
                        std::span<const VoxelCoord> outCoords)
{
  KernelMap map;
  map.kernelVolume = 8;
  map.numIn = inCoords.size();
  map.numOut = outCoords.size();
  map.pairs.resize(8);
  for (std::size_t i = 0; i < inCoords.size(); ++i) {
    const VoxelCoord& c = inCoords[i];
    int64_t o = findCoord(outCoords, c.shr(1));
    if (o < 0)
      fail(ErrorCode::kBadArgument, "downsample target lacks a parent coordinate");
    const int k = ((c.x & 1) << 2) | ((c.y & 1) << 1) | (c.z & 1);
    map.pairs[k].emplace_back(int32_t(i), int32_t(o));
  }
  return map;
}

KernelMap upsampleMap(std::span<const VoxelCoord> inCoords,
                      std::span<const VoxelCoord> outCoords)
{
  KernelMap map;
  map.kernelVolume = 8;
  map.numIn = inCoords.size();
  map.numOut = outCoords.size();
  map.pairs.resize(8);
  for (std::size_t o = 0; o < outCoords.size(); ++o) {
    const VoxelCoord& c = outCoords[o];
    int64_t i = findCoord(inCoords, c.shr(1));
    if (i < 0)
      fail(ErrorCode::kBadArgument, "upsample target has no parent in the input");
    const int k = ((c.x & 1) << 2) | ((c.y & 1) << 1) | (c.z & 1);
    map.pairs[k].emplace_back(int32_t(i), int32_t(o));
  }
  return map;
}

//============================================================================

Var sparseConv(Tape& t, Var x, Var weight, KernelMapPtr mapPtr)
{
  const KernelMap& map = *mapPtr;
  const Matrix& X = t.value(x);
  const Matrix& W = t.value(weight);
  if (X.rows != map.numIn)
    fail(ErrorCode::kBadArgument, "sparse conv: input does not match kernel map");
  if (W.rows != std::size_t(map.kernelVolume) * X.cols)
    fail(ErrorCode::kBadArgument, "sparse conv: channel mismatch");
  const std::size_t in = X.cols, out = W.cols;
  Matrix Y(map.numOut, out);
  for (int k = 0; k < map.kernelVolume; ++k) {
    const double* Wk = &W.data[std::size_t(k) * in * out];
    for (auto [i, o] : map.pairs[k]) {
      const double* xr = &X.data[std::size_t(i) * in];
      double* yr = &Y.data[std::size_t(o) * out];
      for (std::size_t a = 0; a < in; ++a) {
        const double xa = xr[a];
        if (xa == 0.0)
          continue;
        const double* wr = Wk + a * out;
        for (std::size_t b = 0; b < out; ++b)
          yr[b] += xa * wr[b];
      }
    }
  }
  return t.push(std::move(Y), [x, weight, mapPtr](Tape& t, Var self) {
    const KernelMap& map = *mapPtr;
    const Matrix& G = t.grad(self);
    const Matrix& X = t.value(x);
    const Matrix& W = t.value(weight);
    Matrix& gx = t.grad(x);
    Matrix& gw = t.grad(weight);
    const std::size_t in = X.cols, out = W.cols;
    for (int k = 0; k < map.kernelVolume; ++k) {
      const double* Wk = &W.data[std::size_t(k) * in * out];
      double* gWk = &gw.data[std::size_t(k) * in * out];
      for (auto [i, o] : map.pairs[k]) {
        const double* g = &G.data[std::size_t(o) * out];
        const double* xr = &X.data[std::size_t(i) * in];
        double* gxr = &gx.data[std::size_t(i) * in];
        for (std::size_t a = 0; a < in; ++a) {
          const double* wr = Wk + a * out;
          double* gwr = gWk + a * out;
          const double xa = xr[a];
          double acc = 0.0;
          for (std::size_t b = 0; b < out; ++b) {
            acc += g[b] * wr[b];
            gwr[b] += xa * g[b];
          }
          gxr[a] += acc;
        }
      }
    }
  }, "sparseConv");
}

SparseConv::SparseConv(const std::string& name, std::size_t in, std::size_t out,
                       int kernelSize_, int stride_, ConvDirection direction_, Rng& rng)
  : kernelSize(kernelSize_), stride(stride_), direction(direction_), inChannels(in),
    outChannels(out),
    weight(name + ".weight", std::size_t(kernelSize_ * kernelSize_ * kernelSize_) * in, out),
    bias(name + ".bias", 1, out)
{
  // Fan-in of a transposed kernel-2 layer is `in` (one tap per output).
  const std::size_t fanIn = direction == ConvDirection::kUp && stride == 2
    ? in
    : std::size_t(kernelVolume()) * in;
  initUniform(weight, fanIn, rng);
}

Var SparseConv::forward(Tape& t, Var x, const KernelMapPtr& map)
{
  if (t.value(x).cols != inChannels)
    fail(ErrorCode::kBadArgument, "channel mismatch in layer " + weight.name);
  if (map->kernelVolume != kernelVolume())
    fail(ErrorCode::kBadArgument, "kernel map does not fit layer " + weight.name);
  Var y = sparseConv(t, x, t.parameter(weight), map);
  return ops::addBias(t, y, t.parameter(bias));
}

LatentTensor sparseConvForward(SparseConv& layer, const LatentTensor& input)
{
  Tape t(false);
  LatentTensor out;
  KernelMapPtr map;
  if (layer.stride == 1) {
    map = share(submanifoldMap(input.coords, layer.kernelSize));
    out.coords = input.coords;
    out.stride = input.stride;
  } else {
    if (layer.kernelSize != 2 || layer.stride != 2 || layer.direction != ConvDirection::kDown)
      fail(ErrorCode::kBadArgument, "unsupported strided configuration");
    out.coords = parentCoords(input.coords);
    out.stride = input.stride * 2;
    map = share(downsampleMap(input.coords, out.coords));
  }
  Var y = layer.forward(t, t.constant(input.feats), map);
  out.feats = t.value(y);
  return out;
}

LatentTensor sparseConvUpForward(SparseConv& layer, const LatentTensor& input,
                                 std::span<const VoxelCoord> targetCoords)
{
  Tape t(false);
  LatentTensor out;
  if (layer.stride == 1) {
    if (!targetCoords.empty()) {
      // Stride-1 restriction keeps only the requested sites.
      LatentTensor full = sparseConvForward(layer, input);
      out.coords.assign(targetCoords.begin(), targetCoords.end());
      out.feats = Matrix(out.coords.size(), full.feats.cols);
      for (std::size_t r = 0; r < out.coords.size(); ++r) {
        int64_t i = findCoord(full.coords, out.coords[r]);
        if (i < 0)
          fail(ErrorCode::kBadArgument, "target coordinate not in input");
        std::copy(full.feats.row(i).begin(), full.feats.row(i).end(), out.feats.row(r).begin());
      }
      out.stride = input.stride;
      return out;
    }
    return sparseConvForward(layer, input);
  }
  out.coords = targetCoords.empty()
    ? childCoords(input.coords)
    : std::vector<VoxelCoord>(targetCoords.begin(), targetCoords.end());
  out.stride = std::max(1, input.stride / 2);
  KernelMapPtr map = share(upsampleMap(input.coords, out.coords));
  Var y = layer.forward(t, t.constant(input.feats), map);
  out.feats = t.value(y);
  return out;
}

}  // namespace sqh::nn
