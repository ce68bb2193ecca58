#include "sqh/synth.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "sqh/error.hpp"
#include "sqh/nn.hpp"

namespace sqh {

namespace {

constexpr double kTolerance = 0.10;

struct VoxelSet {
  int size;
  std::unordered_set<uint64_t> keys;

  bool add(int x, int y, int z)
  {
    if (x < 0 || y < 0 || z < 0 || x >= size || y >= size || z >= size)
      return false;
    return keys.insert(mortonKey({x, y, z})).second;
  }

  SparsePointCloud cloud(int depth) const
  {
    std::vector<VoxelCoord> coords;
    coords.reserve(keys.size());
    for (uint64_t k : keys)
      coords.push_back(mortonDecode(k));
    return SparsePointCloud::fromCoords(depth, std::move(coords));
  }
};

uint64_t shapeSeed(uint64_t seed, Shape shape)
{
  return seed * 0x9E3779B97F4A7C15ull + uint64_t(shape) + 1;
}

void checkDensity(int depth, std::size_t density)
{
  if (depth < 3 || depth > 16)
    fail(ErrorCode::kBadArgument, "synthetic cloud: depth must be in [3, 16]");
  if (density < 16)
    fail(ErrorCode::kBadArgument, "synthetic cloud: density must be at least 16");
}

void checkCount(std::size_t count, std::size_t density, const char* shape)
{
  const double rel = std::fabs(double(count) - double(density)) / double(density);
  if (rel > kTolerance)
    fail(ErrorCode::kBadArgument,
         std::string("synthetic cloud: density not reachable for ") + shape + " at this depth");
}

// Voxels whose centre lies within 0.5 of the sphere.
void addShell(VoxelSet& set, double cx, double cy, double cz, double r)
{
  const int lo[3] = {int(std::floor(cx - r - 1)), int(std::floor(cy - r - 1)),
                     int(std::floor(cz - r - 1))};
  const int hi[3] = {int(std::ceil(cx + r + 1)), int(std::ceil(cy + r + 1)),
                     int(std::ceil(cz + r + 1))};
  for (int x = lo[0]; x <= hi[0]; ++x)
    for (int y = lo[1]; y <= hi[1]; ++y)
      for (int z = lo[2]; z <= hi[2]; ++z) {
        const double d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz));
        if (std::fabs(d - r) <= 0.5)
          set.add(x, y, z);
      }
}

std::size_t shellCount(int size, double cx, double cy, double cz, double r)
{
  VoxelSet s{size, {}};
  addShell(s, cx, cy, cz, r);
  return s.keys.size();
}

SphereFit fitSphere(int depth, std::size_t density, nn::Rng& rng)
{
  const int size = 1 << depth;
  const double half = size / 2.0 - 0.5;
  const double jitter = std::max(0.0, size / 32.0);
  SphereFit f;
  f.cx = half + rng.uniform(-jitter, jitter);
  f.cy = half + rng.uniform(-jitter, jitter);
  f.cz = half + rng.uniform(-jitter, jitter);
  const double rMax = half - jitter - 1.0;
  double lo = 1.0, hi = rMax;
  if (shellCount(size, f.cx, f.cy, f.cz, hi) < density) {
    f.radius = hi;
    return f;
  }
  for (int it = 0; it < 30; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (shellCount(size, f.cx, f.cy, f.cz, mid) < density)
      lo = mid;
    else
      hi = mid;
  }
  const auto nLo = double(shellCount(size, f.cx, f.cy, f.cz, lo));
  const auto nHi = double(shellCount(size, f.cx, f.cy, f.cz, hi));
  f.radius = std::fabs(nLo - double(density)) <= std::fabs(nHi - double(density)) ? lo : hi;
  return f;
}

void addPlane(VoxelSet& set, std::size_t density, nn::Rng& rng)
{
  const int size = set.size;
  const std::size_t area = std::size_t(size) * std::size_t(size);
  const int thickness = int((density + area - 1) / area);
  if (thickness > size / 4)
    fail(ErrorCode::kBadArgument, "synthetic cloud: density not reachable for plane at this depth");
  const double perLayer = double(density) / thickness;
  const int w = std::min(size, int(std::ceil(std::sqrt(perLayer))));
  const int h = std::clamp(int(std::lround(perLayer / w)), 1, size);
  const int axis = int(rng.index(3));
  const int pos = size / 4 + int(rng.index(std::size_t(size / 2 - thickness + 1)));
  const int u0 = int(rng.index(std::size_t(size - w + 1)));
  const int v0 = int(rng.index(std::size_t(size - h + 1)));
  for (int s = 0; s < thickness; ++s)
    for (int u = 0; u < w; ++u)
      for (int v = 0; v < h; ++v) {
        int c[3];
        c[axis] = pos + s;
        c[(axis + 1) % 3] = u0 + u;
        c[(axis + 2) % 3] = v0 + v;
        set.add(c[0], c[1], c[2]);
      }
}

void addCubeFrame(VoxelSet& set, std::size_t density, nn::Rng& rng)
{
  const int size = set.size;
  // Points with at least two coordinates in an edge band of width 2k:
  // 3 e^2 m + e^3 with e = 2k and m = L - 2k.
  int bestL = 0, bestK = 0;
  double bestErr = 1e300;
  for (int k = 1; 4 * k < size; ++k)
    for (int L = 2 * k + 1; L <= size - 2; ++L) {
      const double e = 2.0 * k, m = L - e;
      const double err = std::fabs(3 * e * e * m + e * e * e - double(density));
      if (err < bestErr) {
        bestErr = err;
        bestL = L;
        bestK = k;
      }
    }
  if (bestL == 0)
    fail(ErrorCode::kBadArgument, "synthetic cloud: density not reachable for cube-frame");
  const int x0 = int(rng.index(std::size_t(size - bestL + 1)));
  const int y0 = int(rng.index(std::size_t(size - bestL + 1)));
  const int z0 = int(rng.index(std::size_t(size - bestL + 1)));
  auto inBand = [&](int v) { return v < bestK || v >= bestL - bestK; };
  for (int x = 0; x < bestL; ++x)
    for (int y = 0; y < bestL; ++y)
      for (int z = 0; z < bestL; ++z)
        if (int(inBand(x)) + int(inBand(y)) + int(inBand(z)) >= 2)
          set.add(x0 + x, y0 + y, z0 + z);
}

// Surface of the region where a sum of three Gaussian bumps exceeds one half:
// voxels inside the region with at least one 6-neighbour outside. The bump
// widths are scaled so that, together with the voxels already in `set`, the
// result holds about `target` voxels.
class Metaballs {
public:
  Metaballs(int size, nn::Rng& rng) : size_(size)
  {
    for (int b = 0; b < kBlobs; ++b) {
      for (int a = 0; a < 3; ++a)
        centre_[b][a] = rng.uniform(size * 0.3, size * 0.7);
      sigma_[b] = rng.uniform(size / 16.0, size / 8.0);
    }
  }

  void add(VoxelSet& set, double scale) const
  {
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      double l = 1e300, h = -1e300;
      for (int b = 0; b < kBlobs; ++b) {
        l = std::min(l, centre_[b][a] - 2.5 * scale * sigma_[b]);
        h = std::max(h, centre_[b][a] + 2.5 * scale * sigma_[b]);
      }
      lo[a] = std::max(0, int(std::floor(l)) - 1);
      hi[a] = std::min(size_ - 1, int(std::ceil(h)) + 1);
    }
    auto inside = [&](int x, int y, int z) {
      double f = 0.0;
      for (int b = 0; b < kBlobs; ++b) {
        const double s = scale * sigma_[b];
        const double dx = x - centre_[b][0], dy = y - centre_[b][1], dz = z - centre_[b][2];
        f += std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * s * s));
      }
      return f >= 0.5;
    };
    for (int x = lo[0]; x <= hi[0]; ++x)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int z = lo[2]; z <= hi[2]; ++z) {
          if (!inside(x, y, z))
            continue;
          if (!inside(x - 1, y, z) || !inside(x + 1, y, z) || !inside(x, y - 1, z) ||
              !inside(x, y + 1, z) || !inside(x, y, z - 1) || !inside(x, y, z + 1))
            set.add(x, y, z);
        }
  }

  void fit(VoxelSet& set, std::size_t target) const
  {
    auto count = [&](double scale) {
      VoxelSet trial = set;
      add(trial, scale);
      return trial.keys.size();
    };
    double lo = 0.05, hi = 2.0;
    for (int it = 0; it < 24; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (count(mid) < target)
        lo = mid;
      else
        hi = mid;
    }
    const double nLo = double(count(lo)), nHi = double(count(hi));
    add(set, std::fabs(nLo - double(target)) <= std::fabs(nHi - double(target)) ? lo : hi);
  }

private:
  static constexpr int kBlobs = 3;
  int size_;
  double centre_[kBlobs][3];
  double sigma_[kBlobs];
};

void addBlobs(VoxelSet& set, std::size_t target, nn::Rng& rng)
{
  Metaballs(set.size, rng).fit(set, target);
}

}  // namespace

Shape parseShape(const std::string& name)
{
  for (Shape s : allShapes())
    if (shapeName(s) == name)
      return s;
  fail(ErrorCode::kBadArgument, "unknown shape: " + name);
}

std::string shapeName(Shape shape)
{
  switch (shape) {
  case Shape::kSphereSurface: return "sphere-surface";
  case Shape::kPlane: return "plane";
  case Shape::kCubeFrame: return "cube-frame";
  case Shape::kGaussianBlobs: return "gaussian-blobs";
  case Shape::kComposite: return "composite";
  }
  return "unknown";
}

std::vector<Shape> allShapes()
{
  return {Shape::kSphereSurface, Shape::kPlane, Shape::kCubeFrame, Shape::kGaussianBlobs,
          Shape::kComposite};
}

SphereFit sphereParameters(int depth, std::size_t density, uint64_t seed)
{
  checkDensity(depth, density);
  nn::Rng rng(shapeSeed(seed, Shape::kSphereSurface));
  return fitSphere(depth, density, rng);
}

SparsePointCloud generateCloud(Shape shape, int depth, std::size_t density, uint64_t seed)
{
  checkDensity(depth, density);
  nn::Rng rng(shapeSeed(seed, shape));
  VoxelSet set{1 << depth, {}};
  switch (shape) {
  case Shape::kSphereSurface: {
    const SphereFit f = fitSphere(depth, density, rng);
    addShell(set, f.cx, f.cy, f.cz, f.radius);
    break;
  }
  case Shape::kPlane:
    addPlane(set, density, rng);
    break;
  case Shape::kCubeFrame:
    addCubeFrame(set, density, rng);
    break;
  case Shape::kGaussianBlobs:
    addBlobs(set, density, rng);
    break;
  case Shape::kComposite: {
    const SphereFit f = fitSphere(depth, density / 2, rng);
    addShell(set, f.cx, f.cy, f.cz, f.radius);
    const std::size_t have = set.keys.size();
    if (have < density)
      addPlane(set, std::max<std::size_t>((density - have) * 3 / 4, 1), rng);
    addBlobs(set, density, rng);
    break;
  }
  }
  checkCount(set.keys.size(), density, shapeName(shape).c_str());
  return set.cloud(depth);
}

std::vector<SparsePointCloud> generateCorpus(int depth, std::size_t density, std::size_t count,
                                             uint64_t firstSeed)
{
  const auto shapes = allShapes();
  std::vector<SparsePointCloud> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(generateCloud(shapes[i % shapes.size()], depth, density, firstSeed + i));
  return out;
}

}  // namespace sqh
