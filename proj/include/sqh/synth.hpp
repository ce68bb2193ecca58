#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sqh/sparse_geom.hpp"

namespace sqh {

enum class Shape { kSphereSurface, kPlane, kCubeFrame, kGaussianBlobs, kComposite };

// Accepts "sphere-surface", "plane", "cube-frame", "gaussian-blobs", "composite".
Shape parseShape(const std::string& name);
std::string shapeName(Shape shape);
std::vector<Shape> allShapes();

// Synthetic voxelized cloud with about `density` points (within 10%).
// Identical arguments give identical clouds.
SparsePointCloud generateCloud(Shape shape, int depth, std::size_t density, uint64_t seed);

// Ideal sphere radius used for a sphere-surface cloud, for geometric checks.
struct SphereFit {
  double cx, cy, cz, radius;
};
SphereFit sphereParameters(int depth, std::size_t density, uint64_t seed);

// Seed ranges separating training, validation and test content.
struct SeedSplit {
  uint64_t train = 0;
  uint64_t validation = 100000;
  uint64_t test = 200000;
};

// `count` clouds cycling through all shapes, seeds starting at `firstSeed`.
std::vector<SparsePointCloud> generateCorpus(int depth, std::size_t density, std::size_t count,
                                             uint64_t firstSeed);

}  // namespace sqh
