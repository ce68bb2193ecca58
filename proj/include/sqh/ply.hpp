#pragma once

#include <array>
#include <string>
#include <vector>

#include "sqh/sparse_geom.hpp"

namespace sqh {

enum class PlyFormat { kAscii, kBinaryLittleEndian };

struct PlyVertices {
  std::vector<std::array<double, 3>> points;
  bool integerTyped = false;  // x, y and z all declared with integer types
  PlyFormat format = PlyFormat::kAscii;
};

// Reads element "vertex" properties x, y, z. Errors report "invalid PLY".
PlyVertices readPly(const std::string& path);

// Integer-typed files are taken as already voxelized at `depth`; float files
// are voxelized by min-max normalisation.
SparsePointCloud loadPly(const std::string& path, int depth);

void savePly(const SparsePointCloud& pc, const std::string& path,
             PlyFormat format = PlyFormat::kAscii);

}  // namespace sqh
