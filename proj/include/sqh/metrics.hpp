#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sqh/model_bank.hpp"
#include "sqh/sparse_geom.hpp"

namespace sqh {

constexpr double kPsnrCap = 100.0;
// Above this many points nearest-neighbour queries use a spatial index.
constexpr std::size_t kBruteForceLimit = 500;

// Mean over points of `from` of the squared distance to the nearest point of `to`.
double meanNearestSquaredDistance(const SparsePointCloud& from, const SparsePointCloud& to);

// Point-to-point PSNR: 10 log10(3 p^2 / max(MSE_AB, MSE_BA)), p = 2^depth - 1,
// capped at kPsnrCap.
double psnrD1(const SparsePointCloud& ref, const SparsePointCloud& test);

double bitsPerPoint(uint64_t bits, uint64_t numPoints);

struct RdPoint {
  int layer = 1;          // 1-based position in the ladder
  int quality = 1;
  double bppLayer = 0.0;
  double bppCumulative = 0.0;
  double psnrD1 = 0.0;
};

// One point per layer of a scalable stream: rate R(t) sums the layer bytes up
// to t, distortion comes from decoding layer t.
std::vector<RdPoint> cumulativeRd(ModelBank& bank, std::span<const uint8_t> stream,
                                  const SparsePointCloud& ref, int jobs = 1);

// Points for standalone streams of increasing quality; cumulative rate is the
// running sum of stream sizes.
std::vector<RdPoint> independentRd(ModelBank& bank,
                                   std::span<const std::vector<uint8_t>> streams,
                                   const SparsePointCloud& ref, int jobs = 1);

// 100 * (scalable - independent) / independent on cumulative bpp, per point.
// Negative values mean the scalable stream is smaller.
std::vector<double> rateOverhead(std::span<const RdPoint> scalable,
                                 std::span<const RdPoint> independent);

struct RdSeries {
  std::string content;
  std::string config;
  std::vector<RdPoint> points;
};

// Columns: content, config, layer, quality_index, bpp_layer, bpp_cumulative,
// psnr_d1_db.
void writeRdCsv(std::ostream& out, std::span<const RdSeries> series);
std::vector<RdSeries> readRdCsv(std::istream& in);

// Rate (cumulative bpp) on x, PSNR D1 on y, one polyline per config.
void writeRdSvg(std::ostream& out, std::span<const RdSeries> series);

}  // namespace sqh
