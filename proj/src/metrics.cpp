#include "sqh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "sqh/bitstream.hpp"
#include "sqh/error.hpp"
#include "sqh/scalable_codec.hpp"

namespace sqh {

namespace {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;
using BoxPoint = bg::model::point<double, 3, bg::cs::cartesian>;

double squaredDistance(const VoxelCoord& a, const VoxelCoord& b)
{
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

double meanNearestSquaredDistance(const SparsePointCloud& from, const SparsePointCloud& to)
{
  if (from.coords.empty() || to.coords.empty())
    fail(ErrorCode::kBadArgument, "empty cloud");
  double total = 0.0;
  if (to.numPoints() <= kBruteForceLimit) {
    for (const auto& a : from.coords) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& b : to.coords)
        best = std::min(best, squaredDistance(a, b));
      total += best;
    }
  } else {
    std::vector<BoxPoint> pts;
    pts.reserve(to.numPoints());
    for (const auto& b : to.coords)
      pts.emplace_back(b.x, b.y, b.z);
    bgi::rtree<BoxPoint, bgi::rstar<16>> tree(pts.begin(), pts.end());
    std::vector<BoxPoint> hit;
    for (const auto& a : from.coords) {
      hit.clear();
      tree.query(bgi::nearest(BoxPoint(a.x, a.y, a.z), 1), std::back_inserter(hit));
      const VoxelCoord b{int32_t(bg::get<0>(hit[0])), int32_t(bg::get<1>(hit[0])),
                         int32_t(bg::get<2>(hit[0]))};
      total += squaredDistance(a, b);
    }
  }
  return total / double(from.numPoints());
}

double psnrD1(const SparsePointCloud& ref, const SparsePointCloud& test)
{
  if (ref.coords.empty() || test.coords.empty())
    fail(ErrorCode::kBadArgument, "empty cloud");
  if (ref.depth != test.depth)
    fail(ErrorCode::kBadArgument, "psnr: clouds have different depths");
  const double d = std::max(meanNearestSquaredDistance(ref, test),
                            meanNearestSquaredDistance(test, ref));
  if (d <= 0.0)
    return kPsnrCap;
  const double peak = double((1 << ref.depth) - 1);
  return std::min(kPsnrCap, 10.0 * std::log10(3.0 * peak * peak / d));
}

double bitsPerPoint(uint64_t bits, uint64_t numPoints)
{
  if (numPoints == 0)
    fail(ErrorCode::kBadArgument, "bpp: zero points");
  return double(bits) / double(numPoints);
}

std::vector<RdPoint> cumulativeRd(ModelBank& bank, std::span<const uint8_t> bytes,
                                  const SparsePointCloud& ref, int jobs)
{
  auto stream = parseBitstream(bytes);
  std::vector<RdPoint> out;
  double cumulative = 0.0;
  for (std::size_t t = 0; t < stream.layers.size(); ++t) {
    RdPoint p;
    p.layer = int(t) + 1;
    p.quality = stream.layers[t].quality;
    p.bppLayer = bitsPerPoint(8 * stream.layerBytes(t), ref.numPoints());
    cumulative += p.bppLayer;
    p.bppCumulative = cumulative;
    p.psnrD1 = psnrD1(ref, decodeScalable(bank, stream, p.layer, jobs));
    out.push_back(p);
  }
  return out;
}

std::vector<RdPoint> independentRd(ModelBank& bank,
                                   std::span<const std::vector<uint8_t>> streams,
                                   const SparsePointCloud& ref, int jobs)
{
  std::vector<RdPoint> out;
  double cumulative = 0.0;
  for (std::size_t t = 0; t < streams.size(); ++t) {
    auto stream = parseBitstream(streams[t]);
    RdPoint p;
    p.layer = int(t) + 1;
    p.quality = stream.layers.at(0).quality;
    p.bppLayer = bitsPerPoint(8 * streams[t].size(), ref.numPoints());
    cumulative += p.bppLayer;
    p.bppCumulative = cumulative;
    p.psnrD1 = psnrD1(ref, decodeScalable(bank, stream, 1, jobs));
    out.push_back(p);
  }
  return out;
}

std::vector<double> rateOverhead(std::span<const RdPoint> scalable,
                                 std::span<const RdPoint> independent)
{
  if (scalable.size() != independent.size())
    fail(ErrorCode::kBadArgument, "rate overhead: point counts differ");
  std::vector<double> out;
  for (std::size_t i = 0; i < scalable.size(); ++i) {
    if (scalable[i].quality != independent[i].quality)
      fail(ErrorCode::kBadArgument, "rate overhead: quality indices differ");
    if (!(independent[i].bppCumulative > 0.0))
      fail(ErrorCode::kBadArgument, "rate overhead: non-positive reference rate");
    out.push_back(100.0 * (scalable[i].bppCumulative - independent[i].bppCumulative) /
                  independent[i].bppCumulative);
  }
  return out;
}

void writeRdCsv(std::ostream& out, std::span<const RdSeries> series)
{
  out << "content,config,layer,quality_index,bpp_layer,bpp_cumulative,psnr_d1_db\n";
  out << std::setprecision(10);
  for (const auto& s : series) {
    if (s.content.find(',') != std::string::npos || s.config.find(',') != std::string::npos)
      fail(ErrorCode::kBadArgument, "csv names must not contain commas");
    for (const auto& p : s.points)
      out << s.content << ',' << s.config << ',' << p.layer << ',' << p.quality << ','
          << p.bppLayer << ',' << p.bppCumulative << ',' << p.psnrD1 << '\n';
  }
}

std::vector<RdSeries> readRdCsv(std::istream& in)
{
  std::string line;
  if (!std::getline(in, line) ||
      line != "content,config,layer,quality_index,bpp_layer,bpp_cumulative,psnr_d1_db")
    fail(ErrorCode::kBadArgument, "csv: unexpected header");
  std::vector<RdSeries> out;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      f.push_back(cell);
    if (f.size() != 7)
      fail(ErrorCode::kBadArgument, "csv: expected 7 columns");
    RdPoint p;
    try {
      p.layer = std::stoi(f[2]);
      p.quality = std::stoi(f[3]);
      p.bppLayer = std::stod(f[4]);
      p.bppCumulative = std::stod(f[5]);
      p.psnrD1 = std::stod(f[6]);
    } catch (const std::exception&) {
      fail(ErrorCode::kBadArgument, "csv: malformed number");
    }
    if (out.empty() || out.back().content != f[0] || out.back().config != f[1])
      out.push_back({f[0], f[1], {}});
    out.back().points.push_back(p);
  }
  return out;
}

void writeRdSvg(std::ostream& out, std::span<const RdSeries> series)
{
  constexpr double kW = 640, kH = 480, kM = 60;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      x0 = std::min(x0, p.bppCumulative);
      x1 = std::max(x1, p.bppCumulative);
      y0 = std::min(y0, p.psnrD1);
      y1 = std::max(y1, p.psnrD1);
    }
  if (!std::isfinite(x0)) {
    x0 = y0 = 0;
    x1 = y1 = 1;
  }
  if (x1 - x0 < 1e-9)
    x1 = x0 + 1;
  if (y1 - y0 < 1e-9)
    y1 = y0 + 1;
  auto sx = [&](double x) { return kM + (x - x0) / (x1 - x0) * (kW - 2 * kM); };
  auto sy = [&](double y) { return kH - kM - (y - y0) / (y1 - y0) * (kH - 2 * kM); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << kM << "\" y1=\"" << kH - kM << "\" x2=\"" << kW - kM << "\" y2=\""
      << kH - kM << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kM << "\" y1=\"" << kM << "\" x2=\"" << kM << "\" y2=\"" << kH - kM
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 15
      << "\" text-anchor=\"middle\">rate (bpp)</text>\n";
  out << "<text x=\"15\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 15 " << kH / 2
      << ")\" text-anchor=\"middle\">PSNR D1 (dB, capped at 100)</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    out << "<text x=\"" << sx(xv) << "\" y=\"" << kH - kM + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << xv << "</text>\n";
    out << "<text x=\"" << kM - 6 << "\" y=\"" << sy(yv) + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << yv << "</text>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = colors[k % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : s.points)
      out << sx(p.bppCumulative) << ',' << sy(p.psnrD1) << ' ';
    out << "\"/>\n";
    for (const auto& p : s.points)
      out << "<circle cx=\"" << sx(p.bppCumulative) << "\" cy=\"" << sy(p.psnrD1)
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << kW - kM + 4 - 120 << "\" y=\"" << kM + 16 * double(k)
        << "\" fill=\"" << color << "\" font-size=\"12\">" << s.content << " / " << s.config
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace sqh
