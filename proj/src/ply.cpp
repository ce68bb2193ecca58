#include "sqh/ply.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sqh/error.hpp"

namespace sqh {

namespace {

enum class ScalarType { kI8, kU8, kI16, kU16, kI32, kU32, kF32, kF64 };

struct Property {
  std::string name;
  ScalarType type;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
  bool hasList = false;
};

[[noreturn]] void invalid(const std::string& why)
{
  fail(ErrorCode::kBadArgument, "invalid PLY: " + why);
}

ScalarType parseType(const std::string& t)
{
  if (t == "char" || t == "int8") return ScalarType::kI8;
  if (t == "uchar" || t == "uint8") return ScalarType::kU8;
  if (t == "short" || t == "int16") return ScalarType::kI16;
  if (t == "ushort" || t == "uint16") return ScalarType::kU16;
  if (t == "int" || t == "int32") return ScalarType::kI32;
  if (t == "uint" || t == "uint32") return ScalarType::kU32;
  if (t == "float" || t == "float32") return ScalarType::kF32;
  if (t == "double" || t == "float64") return ScalarType::kF64;
  invalid("unknown property type '" + t + "'");
}

std::size_t typeSize(ScalarType t)
{
  switch (t) {
  case ScalarType::kI8:
  case ScalarType::kU8: return 1;
  case ScalarType::kI16:
  case ScalarType::kU16: return 2;
  case ScalarType::kI32:
  case ScalarType::kU32:
  case ScalarType::kF32: return 4;
  case ScalarType::kF64: return 8;
  }
  return 0;
}

bool isInteger(ScalarType t)
{
  return t != ScalarType::kF32 && t != ScalarType::kF64;
}

template<typename T>
T loadLE(const char* p)
{
  T v;
  std::memcpy(&v, p, sizeof(T));  // host is little endian
  return v;
}

double readBinary(const char* p, ScalarType t)
{
  switch (t) {
  case ScalarType::kI8: return loadLE<int8_t>(p);
  case ScalarType::kU8: return loadLE<uint8_t>(p);
  case ScalarType::kI16: return loadLE<int16_t>(p);
  case ScalarType::kU16: return loadLE<uint16_t>(p);
  case ScalarType::kI32: return loadLE<int32_t>(p);
  case ScalarType::kU32: return loadLE<uint32_t>(p);
  case ScalarType::kF32: return loadLE<float>(p);
  case ScalarType::kF64: return loadLE<double>(p);
  }
  return 0.0;
}

}  // namespace

PlyVertices readPly(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorCode::kBadArgument, "cannot open " + path);

  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply")
    invalid("missing magic");

  PlyVertices out;
  bool haveFormat = false;
  std::vector<Element> elements;
  while (true) {
    if (!std::getline(in, line))
      invalid("unterminated header");
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end_header")
      break;
    if (key.empty() || key == "comment" || key == "obj_info")
      continue;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii")
        out.format = PlyFormat::kAscii;
      else if (fmt == "binary_little_endian")
        out.format = PlyFormat::kBinaryLittleEndian;
      else
        invalid("unsupported format '" + fmt + "'");
      haveFormat = true;
    } else if (key == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (ls.fail() || count < 0)
        invalid("bad element line");
      e.count = std::size_t(count);
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty())
        invalid("property before element");
      std::string type;
      ls >> type;
      if (type == "list") {
        elements.back().hasList = true;
        continue;
      }
      Property p;
      p.type = parseType(type);
      ls >> p.name;
      if (p.name.empty())
        invalid("property without name");
      elements.back().props.push_back(p);
    } else {
      invalid("unexpected header keyword '" + key + "'");
    }
  }
  if (!haveFormat)
    invalid("missing format line");

  // Skip elements that precede "vertex"; only fixed-size records are supported.
  std::size_t vi = 0;
  for (; vi < elements.size() && elements[vi].name != "vertex"; ++vi) {
    const auto& e = elements[vi];
    if (e.hasList)
      invalid("list element before vertex");
    if (out.format == PlyFormat::kAscii) {
      for (std::size_t r = 0; r < e.count; ++r)
        if (!std::getline(in, line))
          invalid("truncated body");
    } else {
      std::size_t rec = 0;
      for (const auto& p : e.props)
        rec += typeSize(p.type);
      in.ignore(std::streamsize(rec * e.count));
    }
  }
  if (vi == elements.size())
    invalid("no vertex element");
  const Element& vertex = elements[vi];
  if (vertex.hasList)
    invalid("list property in vertex element");

  int ix = -1, iy = -1, iz = -1;
  for (std::size_t i = 0; i < vertex.props.size(); ++i) {
    const auto& n = vertex.props[i].name;
    if (n == "x") ix = int(i);
    if (n == "y") iy = int(i);
    if (n == "z") iz = int(i);
  }
  if (ix < 0 || iy < 0 || iz < 0)
    invalid("vertex lacks x/y/z");
  out.integerTyped = isInteger(vertex.props[ix].type)
    && isInteger(vertex.props[iy].type) && isInteger(vertex.props[iz].type);

  out.points.resize(vertex.count);
  if (out.format == PlyFormat::kAscii) {
    std::vector<double> vals(vertex.props.size());
    for (std::size_t r = 0; r < vertex.count; ++r) {
      if (!std::getline(in, line))
        invalid("truncated body");
      std::istringstream ls(line);
      for (auto& v : vals)
        if (!(ls >> v))
          invalid("bad vertex row");
      out.points[r] = {vals[ix], vals[iy], vals[iz]};
    }
  } else {
    std::vector<std::size_t> offsets;
    std::size_t rec = 0;
    for (const auto& p : vertex.props) {
      offsets.push_back(rec);
      rec += typeSize(p.type);
    }
    std::vector<char> buf(rec);
    for (std::size_t r = 0; r < vertex.count; ++r) {
      if (!in.read(buf.data(), std::streamsize(rec)))
        invalid("truncated body");
      out.points[r] = {readBinary(buf.data() + offsets[ix], vertex.props[ix].type),
                       readBinary(buf.data() + offsets[iy], vertex.props[iy].type),
                       readBinary(buf.data() + offsets[iz], vertex.props[iz].type)};
    }
  }
  return out;
}

SparsePointCloud loadPly(const std::string& path, int depth)
{
  PlyVertices v = readPly(path);
  if (v.points.empty())
    fail(ErrorCode::kBadArgument, "empty cloud");
  if (!v.integerTyped)
    return voxelize(v.points, depth);

  std::vector<VoxelCoord> coords;
  coords.reserve(v.points.size());
  for (const auto& p : v.points)
    coords.push_back({int32_t(p[0]), int32_t(p[1]), int32_t(p[2])});
  return SparsePointCloud::fromCoords(depth, std::move(coords));
}

void savePly(const SparsePointCloud& pc, const std::string& path, PlyFormat format)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    fail(ErrorCode::kBadArgument, "cannot write " + path);
  out << "ply\n"
      << (format == PlyFormat::kAscii ? "format ascii 1.0\n"
                                      : "format binary_little_endian 1.0\n")
      << "element vertex " << pc.coords.size() << "\n"
      << "property int x\nproperty int y\nproperty int z\n"
      << "end_header\n";
  if (format == PlyFormat::kAscii) {
    for (const auto& c : pc.coords)
      out << c.x << ' ' << c.y << ' ' << c.z << '\n';
  } else {
    for (const auto& c : pc.coords) {
      int32_t v[3] = {c.x, c.y, c.z};
      out.write(reinterpret_cast<const char*>(v), sizeof(v));
    }
  }
  if (!out)
    fail(ErrorCode::kBadArgument, "write failed: " + path);
}

}  // namespace sqh
