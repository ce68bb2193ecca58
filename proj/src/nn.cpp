#include "sqh/nn.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include "sqh/error.hpp"

namespace sqh::nn {

void initUniform(Parameter& p, std::size_t fanIn, Rng& rng, double gain)
{
  const double bound = gain * std::sqrt(6.0 / double(std::max<std::size_t>(fanIn, 1)));
  for (auto& v : p.value.data)
    v = rng.uniform(-bound, bound);
}

//============================================================================

Var Tape::constant(Matrix value)
{
  Node n;
  n.value = std::move(value);
  n.op = "const";
  nodes_.push_back(std::move(n));
  return Var{int(nodes_.size()) - 1};
}

Var Tape::parameter(Parameter& p)
{
  Node n;
  n.value = p.value;
  n.param = &p;
  n.op = "param";
  nodes_.push_back(std::move(n));
  return Var{int(nodes_.size()) - 1};
}

Var Tape::push(Matrix value, Backward backward, const char* op)
{
  Node n;
  n.value = std::move(value);
  if (recording_)
    n.backward = std::move(backward);
  n.op = op;
  nodes_.push_back(std::move(n));
  return Var{int(nodes_.size()) - 1};
}

Matrix& Tape::grad(Var v)
{
  Node& n = nodes_[v.id];
  if (n.grad.empty() && !n.value.empty())
    n.grad = Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

void Tape::backward(Var root)
{
  if (!recording_)
    fail(ErrorCode::kNumeric, "backward on a non-recording tape");
  if (value(root).size() != 1)
    fail(ErrorCode::kNumeric, "backward root must be scalar");
  grad(root).data[0] = 1.0;
  for (int i = root.id; i >= 0; --i) {
    // Copy the closure handle: callbacks may touch other nodes' storage.
    if (nodes_[i].grad.empty() || !nodes_[i].backward)
      continue;
    nodes_[i].backward(*this, Var{i});
  }
  for (auto& n : nodes_) {
    if (!n.param || n.grad.empty())
      continue;
    auto& g = n.param->grad;
    if (!g.sameShape(n.grad))
      g = Matrix(n.grad.rows, n.grad.cols);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(n.grad.data[k]))
        fail(ErrorCode::kNumeric, "non-finite gradient in layer " + n.param->name);
      g.data[k] += n.grad.data[k];
    }
  }
}

//============================================================================

namespace ops {

namespace {

void requireSameShape(const Matrix& a, const Matrix& b, const char* op)
{
  if (!a.sameShape(b))
    fail(ErrorCode::kBadArgument, std::string(op) + ": shape mismatch");
}

}  // namespace

Var matmul(Tape& t, Var x, Var w)
{
  const Matrix& X = t.value(x);
  const Matrix& W = t.value(w);
  if (X.cols != W.rows)
    fail(ErrorCode::kBadArgument, "matmul: channel mismatch");
  Matrix out(X.rows, W.cols);
  for (std::size_t r = 0; r < X.rows; ++r) {
    double* o = &out.data[r * out.cols];
    for (std::size_t a = 0; a < X.cols; ++a) {
      const double xa = X(r, a);
      if (xa == 0.0)
        continue;
      const double* wr = &W.data[a * W.cols];
      for (std::size_t b = 0; b < W.cols; ++b)
        o[b] += xa * wr[b];
    }
  }
  return t.push(std::move(out), [x, w](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    const Matrix& X = t.value(x);
    const Matrix& W = t.value(w);
    Matrix& gx = t.grad(x);
    Matrix& gw = t.grad(w);
    for (std::size_t r = 0; r < X.rows; ++r) {
      const double* g = &G.data[r * G.cols];
      for (std::size_t a = 0; a < X.cols; ++a) {
        const double* wr = &W.data[a * W.cols];
        double* gwr = &gw.data[a * W.cols];
        const double xa = X(r, a);
        double acc = 0.0;
        for (std::size_t b = 0; b < W.cols; ++b) {
          acc += g[b] * wr[b];
          gwr[b] += xa * g[b];
        }
        gx(r, a) += acc;
      }
    }
  }, "matmul");
}

Var addBias(Tape& t, Var x, Var bias)
{
  const Matrix& X = t.value(x);
  const Matrix& B = t.value(bias);
  if (B.rows != 1 || B.cols != X.cols)
    fail(ErrorCode::kBadArgument, "addBias: shape mismatch");
  Matrix out = X;
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c)
      out(r, c) += B.data[c];
  return t.push(std::move(out), [x, bias](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    Matrix& gx = t.grad(x);
    Matrix& gb = t.grad(bias);
    for (std::size_t r = 0; r < G.rows; ++r)
      for (std::size_t c = 0; c < G.cols; ++c) {
        gx(r, c) += G(r, c);
        gb.data[c] += G(r, c);
      }
  }, "addBias");
}

Var add(Tape& t, Var a, Var b)
{
  requireSameShape(t.value(a), t.value(b), "add");
  Matrix out = t.value(a);
  const Matrix& B = t.value(b);
  for (std::size_t k = 0; k < out.size(); ++k)
    out.data[k] += B.data[k];
  return t.push(std::move(out), [a, b](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    Matrix& ga = t.grad(a);
    Matrix& gb = t.grad(b);
    for (std::size_t k = 0; k < G.size(); ++k) {
      ga.data[k] += G.data[k];
      gb.data[k] += G.data[k];
    }
  }, "add");
}

Var mul(Tape& t, Var a, Var b)
{
  requireSameShape(t.value(a), t.value(b), "mul");
  Matrix out = t.value(a);
  const Matrix& B = t.value(b);
  for (std::size_t k = 0; k < out.size(); ++k)
    out.data[k] *= B.data[k];
  return t.push(std::move(out), [a, b](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    const Matrix& A = t.value(a);
    const Matrix& B = t.value(b);
    Matrix& ga = t.grad(a);
    Matrix& gb = t.grad(b);
    for (std::size_t k = 0; k < G.size(); ++k) {
      ga.data[k] += G.data[k] * B.data[k];
      gb.data[k] += G.data[k] * A.data[k];
    }
  }, "mul");
}

Var scale(Tape& t, Var a, double s)
{
  Matrix out = t.value(a);
  for (auto& v : out.data)
    v *= s;
  return t.push(std::move(out), [a, s](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t k = 0; k < G.size(); ++k)
      ga.data[k] += s * G.data[k];
  }, "scale");
}

Var addScalar(Tape& t, Var a, double s)
{
  Matrix out = t.value(a);
  for (auto& v : out.data)
    v += s;
  return t.push(std::move(out), [a](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t k = 0; k < G.size(); ++k)
      ga.data[k] += G.data[k];
  }, "addScalar");
}

Var relu(Tape& t, Var a)
{
  Matrix out = t.value(a);
  if (KinkProbe::active())
    for (double v : out.data)
      KinkProbe::observe(std::abs(v));
  for (auto& v : out.data)
    v = v > 0.0 ? v : 0.0;
  return t.push(std::move(out), [a](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    const Matrix& A = t.value(a);
    Matrix& ga = t.grad(a);
    for (std::size_t k = 0; k < G.size(); ++k)
      if (A.data[k] > 0.0)
        ga.data[k] += G.data[k];
  }, "relu");
}

Var softplus(Tape& t, Var a)
{
  Matrix out = t.value(a);
  for (auto& v : out.data)
    v = v > 30.0 ? v : std::log1p(std::exp(v));
  return t.push(std::move(out), [a](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    const Matrix& A = t.value(a);
    Matrix& ga = t.grad(a);
    for (std::size_t k = 0; k < G.size(); ++k)
      ga.data[k] += G.data[k] / (1.0 + std::exp(-A.data[k]));
  }, "softplus");
}

Var sigmoid(Tape& t, Var a)
{
  Matrix out = t.value(a);
  for (auto& v : out.data)
    v = 1.0 / (1.0 + std::exp(-v));
  return t.push(std::move(out), [a](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    const Matrix& S = t.value(self);
    Matrix& ga = t.grad(a);
    for (std::size_t k = 0; k < G.size(); ++k)
      ga.data[k] += G.data[k] * S.data[k] * (1.0 - S.data[k]);
  }, "sigmoid");
}

Var concatCols(Tape& t, std::initializer_list<Var> parts)
{
  std::vector<Var> vars(parts);
  std::size_t rows = t.value(vars.front()).rows, cols = 0;
  for (Var v : vars) {
    if (t.value(v).rows != rows)
      fail(ErrorCode::kBadArgument, "concatCols: row mismatch");
    cols += t.value(v).cols;
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (Var v : vars) {
    const Matrix& P = t.value(v);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(P.row(r).begin(), P.row(r).end(), out.row(r).begin() + off);
    off += P.cols;
  }
  return t.push(std::move(out), [vars](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    std::size_t off = 0;
    for (Var v : vars) {
      Matrix& gv = t.grad(v);
      for (std::size_t r = 0; r < gv.rows; ++r)
        for (std::size_t c = 0; c < gv.cols; ++c)
          gv(r, c) += G(r, off + c);
      off += gv.cols;
    }
  }, "concatCols");
}

Var sliceCols(Tape& t, Var a, std::size_t begin, std::size_t end)
{
  const Matrix& A = t.value(a);
  if (begin > end || end > A.cols)
    fail(ErrorCode::kBadArgument, "sliceCols: bad range");
  Matrix out(A.rows, end - begin);
  for (std::size_t r = 0; r < A.rows; ++r)
    for (std::size_t c = begin; c < end; ++c)
      out(r, c - begin) = A(r, c);
  return t.push(std::move(out), [a, begin](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t r = 0; r < G.rows; ++r)
      for (std::size_t c = 0; c < G.cols; ++c)
        ga(r, begin + c) += G(r, c);
  }, "sliceCols");
}

Var gatherRows(Tape& t, Var a, std::span<const int32_t> rows)
{
  const Matrix& A = t.value(a);
  Matrix out(rows.size(), A.cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || std::size_t(rows[r]) >= A.rows)
      fail(ErrorCode::kBadArgument, "gatherRows: index out of range");
    std::copy(A.row(rows[r]).begin(), A.row(rows[r]).end(), out.row(r).begin());
  }
  std::vector<int32_t> idx(rows.begin(), rows.end());
  return t.push(std::move(out), [a, idx = std::move(idx)](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < G.cols; ++c)
        ga(idx[r], c) += G(r, c);
  }, "gatherRows");
}

Var broadcastRows(Tape& t, Var a, std::size_t rows)
{
  const Matrix& A = t.value(a);
  if (A.rows != 1)
    fail(ErrorCode::kBadArgument, "broadcastRows: expects a single row");
  Matrix out(rows, A.cols);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(A.data.begin(), A.data.end(), out.row(r).begin());
  return t.push(std::move(out), [a](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t r = 0; r < G.rows; ++r)
      for (std::size_t c = 0; c < G.cols; ++c)
        ga.data[c] += G(r, c);
  }, "broadcastRows");
}

Var sum(Tape& t, Var a)
{
  const Matrix& A = t.value(a);
  Matrix out(1, 1);
  for (double v : A.data)
    out.data[0] += v;
  return t.push(std::move(out), [a](Tape& t, Var self) {
    const double g = t.grad(self).data[0];
    Matrix& ga = t.grad(a);
    for (auto& v : ga.data)
      v += g;
  }, "sum");
}

}  // namespace ops

//============================================================================

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
  : weight(name + ".weight", in, out), bias(name + ".bias", 1, out)
{
  initUniform(weight, in, rng);
}

Var Linear::forward(Tape& t, Var x)
{
  return ops::addBias(t, ops::matmul(t, x, t.parameter(weight)), t.parameter(bias));
}

Var Mlp::forward(Tape& t, Var x)
{
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i].forward(t, x);
    if (i + 1 < layers.size())
      x = ops::relu(t, x);
  }
  return x;
}

std::vector<Parameter*> Mlp::parameters()
{
  std::vector<Parameter*> out;
  for (auto& l : layers)
    for (auto* p : l.parameters())
      out.push_back(p);
  return out;
}

//============================================================================

void Adam::step(std::span<Parameter* const> params)
{
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (Parameter* p : params) {
    if (!p->m.sameShape(p->value))
      p->m = Matrix(p->value.rows, p->value.cols);
    if (!p->v.sameShape(p->value))
      p->v = Matrix(p->value.rows, p->value.cols);
    if (!p->grad.sameShape(p->value))
      p->grad = Matrix(p->value.rows, p->value.cols);
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double g = p->grad.data[k];
      if (!std::isfinite(g))
        fail(ErrorCode::kNumeric, "non-finite gradient in layer " + p->name);
      double& m = p->m.data[k];
      double& v = p->v.data[k];
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g * g;
      const double mh = m / c1;
      const double vh = v / c2;
      p->value.data[k] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
}

void zeroGrad(std::span<Parameter* const> params)
{
  for (Parameter* p : params) {
    if (!p->grad.sameShape(p->value))
      p->grad = Matrix(p->value.rows, p->value.cols);
    p->grad.zero();
  }
}

//============================================================================

namespace {

void put32(std::vector<uint8_t>& out, uint32_t v)
{
  for (int i = 0; i < 4; ++i)
    out.push_back(uint8_t(v >> (8 * i)));
}

uint32_t get32(std::span<const uint8_t> b, std::size_t& pos)
{
  if (pos + 4 > b.size())
    fail(ErrorCode::kCorruptStream, "truncated checkpoint");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= uint32_t(b[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

uint32_t crc32Of(std::span<const uint8_t> bytes)
{
  return uint32_t(::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), uInt(bytes.size())));
}

}  // namespace

std::vector<uint8_t> serializeParameters(std::span<Parameter* const> params)
{
  std::vector<uint8_t> out{'S', 'Q', 'H', 'M', kCheckpointVersion};
  put32(out, uint32_t(params.size()));
  for (const Parameter* p : params) {
    const uint16_t len = uint16_t(p->name.size());
    out.push_back(uint8_t(len));
    out.push_back(uint8_t(len >> 8));
    out.insert(out.end(), p->name.begin(), p->name.end());
    put32(out, uint32_t(p->value.rows));
    put32(out, uint32_t(p->value.cols));
    for (double v : p->value.data) {
      uint64_t bits;
      std::memcpy(&bits, &v, 8);
      put32(out, uint32_t(bits));
      put32(out, uint32_t(bits >> 32));
    }
  }
  put32(out, crc32Of(out));
  return out;
}

void deserializeParameters(std::span<const uint8_t> bytes, std::span<Parameter* const> params)
{
  if (bytes.size() < 13 || std::memcmp(bytes.data(), "SQHM", 4) != 0)
    fail(ErrorCode::kCorruptStream, "not a checkpoint");
  if (bytes[4] != kCheckpointVersion)
    fail(ErrorCode::kCorruptStream, "unsupported checkpoint version");
  std::size_t crcPos = bytes.size() - 4;
  if (crc32Of(bytes.first(crcPos)) != get32(bytes, crcPos))
    fail(ErrorCode::kCorruptStream, "checkpoint CRC mismatch");

  std::size_t pos = 5;
  const uint32_t count = get32(bytes, pos);
  struct Entry {
    std::size_t rows, cols, offset;
  };
  std::vector<std::pair<std::string, Entry>> table;
  for (uint32_t i = 0; i < count; ++i) {
    if (pos + 2 > bytes.size())
      fail(ErrorCode::kCorruptStream, "truncated checkpoint");
    const std::size_t len = bytes[pos] | (std::size_t(bytes[pos + 1]) << 8);
    pos += 2;
    if (pos + len > bytes.size())
      fail(ErrorCode::kCorruptStream, "truncated checkpoint");
    std::string name(bytes.begin() + pos, bytes.begin() + pos + len);
    pos += len;
    Entry e;
    e.rows = get32(bytes, pos);
    e.cols = get32(bytes, pos);
    e.offset = pos;
    pos += e.rows * e.cols * 8;
    if (pos > bytes.size() - 4)
      fail(ErrorCode::kCorruptStream, "truncated checkpoint");
    table.emplace_back(std::move(name), e);
  }

  for (Parameter* p : params) {
    auto it = std::find_if(table.begin(), table.end(),
                           [&](const auto& kv) { return kv.first == p->name; });
    if (it == table.end())
      fail(ErrorCode::kLadderMismatch, "checkpoint lacks parameter " + p->name);
    const Entry& e = it->second;
    if (e.rows != p->value.rows || e.cols != p->value.cols)
      fail(ErrorCode::kLadderMismatch, "shape mismatch for parameter " + p->name);
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= uint64_t(bytes[e.offset + 8 * k + b]) << (8 * b);
      std::memcpy(&p->value.data[k], &bits, 8);
    }
  }
}

std::vector<uint8_t> readFileBytes(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorCode::kBadArgument, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void writeFileBytes(const std::string& path, std::span<const uint8_t> bytes)
{
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out)
    fail(ErrorCode::kBadArgument, "cannot write " + path);
}

void saveCheckpoint(const std::string& path, std::span<Parameter* const> params)
{
  writeFileBytes(path, serializeParameters(params));
}

void loadCheckpoint(const std::string& path, std::span<Parameter* const> params)
{
  deserializeParameters(readFileBytes(path), params);
}

//============================================================================

namespace {
thread_local KinkProbe* activeProbe = nullptr;
}

KinkProbe::KinkProbe() : margin_(std::numeric_limits<double>::infinity()), outer_(activeProbe)
{
  activeProbe = this;
}

KinkProbe::~KinkProbe()
{
  activeProbe = outer_;
}

bool KinkProbe::active()
{
  return activeProbe != nullptr;
}

void KinkProbe::observe(double distance)
{
  for (KinkProbe* p = activeProbe; p; p = p->outer_)
    p->margin_ = std::min(p->margin_, distance);
}

double gradientCheck(const std::function<Var(Tape&)>& build,
                     std::span<Parameter* const> params, double h,
                     std::size_t maxEntries, uint64_t seed)
{
  zeroGrad(params);
  {
    Tape tape(true);
    Var loss = build(tape);
    tape.backward(loss);
  }

  auto evalLoss = [&] {
    Tape tape(false);
    return tape.value(build(tape)).data[0];
  };

  Rng rng(seed);
  double worst = 0.0;
  for (Parameter* p : params) {
    std::vector<std::size_t> entries(p->value.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (maxEntries > 0 && entries.size() > maxEntries) {
      rng.shuffle(entries);
      entries.resize(maxEntries);
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k : entries) {
      const double saved = p->value.data[k];
      p->value.data[k] = saved + h;
      const double lp = evalLoss();
      p->value.data[k] = saved - h;
      const double lm = evalLoss();
      p->value.data[k] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double analytic = p->grad.data[k];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double denom = std::sqrt(std::max(a2, n2));
    if (denom > 1e-10)
      worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

}  // namespace sqh::nn
