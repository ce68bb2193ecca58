#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sqh/matrix.hpp"

namespace sqh::nn {

//============================================================================

// Trainable tensor. `m` and `v` hold Adam moments.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;
  Matrix v;

  Parameter() = default;
  Parameter(std::string n, std::size_t rows, std::size_t cols)
    : name(std::move(n)), value(rows, cols), grad(rows, cols), m(rows, cols), v(rows, cols)
  {}

  void zeroGrad() { grad.zero(); }
};

// Deterministic generator; outputs are identical across standard libraries
// because only the engine (whose sequence is standardised) is used.
class Rng {
public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return std::size_t(uniform() * double(n)); }

  template<typename T>
  void shuffle(std::vector<T>& v)
  {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[index(i)]);
  }

private:
  std::mt19937_64 engine_;
};

// He-style uniform init: U(-sqrt(6 / fanIn), sqrt(6 / fanIn)); bias rows zero.
void initUniform(Parameter& p, std::size_t fanIn, Rng& rng, double gain = 1.0);

//============================================================================
// Reverse-mode tape. Values are recorded in creation order; backward() walks
// the nodes in reverse and accumulates adjoints. Parameter nodes copy their
// adjoint into Parameter::grad at the end.

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
public:
  // Receives the node's own handle; reads its adjoint via grad(self).
  using Backward = std::function<void(Tape&, Var self)>;

  explicit Tape(bool recordGradients = true) : recording_(recordGradients) {}

  bool recording() const { return recording_; }

  Var constant(Matrix value);
  Var parameter(Parameter& p);
  Var push(Matrix value, Backward backward, const char* op);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  // Adjoint of `v`, allocated as zeros on first access.
  Matrix& grad(Var v);
  bool hasGrad(Var v) const { return !nodes_[v.id].grad.empty(); }

  // Seeds d(root)/d(root) = 1 for a 1x1 root. Throws ErrorCode::kNumeric naming
  // the parameter when a gradient is not finite.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Matrix value;
    Matrix grad;
    Parameter* param = nullptr;
    Backward backward;
    const char* op = "";
  };

  std::vector<Node> nodes_;
  bool recording_;
};

//============================================================================

namespace ops {

Var matmul(Tape& t, Var x, Var w);
Var addBias(Tape& t, Var x, Var bias);
Var add(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var relu(Tape& t, Var a);
Var softplus(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var addScalar(Tape& t, Var a, double s);
Var concatCols(Tape& t, std::initializer_list<Var> parts);
Var sliceCols(Tape& t, Var a, std::size_t begin, std::size_t end);
Var gatherRows(Tape& t, Var a, std::span<const int32_t> rows);
Var broadcastRows(Tape& t, Var a, std::size_t rows);
Var sum(Tape& t, Var a);

}  // namespace ops

//============================================================================

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  Var forward(Tape& t, Var x);
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

// Linear layers with ReLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  Var forward(Tape& t, Var x);
  std::vector<Parameter*> parameters();
};

//============================================================================

class Adam {
public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps)
  {}

  void step(std::span<Parameter* const> params);
  void setLearningRate(double lr) { lr_ = lr; }
  double learningRate() const { return lr_; }
  long steps() const { return t_; }

private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

void zeroGrad(std::span<Parameter* const> params);

//============================================================================
// Checkpoint: "SQHM" | version u8 | count u32 | per parameter: name length u16,
// name bytes, rows u32, cols u32, rows*cols f64 | CRC32 of all preceding bytes.
// Integers and doubles are little endian.

constexpr uint8_t kCheckpointVersion = 1;

std::vector<uint8_t> serializeParameters(std::span<Parameter* const> params);
// Loads values by name; every target must be present with a matching shape.
void deserializeParameters(std::span<const uint8_t> bytes, std::span<Parameter* const> params);

void saveCheckpoint(const std::string& path, std::span<Parameter* const> params);
void loadCheckpoint(const std::string& path, std::span<Parameter* const> params);

std::vector<uint8_t> readFileBytes(const std::string& path);
void writeFileBytes(const std::string& path, std::span<const uint8_t> bytes);

// Central finite-difference check of d(loss)/d(params). `build` must record the
// same deterministic computation every call. Returns the largest per-parameter
// relative error ||analytic - numeric|| / max(||analytic||, ||numeric||).
// With maxEntries > 0 only that many (seeded, random) entries per parameter are
// perturbed.
// While alive, records on this thread the smallest distance to a point where
// the forward pass is not differentiable: |x| at relu inputs and the score gap
// at a top-k cut. Finite differences are only meaningful well inside that margin.
class KinkProbe {
public:
  KinkProbe();
  ~KinkProbe();
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;

  double margin() const { return margin_; }
  static bool active();
  static void observe(double distance);

private:
  double margin_;
  KinkProbe* outer_;
};

double gradientCheck(const std::function<Var(Tape&)>& build,
                     std::span<Parameter* const> params, double h = 1e-4,
                     std::size_t maxEntries = 0, uint64_t seed = 1);

}  // namespace sqh::nn
