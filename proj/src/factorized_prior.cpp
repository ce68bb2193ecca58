#include "sqh/factorized_prior.hpp"

#include <cmath>

#include "sqh/error.hpp"
#include "sqh/losses.hpp"

namespace sqh {

namespace {

constexpr int kIn[FactorizedDensity::kStages] = {1, 3, 3, 3};
constexpr int kOut[FactorizedDensity::kStages] = {3, 3, 3, 1};

double softplus(double x)
{
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

double sigmoid(double x)
{
  return 1.0 / (1.0 + std::exp(-x));
}

}  // namespace

struct FactorizedDensity::Trace {
  double in[kStages][kWidth];
  double pre[kStages][kWidth];
};

FactorizedDensity::FactorizedDensity(const std::string& name, int channels, nn::Rng& rng,
                                     double initScale)
  : channels_(channels)
{
  const double scale = std::pow(initScale, 1.0 / double(kStages));
  for (int k = 0; k < kStages; ++k) {
    const std::string s = std::to_string(k);
    matrix_[k] = nn::Parameter(name + ".matrix" + s, channels, std::size_t(kIn[k] * kOut[k]));
    bias_[k] = nn::Parameter(name + ".bias" + s, channels, std::size_t(kOut[k]));
    const double init = std::log(std::expm1(1.0 / scale / double(kOut[k])));
    for (auto& v : matrix_[k].value.data)
      v = init;
    for (auto& v : bias_[k].value.data)
      v = rng.uniform(-0.5, 0.5);
    if (k < kStages - 1)
      gate_[k] = nn::Parameter(name + ".factor" + s, channels, std::size_t(kOut[k]));
  }
}

std::vector<nn::Parameter*> FactorizedDensity::parameters()
{
  std::vector<nn::Parameter*> out;
  for (int k = 0; k < kStages; ++k) {
    out.push_back(&matrix_[k]);
    out.push_back(&bias_[k]);
    if (k < kStages - 1)
      out.push_back(&gate_[k]);
  }
  return out;
}

double FactorizedDensity::forward(int c, double x, Trace* trace) const
{
  double in[kWidth] = {x, 0.0, 0.0};
  for (int k = 0; k < kStages; ++k) {
    double next[kWidth] = {0.0, 0.0, 0.0};
    for (int i = 0; i < kOut[k]; ++i) {
      double pre = bias_[k].value(c, i);
      for (int j = 0; j < kIn[k]; ++j)
        pre += softplus(matrix_[k].value(c, i * kIn[k] + j)) * in[j];
      if (trace) {
        trace->pre[k][i] = pre;
      }
      next[i] = pre;
      if (k < kStages - 1)
        next[i] += std::tanh(gate_[k].value(c, i)) * std::tanh(pre);
    }
    if (trace)
      for (int j = 0; j < kIn[k]; ++j)
        trace->in[k][j] = in[j];
    for (int i = 0; i < kWidth; ++i)
      in[i] = next[i];
  }
  return in[0];
}

double FactorizedDensity::backward(int c, const Trace& trace, double dLogit,
                                   std::vector<Matrix*>& grads) const
{
  // grads layout matches parameters(): matrix, bias, factor per stage.
  double dOut[kWidth] = {dLogit, 0.0, 0.0};
  int slot = 3 * kStages - 1;
  for (int k = kStages - 1; k >= 0; --k) {
    Matrix* gFactor = nullptr;
    if (k < kStages - 1)
      gFactor = grads[--slot];
    Matrix* gBias = grads[--slot];
    Matrix* gMatrix = grads[--slot];

    double dPre[kWidth];
    for (int i = 0; i < kOut[k]; ++i) {
      const double pre = trace.pre[k][i];
      if (k < kStages - 1) {
        const double ta = std::tanh(gate_[k].value(c, i));
        const double tp = std::tanh(pre);
        dPre[i] = dOut[i] * (1.0 + ta * (1.0 - tp * tp));
        (*gFactor)(c, i) += dOut[i] * tp * (1.0 - ta * ta);
      } else {
        dPre[i] = dOut[i];
      }
      (*gBias)(c, i) += dPre[i];
    }
    double dIn[kWidth] = {0.0, 0.0, 0.0};
    for (int i = 0; i < kOut[k]; ++i)
      for (int j = 0; j < kIn[k]; ++j) {
        const double raw = matrix_[k].value(c, i * kIn[k] + j);
        (*gMatrix)(c, i * kIn[k] + j) += dPre[i] * trace.in[k][j] * sigmoid(raw);
        dIn[j] += dPre[i] * softplus(raw);
      }
    for (int j = 0; j < kWidth; ++j)
      dOut[j] = dIn[j];
  }
  return dOut[0];
}

double FactorizedDensity::logitCdf(int c, double x) const
{
  return forward(c, x, nullptr);
}

double FactorizedDensity::cdf(int c, double x) const
{
  return sigmoid(logitCdf(c, x));
}

double FactorizedDensity::likelihood(int c, double v) const
{
  const double lower = logitCdf(c, v - 0.5);
  const double upper = logitCdf(c, v + 0.5);
  // Evaluate in the tail where both sigmoids are far from 1.
  const double s = (lower + upper) > 0.0 ? -1.0 : 1.0;
  return std::fabs(sigmoid(s * upper) - sigmoid(s * lower));
}

double FactorizedDensity::bitsValue(const Matrix& z) const
{
  if (int(z.cols) != channels_)
    fail(ErrorCode::kBadArgument, "factorized prior: channel mismatch");
  double bits = 0.0;
  for (std::size_t r = 0; r < z.rows; ++r)
    for (int c = 0; c < channels_; ++c)
      bits -= std::log2(std::max(likelihood(c, z(r, c)), nn::kLikelihoodFloor));
  return bits;
}

nn::Var FactorizedDensity::bits(nn::Tape& t, nn::Var z)
{
  std::vector<nn::Var> params;
  for (nn::Parameter* p : parameters())
    params.push_back(t.parameter(*p));
  Matrix out(1, 1);
  out.data[0] = bitsValue(t.value(z));
  return t.push(std::move(out), [this, z, params](nn::Tape& t, nn::Var self) {
    const double g = t.grad(self).data[0];
    const Matrix& Z = t.value(z);
    Matrix& gz = t.grad(z);
    std::vector<Matrix*> grads;
    for (nn::Var p : params)
      grads.push_back(&t.grad(p));
    Trace lo, hi;
    for (std::size_t r = 0; r < Z.rows; ++r)
      for (int c = 0; c < channels_; ++c) {
        const double v = Z(r, c);
        const double lower = forward(c, v - 0.5, &lo);
        const double upper = forward(c, v + 0.5, &hi);
        const double s = (lower + upper) > 0.0 ? -1.0 : 1.0;
        const double su = sigmoid(s * upper), sl = sigmoid(s * lower);
        const double lik = s * (su - sl);
        if (!(lik > nn::kLikelihoodFloor))
          continue;
        const double dBits = -g / (lik * M_LN2);
        // d lik / d upper = su (1 - su), d lik / d lower = -sl (1 - sl).
        double dx = backward(c, hi, dBits * su * (1.0 - su), grads);
        dx += backward(c, lo, -dBits * sl * (1.0 - sl), grads);
        gz(r, c) += dx;
      }
  }, "factorizedBits");
}

entropy::QuantizedCdf FactorizedDensity::quantizedCdf(int c, int32_t symbolMin,
                                                      int32_t symbolMax) const
{
  std::vector<double> p(std::size_t(std::max(symbolMax - symbolMin + 1, 0)));
  for (std::size_t i = 0; i < p.size(); ++i)
    p[i] = likelihood(c, double(symbolMin) + double(i));
  return entropy::QuantizedCdf::fromProbabilities(symbolMin, symbolMax, p);
}

}  // namespace sqh
