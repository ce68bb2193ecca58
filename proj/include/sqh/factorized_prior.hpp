#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sqh/nn.hpp"
#include "sqh/range_coder.hpp"

namespace sqh {

// Per-channel learned monotone CDF for hyper-latents, built as a chain of
// affine maps with positive (softplus) weights and x + tanh(a) * tanh(x)
// nonlinearities over widths 1 -> 3 -> 3 -> 3 -> 1, then a sigmoid.
// The likelihood of an integer (or noisy) value v is c(v + 0.5) - c(v - 0.5).
class FactorizedDensity {
public:
  static constexpr int kWidth = 3;
  static constexpr int kStages = 4;

  FactorizedDensity() = default;
  FactorizedDensity(const std::string& name, int channels, nn::Rng& rng,
                    double initScale = 10.0);

  int channels() const { return channels_; }

  // Logit of the cumulative distribution of channel c at x.
  double logitCdf(int c, double x) const;
  double cdf(int c, double x) const;
  double likelihood(int c, double v) const;

  // Total bits of z (rows = sites, cols = channels) with gradients for z and
  // the density parameters.
  nn::Var bits(nn::Tape& t, nn::Var z);
  double bitsValue(const Matrix& z) const;

  // Quantized table of channel c over [symbolMin, symbolMax].
  entropy::QuantizedCdf quantizedCdf(int c, int32_t symbolMin, int32_t symbolMax) const;

  std::vector<nn::Parameter*> parameters();

private:
  struct Trace;
  double forward(int c, double x, Trace* trace) const;
  // Accumulates parameter gradients for channel c; returns d(logit)/dx.
  double backward(int c, const Trace& trace, double dLogit,
                  std::vector<Matrix*>& grads) const;

  int channels_ = 0;
  // Per stage: matrix (rows = channels, cols = out*in), bias and gate
  // (rows = channels, cols = out). The last stage has no gate.
  nn::Parameter matrix_[kStages];
  nn::Parameter bias_[kStages];
  nn::Parameter gate_[kStages - 1];
};

}  // namespace sqh
