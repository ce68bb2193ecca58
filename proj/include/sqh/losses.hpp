#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sqh/nn.hpp"

namespace sqh::nn {

// Likelihoods below this are clamped when converting to bits.
constexpr double kLikelihoodFloor = 1e-9;

// Total bits of `y` under independent Gaussians integrated over unit bins:
//   sum -log2(Phi((y + 0.5 - mu) / sigma) - Phi((y - 0.5 - mu) / sigma)).
// With noisy `y` this is the training surrogate; with integer `y` it is the
// ideal code length. All three inputs share one shape.
Var gaussianBits(Tape& t, Var y, Var mu, Var sigma);

// Same quantity without a tape.
double gaussianBitsValue(const Matrix& y, const Matrix& mu, const Matrix& sigma);

// Focal loss summed over elements, in nats, computed from logits:
//   -alpha_t (1 - p_t)^gamma log p_t
// where p_t = sigmoid(logit) for occupied targets (alpha_t = alpha) and
// 1 - sigmoid(logit) otherwise (alpha_t = 1 - alpha).
Var focalLoss(Tape& t, Var logits, std::span<const uint8_t> targets, double alpha, double gamma);

// Reference form on probabilities, used for checking.
double focalLossFromProbabilities(std::span<const double> probs,
                                  std::span<const uint8_t> targets, double alpha, double gamma);

}  // namespace sqh::nn
