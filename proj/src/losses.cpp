#include "sqh/losses.hpp"

#include <cmath>

#include "sqh/error.hpp"
#include "sqh/range_coder.hpp"

namespace sqh::nn {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normalPdf(double x)
{
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// Softplus that stays accurate for large |x|.
double softplusScalar(double x)
{
  return x > 30.0 ? x : (x < -30.0 ? std::exp(x) : std::log1p(std::exp(x)));
}

}  // namespace

Var gaussianBits(Tape& t, Var y, Var mu, Var sigma)
{
  const Matrix& Y = t.value(y);
  const Matrix& M = t.value(mu);
  const Matrix& S = t.value(sigma);
  if (!Y.sameShape(M) || !Y.sameShape(S))
    fail(ErrorCode::kBadArgument, "gaussianBits: shape mismatch");
  Matrix out(1, 1);
  out.data[0] = gaussianBitsValue(Y, M, S);
  return t.push(std::move(out), [y, mu, sigma](Tape& t, Var self) {
    const double g = t.grad(self).data[0];
    const Matrix& Y = t.value(y);
    const Matrix& M = t.value(mu);
    const Matrix& S = t.value(sigma);
    Matrix& gy = t.grad(y);
    Matrix& gm = t.grad(mu);
    Matrix& gs = t.grad(sigma);
    for (std::size_t k = 0; k < Y.size(); ++k) {
      const double diff = Y.data[k] - M.data[k];
      const double d = std::fabs(diff);
      const double s = S.data[k];
      const double a = (0.5 - d) / s;
      const double b = (-0.5 - d) / s;
      const double lik = entropy::normalCdf(a) - entropy::normalCdf(b);
      if (!(lik > kLikelihoodFloor))
        continue;
      const double pa = normalPdf(a), pb = normalPdf(b);
      const double dLikDd = (pb - pa) / s;
      const double dLikDs = (b * pb - a * pa) / s;
      const double dBitsDLik = -1.0 / (lik * M_LN2);
      const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      gy.data[k] += g * dBitsDLik * dLikDd * sgn;
      gm.data[k] -= g * dBitsDLik * dLikDd * sgn;
      gs.data[k] += g * dBitsDLik * dLikDs;
    }
  }, "gaussianBits");
}

double gaussianBitsValue(const Matrix& y, const Matrix& mu, const Matrix& sigma)
{
  double bits = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double lik = entropy::gaussianMass(mu.data[k], sigma.data[k], y.data[k]);
    bits -= std::log2(std::max(lik, kLikelihoodFloor));
  }
  return bits;
}

Var focalLoss(Tape& t, Var logits, std::span<const uint8_t> targets, double alpha, double gamma)
{
  const Matrix& L = t.value(logits);
  if (L.size() != targets.size())
    fail(ErrorCode::kBadArgument, "focalLoss: target count mismatch");
  std::vector<uint8_t> tgt(targets.begin(), targets.end());
  Matrix out(1, 1);
  for (std::size_t k = 0; k < L.size(); ++k) {
    const double u = tgt[k] ? L.data[k] : -L.data[k];
    const double logPt = -softplusScalar(-u);
    const double pt = std::exp(logPt);
    const double at = tgt[k] ? alpha : 1.0 - alpha;
    out.data[0] -= at * std::pow(1.0 - pt, gamma) * logPt;
  }
  return t.push(std::move(out), [logits, tgt = std::move(tgt), alpha, gamma](Tape& t, Var self) {
    const double g = t.grad(self).data[0];
    const Matrix& L = t.value(logits);
    Matrix& gl = t.grad(logits);
    for (std::size_t k = 0; k < L.size(); ++k) {
      const double u = tgt[k] ? L.data[k] : -L.data[k];
      const double logPt = -softplusScalar(-u);
      const double pt = std::exp(logPt);
      const double qs = 1.0 / (1.0 + std::exp(u));  // 1 - pt
      const double at = tgt[k] ? alpha : 1.0 - alpha;
      // d/du of -at * q^gamma * log(pt), with dpt/du = pt * q.
      double dDu = -at * std::pow(qs, gamma + 1.0);
      if (gamma != 0.0)
        dDu += at * gamma * std::pow(qs, gamma) * pt * logPt;
      gl.data[k] += g * (tgt[k] ? dDu : -dDu);
    }
  }, "focalLoss");
}

double focalLossFromProbabilities(std::span<const double> probs,
                                  std::span<const uint8_t> targets, double alpha, double gamma)
{
  double loss = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double pt = targets[k] ? probs[k] : 1.0 - probs[k];
    const double at = targets[k] ? alpha : 1.0 - alpha;
    loss -= at * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  return loss;
}

}  // namespace sqh::nn
