#include <gtest/gtest.h>

#include <cmath>

#include "sqh/factorized_prior.hpp"

using namespace sqh;
using namespace sqh::nn;

TEST(FactorizedDensity, MonotoneWithLimits)
{
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    FactorizedDensity d("f", 2, rng);
    for (auto* p : d.parameters())
      for (auto& v : p->value.data)
        v = rng.uniform(-2, 2);
    for (int c = 0; c < 2; ++c) {
      double prev = -1.0;
      for (int i = 0; i < 1000; ++i) {
        const double v = d.cdf(c, -200.0 + 0.4 * i);
        EXPECT_GE(v, prev);
        prev = v;
      }
      EXPECT_LT(d.cdf(c, -1e4), 1e-6);
      EXPECT_GT(d.cdf(c, 1e4), 1 - 1e-6);
    }
  }
}

TEST(FactorizedDensity, FreshModelIsBroadAndValid)
{
  Rng rng(2);
  FactorizedDensity d("f", 1, rng);
  auto cdf = d.quantizedCdf(0, -5, 5);
  EXPECT_NO_THROW(cdf.validate());
  // Initial scale 10 spreads mass over many symbols.
  for (int s = 0; s < cdf.numSymbols(); ++s)
    EXPECT_LT(double(cdf.frequency(s)) / entropy::kCdfTotal, 0.2);
}

TEST(FactorizedDensity, GradientCheck)
{
  Rng rng(3);
  FactorizedDensity d("f", 3, rng);
  for (auto* p : d.parameters())
    for (auto& v : p->value.data)
      v += rng.uniform(-0.3, 0.3);
  Parameter z("z", 6, 3);
  for (auto& v : z.value.data)
    v = rng.uniform(-4, 4);
  auto ps = d.parameters();
  ps.push_back(&z);
  auto build = [&](Tape& t) { return d.bits(t, t.parameter(z)); };
  EXPECT_LT(gradientCheck(build, ps), 1e-4);
  Tape t(false);
  EXPECT_NEAR(t.value(d.bits(t, t.constant(z.value))).data[0], d.bitsValue(z.value), 1e-12);
}

TEST(FactorizedDensity, FitsRoundedGaussian)
{
  Rng rng(4);
  // Rounded N(0, 2^2) samples via Box-Muller.
  Matrix samples(2000, 1);
  for (auto& v : samples.data) {
    const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
    v = std::round(2.0 * std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * M_PI * u2));
  }
  double entropy = 0.0;
  for (int k = -30; k <= 30; ++k) {
    const double p = entropy::gaussianMass(0.0, 2.0, k);
    if (p > 0)
      entropy -= p * std::log2(p);
  }
  FactorizedDensity d("f", 1, rng);
  auto ps = d.parameters();
  Adam adam(0.02);
  for (int step = 0; step < 600; ++step) {
    zeroGrad(ps);
    Tape t;
    Var bits = d.bits(t, t.constant(samples));
    t.backward(ops::scale(t, bits, 1.0 / double(samples.rows)));
    adam.step(ps);
  }
  // Cross-entropy of the true pmf under the fitted model.
  double cross = 0.0;
  for (int k = -30; k <= 30; ++k)
    cross -= entropy::gaussianMass(0.0, 2.0, k) * std::log2(std::max(d.likelihood(0, k), 1e-300));
  EXPECT_LT(cross, entropy + 0.1);
}
