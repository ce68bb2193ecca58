#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sqh {

struct SuiteResult {
  std::string name;
  long cases = 0;
  long failures = 0;
  double worst = 0.0;  // largest error measure seen, suite specific
  double seconds = 0.0;
  std::string detail;  // first failure, if any

  bool ok() const { return failures == 0 && cases > 0; }
};

// Random symbol streams through the range coder under Gaussian tables,
// factorized-prior tables and the adaptive byte model; decode must return the
// input exactly.
SuiteResult checkEntropyRoundTrips(long cases, uint64_t seed);

// Random coordinate sets through the octree coder.
SuiteResult checkOctreeRoundTrips(long cases, uint64_t seed);

// Central finite differences against reverse mode for every layer type and
// for the rate-distortion and QuLPE losses on 4^3 blocks. `worst` is the
// largest relative error; a case fails above `tolerance`.
SuiteResult checkGradients(double h, double tolerance, uint64_t seed);

// Scalable round trip with a freshly initialised three-quality bank: layer
// decodes match standalone decodes, every layer prefix parses and deeper
// truncations are rejected.
SuiteResult checkScalableRoundTrip(uint64_t seed);

// Small versions of all suites.
std::vector<SuiteResult> runSelfTest(uint64_t seed = 1);

}  // namespace sqh
