#include "sqh/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>

#include "sqh/error.hpp"
#include "sqh/factorized_prior.hpp"
#include "sqh/losses.hpp"
#include "sqh/octree.hpp"
#include "sqh/range_coder.hpp"
#include "sqh/scalable_codec.hpp"
#include "sqh/synth.hpp"

namespace sqh {

namespace {

using Clock = std::chrono::steady_clock;
using nn::Parameter;
using nn::Rng;
using nn::Tape;
using nn::Var;
namespace ops = nn::ops;

double since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void recordFailure(SuiteResult& r, const std::string& what)
{
  if (r.failures++ == 0)
    r.detail = what;
}

int32_t sampleGaussian(Rng& rng, double mu, double sigma)
{
  // Box-Muller keeps the draw tied to this generator only.
  const double u1 = std::max(rng.uniform(), 1e-300), u2 = rng.uniform();
  return int32_t(std::lround(mu + sigma * std::sqrt(-2.0 * std::log(u1)) *
                                    std::cos(2.0 * M_PI * u2)));
}

bool gaussianCase(Rng& rng)
{
  const std::size_t n = 1 + rng.index(300);
  std::vector<int32_t> syms(n);
  std::vector<entropy::QuantizedCdf> cdfs;
  const int32_t lo = -int32_t(1 + rng.index(40)), hi = int32_t(1 + rng.index(40));
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = rng.uniform(-10.0, 10.0), sigma = 0.05 + rng.uniform(0.0, 8.0);
    cdfs.push_back(entropy::gaussianCdf(mu, sigma, lo, hi));
    syms[i] = rng.uniform() < 0.03 ? hi + 1 + int32_t(rng.index(5000))
                                   : sampleGaussian(rng, mu, sigma);
  }
  auto bytes = entropy::rangeEncode(syms, cdfs);
  return entropy::rangeDecode(bytes, cdfs) == syms;
}

bool factorizedCase(Rng& rng)
{
  const int channels = 1 + int(rng.index(4));
  FactorizedDensity prior("selftest", channels, rng, 1.0 + rng.uniform(0.0, 20.0));
  for (auto* p : prior.parameters())
    for (auto& v : p->value.data)
      v += rng.uniform(-0.3, 0.3);
  const std::size_t n = 1 + rng.index(200);
  const int32_t lo = -int32_t(1 + rng.index(20)), hi = int32_t(1 + rng.index(20));
  std::vector<entropy::QuantizedCdf> tables;
  for (int c = 0; c < channels; ++c)
    tables.push_back(prior.quantizedCdf(c, lo, hi));
  std::vector<int32_t> syms(n);
  std::vector<entropy::QuantizedCdf> cdfs;
  for (std::size_t i = 0; i < n; ++i) {
    cdfs.push_back(tables[i % std::size_t(channels)]);
    syms[i] = int32_t(rng.index(std::size_t(hi - lo + 7))) + lo - 3;
  }
  auto bytes = entropy::rangeEncode(syms, cdfs);
  return entropy::rangeDecode(bytes, cdfs) == syms;
}

bool byteModelCase(Rng& rng)
{
  const std::size_t n = rng.index(3000);
  const double skew = rng.uniform();
  std::vector<uint8_t> data(n);
  for (auto& b : data)
    b = rng.uniform() < skew ? uint8_t(rng.index(4)) : uint8_t(rng.index(256));
  entropy::RangeEncoder enc;
  entropy::AdaptiveByteModel model;
  for (auto b : data)
    model.encode(enc, b);
  auto bytes = enc.finish();
  entropy::RangeDecoder dec(bytes);
  entropy::AdaptiveByteModel model2;
  for (auto b : data)
    if (model2.decode(dec) != b)
      return false;
  return dec.position() == bytes.size();
}

LatentTensor toyTensor(Rng& rng, int extent, std::size_t channels)
{
  std::vector<VoxelCoord> coords;
  for (int x = 0; x < extent; ++x)
    for (int y = 0; y < extent; ++y)
      for (int z = 0; z < extent; ++z)
        if (rng.uniform() < 0.5)
          coords.push_back({x, y, z});
  if (coords.empty())
    coords.push_back({0, 0, 0});
  mortonSort(coords);
  LatentTensor t;
  t.coords = std::move(coords);
  t.feats = Matrix(t.coords.size(), channels);
  for (auto& v : t.feats.data)
    v = rng.uniform(-1.0, 1.0);
  return t;
}

SparsePointCloud toyBlock(Rng& rng)
{
  std::vector<VoxelCoord> coords;
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y)
      for (int z = 0; z < 4; ++z)
        if (rng.uniform() < 0.4)
          coords.push_back({x, y, z});
  if (coords.size() < 2)
    coords = {{0, 0, 0}, {1, 1, 1}};
  return SparsePointCloud::fromCoords(2, std::move(coords));
}

void randomizeBiases(std::span<Parameter* const> ps, Rng& rng)
{
  for (auto* p : ps)
    if (p->name.ends_with(".bias"))
      for (auto& v : p->value.data)
        v = rng.uniform(-0.5, 0.5);
}

}  // namespace

SuiteResult checkEntropyRoundTrips(long cases, uint64_t seed)
{
  SuiteResult r;
  r.name = "entropy round trips";
  const auto t0 = Clock::now();
  Rng rng(seed);
  for (long i = 0; i < cases; ++i) {
    const int kind = int(i % 3);
    bool ok = false;
    try {
      ok = kind == 0 ? gaussianCase(rng) : kind == 1 ? factorizedCase(rng) : byteModelCase(rng);
    } catch (const std::exception& e) {
      ok = false;
    }
    ++r.cases;
    if (!ok)
      recordFailure(r, "case " + std::to_string(i) + " kind " + std::to_string(kind));
  }
  r.seconds = since(t0);
  return r;
}

SuiteResult checkOctreeRoundTrips(long cases, uint64_t seed)
{
  SuiteResult r;
  r.name = "octree round trips";
  const auto t0 = Clock::now();
  Rng rng(seed);
  for (long i = 0; i < cases; ++i) {
    const int depth = 1 + int(rng.index(8));
    const int size = 1 << depth;
    const std::size_t n = 1 + rng.index(600);
    std::vector<VoxelCoord> coords;
    for (std::size_t k = 0; k < n; ++k)
      coords.push_back({int32_t(rng.index(std::size_t(size))), int32_t(rng.index(std::size_t(size))),
                        int32_t(rng.index(std::size_t(size)))});
    auto cloud = SparsePointCloud::fromCoords(depth, std::move(coords));
    ++r.cases;
    try {
      auto bytes = octree::octreeEncode(cloud.coords, depth);
      if (octree::octreeDecode(bytes, depth) != cloud.coords)
        recordFailure(r, "case " + std::to_string(i));
    } catch (const std::exception& e) {
      recordFailure(r, "case " + std::to_string(i) + ": " + e.what());
    }
  }
  r.seconds = since(t0);
  return r;
}

SuiteResult checkGradients(double h, double tolerance, uint64_t seed)
{
  SuiteResult r;
  r.name = "gradient checks";
  const auto t0 = Clock::now();
  Rng rng(seed);
  // Relu and top-k make the composed losses piecewise smooth. Toy instances are
  // redrawn until the forward pass stays 10h away from every kink, so a
  // +-h probe never straddles one.
  const double kinkMargin = 10.0 * h;
  constexpr int kMaxDraws = 1000;
  auto clearOfKinks = [&](const std::function<Var(Tape&)>& build) {
    nn::KinkProbe probe;
    Tape tape(false);
    build(tape);
    return probe.margin() >= kinkMargin;
  };
  auto check = [&](const std::string& name, const std::function<Var(Tape&)>& build,
                   std::vector<Parameter*> ps) {
    ++r.cases;
    double err = 0.0;
    try {
      err = nn::gradientCheck(build, ps, h, 64, seed);
    } catch (const std::exception& e) {
      recordFailure(r, name + ": " + e.what());
      return;
    }
    r.worst = std::max(r.worst, err);
    if (!(err < tolerance))
      recordFailure(r, name + ": relative error " + std::to_string(err));
  };

  {
    nn::Linear lin("linear", 5, 3, rng);
    randomizeBiases(lin.parameters(), rng);
    Parameter x("x", 6, 5);
    for (auto& v : x.value.data)
      v = rng.uniform(-1.0, 1.0);
    auto ps = lin.parameters();
    ps.push_back(&x);
    check("linear", [&](Tape& t) {
      Var y = lin.forward(t, t.parameter(x));
      return ops::sum(t, ops::mul(t, y, y));
    }, ps);
  }
  {
    Parameter x("x", 4, 3);
    for (auto& v : x.value.data)
      v = rng.uniform(-2.0, 2.0);
    check("elementwise", [&](Tape& t) {
      Var v = t.parameter(x);
      Var a = ops::softplus(t, v);
      Var b = ops::sigmoid(t, ops::scale(t, v, 1.5));
      Var c = ops::relu(t, ops::addScalar(t, v, 0.05));
      return ops::sum(t, ops::mul(t, ops::add(t, a, b), c));
    }, {&x});
  }
  for (int kind = 0; kind < 3; ++kind) {
    const LatentTensor in = toyTensor(rng, 4, 3);
    const auto parents = parentCoords(in.coords);
    Parameter x("x", in.feats.rows, in.feats.cols);
    x.value = in.feats;
    std::string name;
    nn::SparseConv layer;
    nn::KernelMapPtr map;
    if (kind == 0) {
      name = "sparse conv stride 1";
      layer = nn::SparseConv("conv", 3, 4, 3, 1, nn::ConvDirection::kDown, rng);
      map = nn::share(nn::submanifoldMap(in.coords));
    } else if (kind == 1) {
      name = "sparse conv stride 2";
      layer = nn::SparseConv("down", 3, 4, 2, 2, nn::ConvDirection::kDown, rng);
      map = nn::share(nn::downsampleMap(in.coords, parents));
    } else {
      name = "transposed sparse conv";
      Parameter xp("xp", parents.size(), 3);
      x = xp;
      for (auto& v : x.value.data)
        v = rng.uniform(-1.0, 1.0);
      layer = nn::SparseConv("up", 3, 4, 2, 2, nn::ConvDirection::kUp, rng);
      map = nn::share(nn::upsampleMap(parents, in.coords));
    }
    auto ps = layer.parameters();
    randomizeBiases(ps, rng);
    ps.push_back(&x);
    check(name, [&](Tape& t) {
      Var y = layer.forward(t, t.parameter(x), map);
      return ops::sum(t, ops::mul(t, y, y));
    }, ps);
  }
  {
    Parameter y("y", 5, 3), mu("mu", 5, 3), s("s", 5, 3);
    for (std::size_t i = 0; i < y.value.size(); ++i) {
      y.value.data[i] = rng.uniform(-3.0, 3.0);
      mu.value.data[i] = rng.uniform(-2.0, 2.0);
      s.value.data[i] = rng.uniform(0.4, 3.0);
    }
    check("gaussian bits", [&](Tape& t) {
      return nn::gaussianBits(t, t.parameter(y), t.parameter(mu), t.parameter(s));
    }, {&y, &mu, &s});
  }
  {
    Parameter logits("logits", 12, 1);
    std::vector<uint8_t> targets(12);
    for (std::size_t i = 0; i < 12; ++i) {
      logits.value.data[i] = rng.uniform(-3.0, 3.0);
      targets[i] = uint8_t(rng.index(2));
    }
    check("focal loss", [&](Tape& t) {
      return nn::focalLoss(t, t.parameter(logits), targets, 0.7, 2.0);
    }, {&logits});
  }
  {
    FactorizedDensity prior("prior", 3, rng, 4.0);
    Parameter z("z", 6, 3);
    for (auto& v : z.value.data)
      v = rng.uniform(-3.0, 3.0);
    auto ps = prior.parameters();
    ps.push_back(&z);
    check("factorized prior", [&](Tape& t) { return prior.bits(t, t.parameter(z)); }, ps);
  }
  {
    CodecConfig cfg;
    cfg.analysisWidths = {4, 4, 3};
    cfg.synthesisWidths = {4, 4, 3};
    cfg.hyperChannels = 2;
    for (int draw = 1;; ++draw) {
      CodecModel model(cfg, seed + 11 + uint64_t(draw - 1) * 7919);
      auto ps = model.parameters();
      randomizeBiases(ps, rng);
      const SparsePointCloud block = toyBlock(rng);
      const uint64_t noiseSeed = rng.next();
      auto build = [&](Tape& t) {
        Rng noise(noiseSeed);
        return model.rdLoss(t, block, 0.01, &noise).loss;
      };
      if (clearOfKinks(build) || draw == kMaxDraws) {
        check("rate-distortion loss", build, ps);
        break;
      }
    }
  }
  {
    QulpeConfig cfg;
    cfg.numQualities = 3;
    cfg.latentChannels = 3;
    cfg.embedHidden = 4;
    cfg.embedDim = 2;
    cfg.widths = {4, 5, 6};
    for (int draw = 1;; ++draw) {
      QulpeModel model(cfg, seed + 12 + uint64_t(draw - 1) * 7919);
      auto ps = model.parameters();
      randomizeBiases(ps, rng);
      LatentTensor base = toyTensor(rng, 4, 3);
      for (auto& v : base.feats.data)
        v = std::round(v * 3.0);
      Matrix target(base.feats.rows, base.feats.cols);
      for (auto& v : target.data)
        v = rng.uniform(-3.0, 3.0);
      auto build = [&](Tape& t) { return model.loss(t, base, target, 1, 3); };
      if (clearOfKinks(build) || draw == kMaxDraws) {
        check("quality-conditioned estimator loss", build, ps);
        break;
      }
    }
  }
  r.seconds = since(t0);
  return r;
}

SuiteResult checkScalableRoundTrip(uint64_t seed)
{
  SuiteResult r;
  r.name = "scalable round trip";
  const auto t0 = Clock::now();
  try {
    CodecConfig codec;
    codec.analysisWidths = {8, 8, 8};
    codec.synthesisWidths = {8, 8, 4};
    ModelBank bank(QualityLadder::desk(), codec, QulpeConfig{}, 32, seed);
    const SparsePointCloud x = generateCloud(Shape::kComposite, 6, 800, seed);
    const std::vector<int> ladder = {1, 2, 3};
    const ScalableBitstream stream = encodeScalable(bank, x, ladder);
    const std::vector<uint8_t> bytes = serialize(stream);
    for (int t = 1; t <= int(ladder.size()); ++t) {
      ++r.cases;
      const std::vector<int> single = {ladder[std::size_t(t - 1)]};
      const auto standalone = encodeIndependent(bank, x, single).front();
      if (decodeScalable(bank, bytes, t) != decodeScalable(bank, standalone, 1))
        recordFailure(r, "layer " + std::to_string(t) + " differs from standalone decode");
    }
    for (std::size_t t = 0; t < ladder.size(); ++t) {
      ++r.cases;
      const std::size_t cut = layerBoundary(stream, t);
      try {
        auto prefix = parseBitstream(std::span(bytes).first(cut));
        if (prefix.layers.size() != t + 1)
          recordFailure(r, "prefix " + std::to_string(t + 1) + " has the wrong layer count");
      } catch (const std::exception& e) {
        recordFailure(r, "prefix " + std::to_string(t + 1) + ": " + e.what());
      }
      ++r.cases;
      try {
        parseBitstream(std::span(bytes).first(cut - 1));
        recordFailure(r, "truncation before boundary " + std::to_string(t + 1) + " accepted");
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kCorruptStream)
          recordFailure(r, std::string("wrong error for truncation: ") + e.what());
      }
    }
  } catch (const std::exception& e) {
    ++r.cases;
    recordFailure(r, e.what());
  }
  r.seconds = since(t0);
  return r;
}

std::vector<SuiteResult> runSelfTest(uint64_t seed)
{
  return {checkEntropyRoundTrips(600, seed), checkOctreeRoundTrips(200, seed + 1),
          checkGradients(1e-4, 1e-4, seed + 2), checkScalableRoundTrip(seed + 3)};
}

}  // namespace sqh
