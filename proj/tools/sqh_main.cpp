// Command-line front end: training, layered encoding and decoding, evaluation.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <zlib.h>

#include "sqh/error.hpp"
#include "sqh/metrics.hpp"
#include "sqh/ply.hpp"
#include "sqh/scalable_codec.hpp"
#include "sqh/selftest.hpp"
#include "sqh/training.hpp"
#include "sqh/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sqh;

namespace {

struct Common {
  int jobs = 1;
  std::optional<uint64_t> seed;
  std::vector<std::string> argv;
};

std::string hex32(uint32_t v)
{
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

uint32_t crc(const std::string& s)
{
  return uint32_t(::crc32(0L, reinterpret_cast<const Bytef*>(s.data()), uInt(s.size())));
}

std::string readText(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorCode::kBadArgument, "cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void writeManifest(const std::string& path, const Common& common, const std::string& command,
                   const std::string& configText, const std::vector<std::string>& outputs)
{
  json j = {{"tool", "sqh"},
            {"version", kVersion},
            {"command", command},
            {"args", common.argv},
            {"seed", common.seed ? json(*common.seed) : json(nullptr)},
            {"jobs", common.jobs},
            {"config_crc32", hex32(crc(configText))},
            {"outputs", outputs}};
  std::ofstream out(path);
  if (!out)
    fail(ErrorCode::kBadArgument, "cannot write manifest " + path);
  out << j.dump(2) << '\n';
}

std::string bankConfigText(const std::string& modelDir)
{
  return readText(modelDir + "/bank.json");
}

// Integer-typed files without an explicit depth use the smallest depth that
// holds every coordinate and at least one block.
SparsePointCloud loadInput(const std::string& path, int depth, int blockSize)
{
  if (depth > 0)
    return loadPly(path, depth);
  PlyVertices v = readPly(path);
  if (!v.integerTyped)
    fail(ErrorCode::kBadArgument, "--depth is required for float-typed PLY input");
  double maxCoord = 0.0;
  for (const auto& p : v.points)
    for (double c : p)
      maxCoord = std::max(maxCoord, c);
  const int needed = int(std::bit_width(uint64_t(maxCoord)));
  return loadPly(path, std::max(needed, log2Exact(blockSize)));
}

void writeBytes(const std::string& path, const std::vector<uint8_t>& bytes)
{
  nn::writeFileBytes(path, bytes);
}

//============================================================================

int runTrain(const Common& common, const std::string& configPath, const std::string& outDir,
             bool control)
{
  const std::string text = readText(configPath);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kBadArgument, std::string("invalid training config: ") + e.what());
  }
  TrainConfig cfg = TrainConfig::fromJson(j);
  if (!outDir.empty())
    cfg.outDir = outDir;
  if (common.seed)
    cfg.seed = *common.seed;
  if (control)
    cfg.control = true;
  if (cfg.outDir.empty())
    fail(ErrorCode::kBadArgument, "no output directory: set paths.out or --out");
  trainAll(cfg, [](const std::string& line) { std::cerr << line << '\n'; });
  writeManifest(cfg.outDir + "/manifest.json", common, "train", cfg.toJson().dump(),
                {"bank.json", "codec_log.csv", "qulpe_log.csv"});
  return 0;
}

int runEncode(const Common& common, const std::string& modelDir, const std::string& input,
              const std::vector<int>& ladder, const std::string& out, int depth)
{
  ModelBank bank = ModelBank::load(modelDir);
  validateLadder(bank, ladder);
  const SparsePointCloud x = loadInput(input, depth, bank.blockSize);
  writeBytes(out, serialize(encodeScalable(bank, x, ladder, common.jobs)));
  writeManifest(out + ".manifest.json", common, "encode", bankConfigText(modelDir), {out});
  return 0;
}

int runEncodeIndependent(const Common& common, const std::string& modelDir,
                         const std::string& input, const std::vector<int>& ladder,
                         const std::string& prefix, int depth)
{
  ModelBank bank = ModelBank::load(modelDir);
  validateLadder(bank, ladder);
  const SparsePointCloud x = loadInput(input, depth, bank.blockSize);
  auto streams = encodeIndependent(bank, x, ladder, common.jobs);
  std::vector<std::string> outputs;
  for (std::size_t k = 0; k < streams.size(); ++k) {
    outputs.push_back(prefix + "_q" + std::to_string(ladder[k]) + ".sqh");
    writeBytes(outputs.back(), streams[k]);
  }
  writeManifest(prefix + ".manifest.json", common, "encode-independent",
                bankConfigText(modelDir), outputs);
  return 0;
}

int runDecode(const Common& common, const std::string& modelDir, const std::string& input,
              int layer, const std::string& out, bool binary)
{
  ModelBank bank = ModelBank::load(modelDir);
  const auto bytes = nn::readFileBytes(input);
  const ScalableBitstream stream = parseBitstream(bytes);
  if (layer == 0)
    layer = int(stream.layers.size());
  const SparsePointCloud x = decodeScalable(bank, stream, layer, common.jobs);
  savePly(x, out, binary ? PlyFormat::kBinaryLittleEndian : PlyFormat::kAscii);
  writeManifest(out + ".manifest.json", common, "decode", bankConfigText(modelDir), {out});
  return 0;
}

int runEval(const Common& common, const std::string& modelDir, const std::string& refPath,
            const std::vector<std::string>& streams, const std::vector<std::string>& independent,
            const std::string& out, const std::string& overheadOut, std::string content,
            int depth)
{
  ModelBank bank = ModelBank::load(modelDir);
  const SparsePointCloud ref = loadInput(refPath, depth, bank.blockSize);
  if (content.empty())
    content = fs::path(refPath).stem().string();
  std::vector<RdSeries> series;
  for (const auto& s : streams) {
    const auto bytes = nn::readFileBytes(s);
    auto points = cumulativeRd(bank, bytes, ref, common.jobs);
    std::string label = "sqh(";
    for (std::size_t k = 0; k < points.size(); ++k)
      label += (k ? " " : "") + std::to_string(points[k].quality);
    series.push_back({content, label + ")", std::move(points)});
  }
  if (!independent.empty()) {
    std::vector<std::vector<uint8_t>> bytes;
    for (const auto& s : independent)
      bytes.push_back(nn::readFileBytes(s));
    series.push_back({content, "independent", independentRd(bank, bytes, ref, common.jobs)});
  }
  std::ofstream csv(out);
  if (!csv)
    fail(ErrorCode::kBadArgument, "cannot write " + out);
  writeRdCsv(csv, series);
  std::vector<std::string> outputs = {out};
  if (!overheadOut.empty()) {
    if (independent.empty() || streams.empty())
      fail(ErrorCode::kBadArgument, "--overhead-out needs --streams and --independent");
    const auto& scal = series.front().points;
    const auto& ind = series.back().points;
    const auto delta = rateOverhead(scal, ind);
    std::ofstream o(overheadOut);
    o << "content,quality_index,bpp_scalable,bpp_independent,rate_delta_percent\n";
    for (std::size_t k = 0; k < delta.size(); ++k)
      o << content << ',' << scal[k].quality << ',' << scal[k].bppCumulative << ','
        << ind[k].bppCumulative << ',' << delta[k] << '\n';
    outputs.push_back(overheadOut);
  }
  writeManifest(out + ".manifest.json", common, "eval", bankConfigText(modelDir), outputs);
  return 0;
}

int runRdPlot(const Common& common, const std::vector<std::string>& csvs, const std::string& out)
{
  std::vector<RdSeries> all;
  std::string text;
  for (const auto& path : csvs) {
    const std::string body = readText(path);
    text += body;
    std::istringstream in(body);
    auto s = readRdCsv(in);
    all.insert(all.end(), s.begin(), s.end());
  }
  std::ofstream svg(out);
  if (!svg)
    fail(ErrorCode::kBadArgument, "cannot write " + out);
  writeRdSvg(svg, all);
  writeManifest(out + ".manifest.json", common, "rd-plot", text, {out});
  return 0;
}

int runSimilarity(const Common& common, const std::string& modelDir,
                  const std::vector<std::string>& inputs, bool perBlock, const std::string& out,
                  int depth)
{
  ModelBank bank = ModelBank::load(modelDir);
  std::vector<SparsePointCloud> clouds;
  for (const auto& p : inputs)
    clouds.push_back(loadInput(p, depth, bank.blockSize));
  auto blocks = trainingBlocks(clouds, bank.blockSize, 1);
  const auto m = cosineSimilarityMatrix(buildLatentsDataset(bank, blocks), perBlock);
  std::ofstream csv(out);
  if (!csv)
    fail(ErrorCode::kBadArgument, "cannot write " + out);
  csv << "quality_index";
  for (std::size_t b = 0; b < m.size(); ++b)
    csv << ",q" << b + 1;
  csv << '\n' << std::setprecision(10);
  for (std::size_t a = 0; a < m.size(); ++a) {
    csv << a + 1;
    for (double v : m[a])
      csv << ',' << v;
    csv << '\n';
  }
  writeManifest(out + ".manifest.json", common, "similarity", bankConfigText(modelDir), {out});
  return 0;
}

int runSynth(const Common& common, const std::string& shape, int depth, std::size_t density,
             const std::string& out, bool binary)
{
  const uint64_t seed = common.seed.value_or(1);
  const SparsePointCloud x = generateCloud(parseShape(shape), depth, density, seed);
  savePly(x, out, binary ? PlyFormat::kBinaryLittleEndian : PlyFormat::kAscii);
  writeManifest(out + ".manifest.json", common, "synth",
                shape + " " + std::to_string(depth) + " " + std::to_string(density), {out});
  return 0;
}

int runSelftest(const Common& common)
{
  bool ok = true;
  for (const auto& r : runSelfTest(common.seed.value_or(1))) {
    std::cout << (r.ok() ? "PASS " : "FAIL ") << r.name << ": " << r.cases << " cases, "
              << r.failures << " failures, worst " << r.worst << ", " << r.seconds << " s";
    if (!r.detail.empty())
      std::cout << " (" << r.detail << ")";
    std::cout << '\n';
    ok = ok && r.ok();
  }
  if (!ok)
    fail(ErrorCode::kNumeric, "selftest failed");
  return 0;
}

std::string oneLine(std::string s)
{
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

int reportError(ErrorCode code, const std::string& message)
{
  std::cerr << "error code=" << int(code) << " kind=" << errorCodeName(code)
            << " message=" << oneLine(message) << std::endl;
  return int(code);
}

}  // namespace

int main(int argc, char** argv)
{
  Common common;
  common.argv.assign(argv, argv + argc);

  CLI::App app{"Scalable point cloud geometry codec"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.add_option("--jobs", common.jobs, "Worker threads for per-block work")
    ->check(CLI::PositiveNumber);
  app.add_option("--seed", common.seed, "Override the configured seed");

  std::string config, outDir, modelDir, input, out, prefix, ref, content, overheadOut;
  std::vector<int> ladder;
  std::vector<std::string> streams, independent, csvs, inputs;
  int layer = 0, depth = 0;
  bool control = false, binary = false, perBlock = false;

  auto* train = app.add_subcommand("train", "Train the quality ladder and the estimator");
  train->add_option("--config", config, "Training config (JSON)")->required();
  train->add_option("--out", outDir, "Output directory (overrides paths.out)");
  train->add_flag("--control", control, "Independent initialisations instead of warm starts");

  auto addDepth = [&](CLI::App* c) {
    c->add_option("--depth", depth, "Voxel depth of PLY input (inferred for integer PLY)")
      ->check(CLI::Range(1, 20));
  };

  auto* encode = app.add_subcommand("encode", "Encode a layered stream");
  encode->add_option("--model-dir", modelDir)->required();
  encode->add_option("--input", input, "PLY input")->required();
  encode->add_option("--ladder", ladder, "Quality indices, e.g. 1,2,3")
    ->required()
    ->delimiter(',');
  encode->add_option("--out", out)->required();
  addDepth(encode);

  auto* encodeInd = app.add_subcommand("encode-independent", "Encode one stream per quality");
  encodeInd->add_option("--model-dir", modelDir)->required();
  encodeInd->add_option("--input", input)->required();
  encodeInd->add_option("--ladder", ladder)->required()->delimiter(',');
  encodeInd->add_option("--out-prefix", prefix, "Streams go to <prefix>_q<i>.sqh")->required();
  addDepth(encodeInd);

  auto* decode = app.add_subcommand("decode", "Decode a stream up to a layer");
  decode->add_option("--model-dir", modelDir)->required();
  decode->add_option("--input", input)->required();
  decode->add_option("--layer", layer, "1-based layer (default: all layers)")
    ->check(CLI::NonNegativeNumber);
  decode->add_option("--out", out)->required();
  decode->add_flag("--binary", binary, "Write binary little-endian PLY");

  auto* eval = app.add_subcommand("eval", "Rate-distortion points of streams");
  eval->add_option("--model-dir", modelDir)->required();
  eval->add_option("--ref", ref, "Reference PLY")->required();
  eval->add_option("--streams", streams, "Layered streams");
  eval->add_option("--independent", independent, "Standalone streams, increasing quality");
  eval->add_option("--out", out, "CSV output")->required();
  eval->add_option("--overhead-out", overheadOut, "Rate delta CSV (first stream vs independent)");
  eval->add_option("--content", content, "Content label (default: reference file stem)");
  addDepth(eval);

  auto* plot = app.add_subcommand("rd-plot", "SVG plot of RD CSV files");
  plot->add_option("--csv", csvs)->required();
  plot->add_option("--out", out)->required();

  auto* sim = app.add_subcommand("similarity", "Cosine similarity of latents across qualities");
  sim->add_option("--model-dir", modelDir)->required();
  sim->add_option("--input", inputs, "PLY inputs")->required();
  sim->add_flag("--per-block", perBlock, "Average per-block means instead of pooling");
  sim->add_option("--out", out)->required();
  addDepth(sim);

  std::string shape = "composite";
  std::size_t density = 1200;
  auto* synth = app.add_subcommand("synth", "Write a synthetic voxelized cloud (seed from --seed)");
  synth->add_option("--shape", shape, "sphere-surface, plane, cube-frame, gaussian-blobs or composite");
  synth->add_option("--depth", depth, "Voxel depth")->required()->check(CLI::Range(3, 16));
  synth->add_option("--density", density, "Target point count");
  synth->add_option("--out", out)->required();
  synth->add_flag("--binary", binary, "Write binary little-endian PLY");

  auto* self = app.add_subcommand("selftest", "Gradient checks and round-trip suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return reportError(ErrorCode::kBadArgument, e.what());
  }

  try {
    if (*train)
      return runTrain(common, config, outDir, control);
    if (*encode)
      return runEncode(common, modelDir, input, ladder, out, depth);
    if (*encodeInd)
      return runEncodeIndependent(common, modelDir, input, ladder, prefix, depth);
    if (*decode)
      return runDecode(common, modelDir, input, layer, out, binary);
    if (*eval) {
      if (streams.empty() && independent.empty())
        fail(ErrorCode::kBadArgument, "eval needs --streams or --independent");
      return runEval(common, modelDir, ref, streams, independent, out, overheadOut, content,
                     depth);
    }
    if (*plot)
      return runRdPlot(common, csvs, out);
    if (*sim)
      return runSimilarity(common, modelDir, inputs, perBlock, out, depth);
    if (*synth)
      return runSynth(common, shape, depth, density, out, binary);
    if (*self)
      return runSelftest(common);
  } catch (const Error& e) {
    return reportError(e.code(), e.what());
  } catch (const std::exception& e) {
    return reportError(ErrorCode::kNumeric, e.what());
  }
  return reportError(ErrorCode::kBadArgument, "no subcommand");
}
