#include "sqh/model_bank.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sqh/error.hpp"

namespace sqh {

using nlohmann::json;

double QualityLadder::lambda(int quality) const
{
  if (quality < 1 || quality > size())
    fail(ErrorCode::kLadderMismatch, "ladder mismatch: quality index " + std::to_string(quality));
  return lambdas[std::size_t(quality - 1)];
}

void QualityLadder::validate() const
{
  if (lambdas.empty() || lambdas.size() > 255)
    fail(ErrorCode::kBadArgument, "ladder must hold 1..255 lambdas");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] >= 0.0))
      fail(ErrorCode::kBadArgument, "lambdas must be non-negative");
    if (i > 0 && !(lambdas[i] < lambdas[i - 1]))
      fail(ErrorCode::kBadArgument, "lambdas must decrease strictly with the quality index");
  }
}

QualityLadder QualityLadder::desk()
{
  return {{0.5, 0.1, 0.025}};
}

QualityLadder QualityLadder::fiveStep()
{
  return {{0.5, 0.25, 0.1, 0.05, 0.025}};
}

ModelBank::ModelBank(const QualityLadder& ladder_, const CodecConfig& codec_,
                     const QulpeConfig& qulpe_, int blockSize_, uint64_t seed)
  : ladder(ladder_), codec(codec_), qulpe(qulpe_), blockSize(blockSize_)
{
  ladder.validate();
  log2Exact(blockSize);
  if (blockSize < codec.latentStride())
    fail(ErrorCode::kBadArgument, "block size must be at least the latent stride");
  qulpe.numQualities = ladder.size();
  qulpe.latentChannels = codec.latentChannels();
  for (int i = 1; i <= ladder.size(); ++i)
    models.emplace_back(codec, seed + uint64_t(i));
  if (ladder.size() >= 2)
    estimator = QulpeModel(qulpe, seed + 1000);
}

CodecModel& ModelBank::model(int quality)
{
  if (quality < 1 || quality > int(models.size()))
    fail(ErrorCode::kLadderMismatch, "ladder mismatch: quality index " + std::to_string(quality));
  return models[std::size_t(quality - 1)];
}

namespace {

json codecToJson(const CodecConfig& c)
{
  return {{"analysis_widths", c.analysisWidths}, {"synthesis_widths", c.synthesisWidths},
          {"hyper_channels", c.hyperChannels},   {"sigma_min", c.sigmaMin},
          {"focal_alpha", c.focalAlpha},         {"focal_gamma", c.focalGamma},
          {"prune_keep", c.pruneKeep}};
}

CodecConfig codecFromJson(const json& j)
{
  CodecConfig c;
  c.analysisWidths = j.at("analysis_widths").get<std::vector<int>>();
  c.synthesisWidths = j.at("synthesis_widths").get<std::vector<int>>();
  c.hyperChannels = j.at("hyper_channels").get<int>();
  c.sigmaMin = j.at("sigma_min").get<double>();
  c.focalAlpha = j.at("focal_alpha").get<double>();
  c.focalGamma = j.at("focal_gamma").get<double>();
  c.pruneKeep = j.at("prune_keep").get<double>();
  return c;
}

}  // namespace

void ModelBank::save(const std::string& dir)
{
  std::filesystem::create_directories(dir);
  json j = {{"format", "sqh-model-bank"},
            {"version", 1},
            {"lambdas", ladder.lambdas},
            {"block_size", blockSize},
            {"codec", codecToJson(codec)},
            {"qulpe",
             {{"embed_hidden", qulpe.embedHidden},
              {"embed_dim", qulpe.embedDim},
              {"widths", qulpe.widths},
              {"sigma_min", qulpe.sigmaMin}}}};
  std::ofstream(dir + "/bank.json") << j.dump(2) << "\n";
  for (int i = 1; i <= numQualities(); ++i)
    nn::saveCheckpoint(dir + "/codec_" + std::to_string(i) + ".sqhm", model(i).parameters());
  if (numQualities() >= 2)
    nn::saveCheckpoint(dir + "/qulpe.sqhm", estimator.parameters());
}

ModelBank ModelBank::load(const std::string& dir)
{
  std::ifstream in(dir + "/bank.json");
  if (!in)
    fail(ErrorCode::kBadArgument, "cannot open model bank " + dir + "/bank.json");
  json j;
  try {
    in >> j;
    QualityLadder ladder{j.at("lambdas").get<std::vector<double>>()};
    CodecConfig codec = codecFromJson(j.at("codec"));
    QulpeConfig q;
    q.embedHidden = j.at("qulpe").at("embed_hidden").get<int>();
    q.embedDim = j.at("qulpe").at("embed_dim").get<int>();
    q.widths = j.at("qulpe").at("widths").get<std::vector<int>>();
    q.sigmaMin = j.at("qulpe").at("sigma_min").get<double>();
    ModelBank bank(ladder, codec, q, j.at("block_size").get<int>(), 0);
    for (int i = 1; i <= bank.numQualities(); ++i)
      nn::loadCheckpoint(dir + "/codec_" + std::to_string(i) + ".sqhm", bank.model(i).parameters());
    if (bank.numQualities() >= 2)
      nn::loadCheckpoint(dir + "/qulpe.sqhm", bank.estimator.parameters());
    return bank;
  } catch (const json::exception& e) {
    fail(ErrorCode::kBadArgument, std::string("invalid model bank: ") + e.what());
  }
}

}  // namespace sqh
