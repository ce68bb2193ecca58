#pragma once

#include <string>
#include <vector>

#include "sqh/codec_model.hpp"
#include "sqh/qulpe.hpp"

namespace sqh {

// Quality ladder: lambdas[i - 1] belongs to quality index i and decreases
// strictly with i.
struct QualityLadder {
  std::vector<double> lambdas;

  int size() const { return int(lambdas.size()); }
  double lambda(int quality) const;
  void validate() const;

  static QualityLadder desk();     // {0.5, 0.1, 0.025}
  static QualityLadder fiveStep(); // {0.5, 0.25, 0.1, 0.05, 0.025}

  friend bool operator==(const QualityLadder&, const QualityLadder&) = default;
};

// Q codec models sharing one architecture plus one QuLPE model.
struct ModelBank {
  QualityLadder ladder;
  CodecConfig codec;
  QulpeConfig qulpe;
  int blockSize = 64;
  std::vector<CodecModel> models;
  QulpeModel estimator;

  ModelBank() = default;
  // Freshly initialised models; model i uses seed + i, the estimator seed + 1000.
  ModelBank(const QualityLadder& ladder, const CodecConfig& codec, const QulpeConfig& qulpe,
            int blockSize, uint64_t seed);

  int numQualities() const { return ladder.size(); }
  // 1-based; unknown indices raise ErrorCode::kLadderMismatch.
  CodecModel& model(int quality);

  // Directory layout: bank.json, codec_<i>.sqhm for every i, qulpe.sqhm.
  void save(const std::string& dir);
  static ModelBank load(const std::string& dir);
};

}  // namespace sqh
