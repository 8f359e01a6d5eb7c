#pragma once

#include <cstdint>
#include <vector>

#include "umt/nn.hpp"
#include "umt/patch.hpp"

namespace umt::clf {

struct ClassifierConfig {
  float lr = 1e-4f;
  int batch_size = 64;
  int epochs = 65;
  uint64_t seed = 0;

  void validate() const {
    require(lr > 0.f, Errc::config, "classifier lr must be > 0");
    require(batch_size >= 1, Errc::config, "batch_size must be >= 1");
    require(epochs >= 0, Errc::config, "epochs must be >= 0");
  }
};

/// Small CNN standing in for the paper-scale backbone: three
/// conv3x3+relu+avgpool blocks (8/16/32 channels), global average pooling,
/// then a linear head with two logits.
struct Classifier {
  nn::Conv3x3 c1, c2, c3;
  nn::Param fc_weight, fc_bias;

  Classifier() = default;
  explicit Classifier(uint64_t seed);

  nn::Tensor<float> logits(const nn::Tensor<float>& x) const;
  std::vector<nn::Param*> params();
};

struct ScoredPatch {
  float score = 0.f;  // spoof-class softmax probability
  PatchLabel truth = PatchLabel::bonafide;
  MaterialId material = 0;
};

struct EpochLog {
  int epoch;
  float mean_loss;
};

struct TrainResult {
  Classifier model;
  std::vector<std::vector<nn::NamedTensor>> epoch_checkpoints;  // one snapshot per epoch
  std::vector<EpochLog> log;
};

/// Spoof and synthesized-spoof both map to the positive class. Shuffling is
/// seeded per epoch; one epoch is a full pass with a trailing partial batch.
/// Throws SingleClassCorpus unless both classes are present.
TrainResult train_classifier(const std::vector<const AlignedPatch*>& train_set,
                             const ClassifierConfig& cfg);

/// Order-preserving, pure, and batch-size invariant.
std::vector<ScoredPatch> score(const Classifier& model,
                               const std::vector<const AlignedPatch*>& patches,
                               int batch_size = 64);

int training_label(const AlignedPatch& p);

}  // namespace umt::clf
