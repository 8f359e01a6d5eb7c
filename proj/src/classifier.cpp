#include "umt/classifier.hpp"

#include <algorithm>
#include <numeric>

#include "umt/engine.hpp"

namespace umt::clf {

using nn::Tensor;

Classifier::Classifier(uint64_t seed) {
  Rng rng(mix_seed(seed, 0xc1fu));
  c1 = nn::Conv3x3("clf1", 1, 8, nn::Padding::zero, rng);
  c2 = nn::Conv3x3("clf2", 8, 16, nn::Padding::zero, rng);
  c3 = nn::Conv3x3("clf3", 16, 32, nn::Padding::zero, rng);
  fc_weight = nn::make_linear_param("clf_fc.w", 2, 32, rng);
  fc_bias = nn::make_bias_param("clf_fc.b", 2);
}

Tensor<float> Classifier::logits(const Tensor<float>& x) const {
  const nn::Shape& s = x.shape();
  require(s.size() == 4 && s[1] == 1 && s[2] == kPatchSide && s[3] == kPatchSide, Errc::shape,
          "classifier input must be [N,1,96,96], got " + nn::shape_str(s));
  auto h = nn::avg_pool2(nn::relu(c1(x)));
  h = nn::avg_pool2(nn::relu(c2(h)));
  h = nn::avg_pool2(nn::relu(c3(h)));
  auto features = nn::global_avg_pool(h);
  return nn::linear(features, fc_weight.tensor, fc_bias.tensor);
}

std::vector<nn::Param*> Classifier::params() {
  std::vector<nn::Param*> out;
  c1.collect(out);
  c2.collect(out);
  c3.collect(out);
  out.push_back(&fc_weight);
  out.push_back(&fc_bias);
  return out;
}

int training_label(const AlignedPatch& p) { return p.label == PatchLabel::bonafide ? 0 : 1; }

TrainResult train_classifier(const std::vector<const AlignedPatch*>& train_set,
                             const ClassifierConfig& cfg) {
  cfg.validate();
  require(!train_set.empty(), Errc::empty_corpus, "training set is empty");
  bool has_bona = false, has_spoof = false;
  for (const AlignedPatch* p : train_set)
    (training_label(*p) == 0 ? has_bona : has_spoof) = true;
  require(has_bona && has_spoof, Errc::single_class_corpus,
          "training set needs both bonafide and spoof patches");

  TrainResult result;
  result.model = Classifier(cfg.seed);
  auto params = result.model.params();
  nn::Adam opt(params, cfg.lr);
  Rng shuffle_rng(mix_seed(cfg.seed, 0x5481u));

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t(0));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + size_t(cfg.batch_size));
      std::vector<const AlignedPatch*> batch;
      std::vector<int> labels;
      batch.reserve(end - start);
      labels.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        batch.push_back(train_set[order[i]]);
        labels.push_back(training_label(*train_set[order[i]]));
      }
      auto x = engine::patches_to_tensor(batch, 0, batch.size());
      auto loss = nn::softmax_cross_entropy(result.model.logits(x), labels);
      nn::backward(loss);
      opt.step();
      loss_sum += double(loss.val()[0]);
      ++batches;
    }
    result.log.push_back({epoch, float(loss_sum / std::max(batches, 1))});
    result.epoch_checkpoints.push_back(nn::snapshot_params(params));
  }
  return result;
}

std::vector<ScoredPatch> score(const Classifier& model,
                               const std::vector<const AlignedPatch*>& patches, int batch_size) {
  require(batch_size >= 1, Errc::precondition, "batch size must be >= 1");
  std::vector<ScoredPatch> out;
  out.reserve(patches.size());
  for (size_t start = 0; start < patches.size(); start += size_t(batch_size)) {
    const size_t end = std::min(patches.size(), start + size_t(batch_size));
    auto x = engine::patches_to_tensor(patches, start, end);
    auto probs = nn::softmax_rows(model.logits(x));
    for (size_t i = start; i < end; ++i) {
      out.push_back(ScoredPatch{probs[(i - start) * 2 + 1], patches[i]->label,
                                patches[i]->material});
    }
  }
  return out;
}

}  // namespace umt::clf
