#pragma once

#include <optional>
#include <string>
#include <vector>

#include "umt/classifier.hpp"
#include "umt/data.hpp"
#include "umt/engine.hpp"
#include "umt/metrics.hpp"

namespace umt::protocol {

enum class Arm { baseline, fewshot, augmented };

const char* arm_name(Arm a);
Arm arm_from_name(const std::string& name);

/// One leave-one-material-out experiment: a held-out material, an
/// augmentation arm, and the multi-run aggregation window.
struct ExperimentPlan {
  std::string held_out;
  Arm arm = Arm::baseline;
  int runs = 5;
  int epoch_lo = 50;  // 1-based inclusive aggregation window
  int epoch_hi = 65;
  double fdr = 0.001;
  int k_images = 5;
  int synth_count = 15000;
  uint64_t seed = 0;

  void validate(int classifier_epochs) const;
};

struct ProtocolConfig {
  clf::ClassifierConfig classifier;
  engine::GeneratorConfig generator;
  engine::PretrainConfig pretrain;
  int jobs = 1;
};

/// Train/test composition for one run. Entries are indices into the corpus
/// patch store; synthesized patches ride alongside with uids tagged by the
/// high bit.
struct SplitResult {
  std::vector<const AlignedPatch*> train;
  std::vector<uint32_t> train_uids;
  std::vector<const AlignedPatch*> cross_test;
  std::vector<uint32_t> cross_test_uids;
  std::vector<const AlignedPatch*> known_test;
  std::vector<uint32_t> known_test_uids;
  std::vector<uint32_t> fewshot_uids;  // the designated few-shot patches (train-only)
};

inline constexpr uint32_t kSynthUidBase = 0x80000000u;

/// Deterministic style-patch selection: k seeded-chosen held-out train
/// images contribute all their patches.
std::vector<uint32_t> select_fewshot_patches(const data::PatchCorpus& corpus,
                                             MaterialId held_out, int k_images,
                                             uint64_t run_seed);

/// Builds the leave-one-material-out splits for one run. The synthesized
/// corpus must be supplied exactly when the arm is augmented.
SplitResult build_splits(const data::PatchCorpus& corpus, const ExperimentPlan& plan,
                         uint64_t run_seed,
                         const std::vector<AlignedPatch>& synthesized = {});

struct ExperimentReport {
  int schema = 1;
  std::string held_out;
  std::string arm;
  std::string eval_kind;  // "cross-material" or "known-material"
  double fdr = 0.0;
  int runs = 0;
  int epochs = 0;
  int epoch_lo = 0;
  int epoch_hi = 0;
  std::vector<std::vector<double>> tdr_pct;  // [run][epoch], percent
  double mean_pct = 0.0;
  double std_pct = 0.0;

  /// Pooled mean and population std over runs x window epochs; always
  /// recomputable from tdr_pct.
  void aggregate();
  double run_window_mean(int run) const;
};

struct ProtocolResult {
  ExperimentReport cross;
  ExperimentReport known;
};

/// Executes the full per-run pipeline for one (held-out material, arm)
/// plan: splits, generator training + synthesis on the augmented arm,
/// classifier training, per-epoch scoring of both test sets. Runs execute
/// in parallel with per-run seeds shared across arms.
ProtocolResult run_protocol(const data::PatchCorpus& corpus, const ExperimentPlan& plan,
                            const ProtocolConfig& cfg,
                            const engine::UmtGenerator* pretrained = nullptr);

/// Cross-material view (Table 1 analog): bonafide test vs the held-out
/// material's train+test patches.
ExperimentReport run_experiment(const data::PatchCorpus& corpus, const ExperimentPlan& plan,
                                const ProtocolConfig& cfg,
                                const engine::UmtGenerator* pretrained = nullptr);

/// Known-material view (Table 2 analog): bonafide test vs known-material
/// spoof test partitions, same training sets.
ExperimentReport known_material_eval(const data::PatchCorpus& corpus, const ExperimentPlan& plan,
                                     const ProtocolConfig& cfg,
                                     const engine::UmtGenerator* pretrained = nullptr);

/// Pretrains a fresh generator on the bonafide training patches and
/// freezes its encoder; the experiment driver shares one across plans.
engine::UmtGenerator make_pretrained_generator(const data::PatchCorpus& corpus,
                                               const ProtocolConfig& cfg, uint64_t seed);

}  // namespace umt::protocol
