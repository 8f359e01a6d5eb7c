#include "umt/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "umt/parallel.hpp"
#include "umt/rng.hpp"

namespace umt::protocol {

const char* arm_name(Arm a) {
  switch (a) {
    case Arm::baseline: return "baseline";
    case Arm::fewshot: return "fewshot";
    case Arm::augmented: return "augmented";
  }
  fail(Errc::config, "bad arm value");
}

Arm arm_from_name(const std::string& name) {
  if (name == "baseline") return Arm::baseline;
  if (name == "fewshot") return Arm::fewshot;
  if (name == "augmented") return Arm::augmented;
  fail(Errc::config, "unknown arm \"" + name + "\"");
}

void ExperimentPlan::validate(int classifier_epochs) const {
  require(!held_out.empty(), Errc::config, "plan needs a held-out material");
  require(runs >= 1, Errc::config, "plan needs >= 1 run");
  require(epoch_lo >= 1 && epoch_lo <= epoch_hi, Errc::config, "bad epoch window");
  require(epoch_hi <= classifier_epochs, Errc::config,
          "epoch window exceeds classifier epochs");
  require(fdr > 0.0 && fdr < 1.0, Errc::config, "fdr must be in (0,1)");
  require(k_images >= 1, Errc::config, "k_images must be >= 1");
  require(synth_count >= 0, Errc::config, "synth_count must be >= 0");
}

std::vector<uint32_t> select_fewshot_patches(const data::PatchCorpus& corpus,
                                             MaterialId held_out, int k_images,
                                             uint64_t run_seed) {
  const auto train_idx = corpus.select(data::Role::spoof_train, held_out);
  std::vector<uint32_t> images;
  for (uint32_t i : train_idx)
    if (images.empty() || images.back() != corpus.patches[i].source_id)
      images.push_back(corpus.patches[i].source_id);
  std::sort(images.begin(), images.end());
  images.erase(std::unique(images.begin(), images.end()), images.end());
  require(int(images.size()) >= k_images, Errc::insufficient_images,
          "held-out material has " + std::to_string(images.size()) + " train images, need " +
              std::to_string(k_images));

  Rng rng(mix_seed(run_seed, 0xfe55u));
  rng.shuffle(images);
  images.resize(size_t(k_images));
  std::set<uint32_t> chosen(images.begin(), images.end());

  std::vector<uint32_t> out;
  for (uint32_t i : train_idx)
    if (chosen.count(corpus.patches[i].source_id)) out.push_back(i);
  return out;
}

SplitResult build_splits(const data::PatchCorpus& corpus, const ExperimentPlan& plan,
                         uint64_t run_seed, const std::vector<AlignedPatch>& synthesized) {
  const MaterialId held_out = corpus.material_id(plan.held_out);
  require(held_out != 0, Errc::missing_material,
          "held-out material \"" + plan.held_out + "\" not in corpus");
  const bool expect_synth = plan.arm == Arm::augmented && plan.synth_count > 0;
  require(expect_synth == !synthesized.empty(), Errc::precondition,
          "synthesized corpus must accompany exactly the augmented arm");

  SplitResult split;
  auto push = [&corpus](std::vector<const AlignedPatch*>& set, std::vector<uint32_t>& uids,
                        uint32_t index) {
    set.push_back(&corpus.patches[index]);
    uids.push_back(index);
  };

  for (uint32_t i : corpus.select(data::Role::bonafide_train))
    push(split.train, split.train_uids, i);
  for (uint32_t i : corpus.select(data::Role::spoof_train))
    if (corpus.patches[i].material != held_out) push(split.train, split.train_uids, i);

  std::set<uint32_t> fewshot;
  if (plan.arm != Arm::baseline) {
    split.fewshot_uids = select_fewshot_patches(corpus, held_out, plan.k_images, run_seed);
    fewshot.insert(split.fewshot_uids.begin(), split.fewshot_uids.end());
    for (uint32_t i : split.fewshot_uids) push(split.train, split.train_uids, i);
  }
  if (plan.arm == Arm::augmented) {
    for (size_t i = 0; i < synthesized.size(); ++i) {
      require(synthesized[i].material == held_out, Errc::precondition,
              "synthesized patch tagged with the wrong material");
      split.train.push_back(&synthesized[i]);
      split.train_uids.push_back(kSynthUidBase + uint32_t(i));
    }
  }

  // Cross-material test: bonafide test vs the held-out material's train and
  // test partitions combined, minus any patches designated few-shot.
  for (uint32_t i : corpus.select(data::Role::bonafide_test))
    push(split.cross_test, split.cross_test_uids, i);
  for (data::Role role : {data::Role::spoof_train, data::Role::spoof_test})
    for (uint32_t i : corpus.select(role, held_out))
      if (!fewshot.count(i)) push(split.cross_test, split.cross_test_uids, i);

  // Known-material test: bonafide test vs known-material spoof test sets.
  for (uint32_t i : corpus.select(data::Role::bonafide_test))
    push(split.known_test, split.known_test_uids, i);
  for (uint32_t i : corpus.select(data::Role::spoof_test, 0))
    if (corpus.patches[i].material != held_out)
      push(split.known_test, split.known_test_uids, i);

  return split;
}

void ExperimentReport::aggregate() {
  std::vector<double> window;
  for (const auto& run : tdr_pct)
    for (int e = epoch_lo; e <= epoch_hi; ++e) window.push_back(run[size_t(e - 1)]);
  require(!window.empty(), Errc::precondition, "empty aggregation window");
  double sum = 0.0;
  for (double v : window) sum += v;
  mean_pct = sum / double(window.size());
  double var = 0.0;
  for (double v : window) var += (v - mean_pct) * (v - mean_pct);
  std_pct = std::sqrt(var / double(window.size()));
}

double ExperimentReport::run_window_mean(int run) const {
  const auto& series = tdr_pct.at(size_t(run));
  double sum = 0.0;
  for (int e = epoch_lo; e <= epoch_hi; ++e) sum += series.at(size_t(e - 1));
  return sum / double(epoch_hi - epoch_lo + 1);
}

namespace {

struct SeriesPair {
  std::vector<double> cross;
  std::vector<double> known;
};

std::pair<std::vector<double>, std::vector<double>> scores_by_truth(
    const std::vector<clf::ScoredPatch>& scored) {
  std::vector<double> bona, spoof;
  for (const auto& s : scored)
    (s.truth == PatchLabel::bonafide ? bona : spoof).push_back(double(s.score));
  return {std::move(bona), std::move(spoof)};
}

}  // namespace

engine::UmtGenerator make_pretrained_generator(const data::PatchCorpus& corpus,
                                               const ProtocolConfig& cfg, uint64_t seed) {
  std::vector<const AlignedPatch*> bona;
  for (uint32_t i : corpus.select(data::Role::bonafide_train)) bona.push_back(&corpus.patches[i]);
  engine::UmtGenerator gen(seed, cfg.generator);
  engine::pretrain_encoder(gen, bona, cfg.pretrain, seed);
  gen.encoder.freeze();
  return gen;
}

ProtocolResult run_protocol(const data::PatchCorpus& corpus, const ExperimentPlan& plan,
                            const ProtocolConfig& cfg, const engine::UmtGenerator* pretrained) {
  cfg.classifier.validate();
  plan.validate(cfg.classifier.epochs);
  const MaterialId held_out = corpus.material_id(plan.held_out);
  require(held_out != 0, Errc::missing_material,
          "held-out material \"" + plan.held_out + "\" not in corpus");

  // The pretrained encoder is shared read-only across runs; augmented runs
  // restore its parameters into their own generator instance.
  std::optional<engine::UmtGenerator> local_pretrained;
  std::vector<nn::NamedTensor> pretrained_snapshot;
  if (plan.arm == Arm::augmented) {
    if (!pretrained) {
      local_pretrained = make_pretrained_generator(corpus, cfg, plan.seed);
      pretrained = &*local_pretrained;
    }
    auto* mutable_gen = const_cast<engine::UmtGenerator*>(pretrained);
    require(mutable_gen->encoder.frozen(), Errc::precondition,
            "pretrained generator must have a frozen encoder");
    pretrained_snapshot = mutable_gen->snapshot();
  }

  std::vector<SeriesPair> series(static_cast<size_t>(plan.runs));
  parallel_for(cfg.jobs, plan.runs, [&](int run) {
    const uint64_t run_seed = mix_seed(plan.seed, uint64_t(held_out), uint64_t(run));

    std::vector<const AlignedPatch*> bona_train, known_style;
    for (uint32_t i : corpus.select(data::Role::bonafide_train))
      bona_train.push_back(&corpus.patches[i]);
    for (uint32_t i : corpus.select(data::Role::spoof_train))
      if (corpus.patches[i].material != held_out) known_style.push_back(&corpus.patches[i]);

    std::vector<AlignedPatch> synthesized;
    if (plan.arm == Arm::augmented && plan.synth_count > 0) {
      engine::UmtGenerator gen(plan.seed, cfg.generator);
      gen.restore(pretrained_snapshot);
      gen.encoder.freeze();
      engine::train_generator(gen, bona_train, known_style, cfg.generator.iters,
                              mix_seed(run_seed, 0x6e61u));

      const auto fewshot =
          select_fewshot_patches(corpus, held_out, plan.k_images, run_seed);
      std::vector<const AlignedPatch*> styles;
      for (uint32_t i : fewshot) styles.push_back(&corpus.patches[i]);
      synthesized = engine::synthesize_corpus(gen, bona_train, styles, plan.synth_count,
                                              held_out, mix_seed(run_seed, 0x5f17u), 1)
                        .patches;
    }

    const SplitResult split = build_splits(corpus, plan, run_seed, synthesized);
    clf::ClassifierConfig run_cfg = cfg.classifier;
    run_cfg.seed = mix_seed(run_seed, 0xc1a5u);
    const clf::TrainResult trained = clf::train_classifier(split.train, run_cfg);

    clf::Classifier scorer(run_cfg.seed);
    auto scorer_params = scorer.params();
    SeriesPair& out = series[size_t(run)];
    for (const auto& checkpoint : trained.epoch_checkpoints) {
      nn::restore_params(scorer_params, checkpoint);
      auto [cb, cs] = scores_by_truth(clf::score(scorer, split.cross_test));
      out.cross.push_back(metrics::tdr_at_fdr(cb, cs, plan.fdr).tdr * 100.0);
      auto [kb, ks] = scores_by_truth(clf::score(scorer, split.known_test));
      out.known.push_back(metrics::tdr_at_fdr(kb, ks, plan.fdr).tdr * 100.0);
    }
  });

  auto make_report = [&](const char* kind) {
    ExperimentReport r;
    r.held_out = plan.held_out;
    r.arm = arm_name(plan.arm);
    r.eval_kind = kind;
    r.fdr = plan.fdr;
    r.runs = plan.runs;
    r.epochs = cfg.classifier.epochs;
    r.epoch_lo = plan.epoch_lo;
    r.epoch_hi = plan.epoch_hi;
    return r;
  };
  ProtocolResult result{make_report("cross-material"), make_report("known-material")};
  for (const auto& s : series) {
    result.cross.tdr_pct.push_back(s.cross);
    result.known.tdr_pct.push_back(s.known);
  }
  result.cross.aggregate();
  result.known.aggregate();
  return result;
}

ExperimentReport run_experiment(const data::PatchCorpus& corpus, const ExperimentPlan& plan,
                                const ProtocolConfig& cfg,
                                const engine::UmtGenerator* pretrained) {
  return run_protocol(corpus, plan, cfg, pretrained).cross;
}

ExperimentReport known_material_eval(const data::PatchCorpus& corpus, const ExperimentPlan& plan,
                                     const ProtocolConfig& cfg,
                                     const engine::UmtGenerator* pretrained) {
  return run_protocol(corpus, plan, cfg, pretrained).known;
}

}  // namespace umt::protocol
