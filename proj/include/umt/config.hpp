#pragma once

#include <string>
#include <vector>

#include "umt/classifier.hpp"
#include "umt/data.hpp"
#include "umt/engine.hpp"
#include "umt/prep.hpp"
#include "umt/protocol.hpp"

namespace CLI {
class App;
}

namespace umt::cli {

/// Every tunable of the pipeline in one place, parseable from a single
/// config file with command-line overrides.
struct RunConfig {
  uint64_t seed = 0;
  std::string out;
  int jobs = 1;
  double fdr = 0.001;
  std::string arm;       // empty = all arms (experiment)
  std::string held_out;  // empty = all materials (experiment)

  // toy corpus
  data::ToySpec toy;
  std::vector<std::string> toy_materials;  // "name:kind:strength" overrides

  // patch extraction
  prep::PatchSpec patch;

  // generator + encoder pretraining
  engine::GeneratorConfig gen;
  engine::PretrainConfig pretrain;

  // classifier
  clf::ClassifierConfig classifier;

  // experiment plan
  int runs = 5;
  int epoch_lo = 50;
  int epoch_hi = 65;
  int k_images = 5;
  int synth_count = 15000;

  /// Desk-scale profile used by the toy experiment and the acceptance
  /// suite: small corpus, 12 classifier epochs with the last quarter as
  /// the aggregation window, FDR 1%, 3000 synthesized patches.
  static RunConfig toy_profile();

  /// Applies toy_materials strings onto toy.materials.
  void resolve_materials();
  void validate() const;

  protocol::ExperimentPlan plan_for(const std::string& material,
                                    protocol::Arm plan_arm) const;
  protocol::ProtocolConfig protocol_config() const;
};

/// Registers every RunConfig field as a --section.key option on the app.
void register_options(CLI::App& app, RunConfig& cfg);

/// Writes meta.json and the fully resolved config into an output directory.
void write_run_artifacts(const std::string& out_dir, const std::string& command,
                         const RunConfig& cfg, const std::string& resolved_config);

}  // namespace umt::cli
