#include "umt/config.hpp"

#include <filesystem>
#include <fstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "umt/version.hpp"

namespace umt::cli {

RunConfig RunConfig::toy_profile() {
  RunConfig cfg;
  cfg.fdr = 0.01;
  cfg.classifier.epochs = 8;
  cfg.epoch_lo = 7;  // last 25% of the epochs
  cfg.epoch_hi = 8;
  cfg.runs = 5;
  cfg.k_images = 5;
  cfg.synth_count = 3000;
  cfg.gen.iters = 2000;
  cfg.pretrain.iters = 4000;
  return cfg;
}

void RunConfig::resolve_materials() {
  if (toy_materials.empty()) return;
  std::vector<data::ToyMaterial> mats;
  for (const std::string& s : toy_materials) {
    const size_t c1 = s.find(':');
    const size_t c2 = s.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    require(c1 != std::string::npos && c2 != std::string::npos, Errc::config,
            "toy material must be name:kind:strength, got \"" + s + "\"");
    data::ToyMaterial m;
    m.name = s.substr(0, c1);
    m.kind = data::toy_kind_from_name(s.substr(c1 + 1, c2 - c1 - 1));
    try {
      m.strength = std::stod(s.substr(c2 + 1));
    } catch (const std::exception&) {
      fail(Errc::config, "bad material strength in \"" + s + "\"");
    }
    mats.push_back(std::move(m));
  }
  toy.materials = std::move(mats);
}

void RunConfig::validate() const {
  require(jobs >= 1, Errc::config, "--jobs must be >= 1");
  require(fdr > 0.0 && fdr < 1.0, Errc::config, "--fdr must be in (0,1)");
  patch.validate();
  gen.validate();
  classifier.validate();
  require(runs >= 1, Errc::config, "plan.runs must be >= 1");
  require(epoch_lo >= 1 && epoch_lo <= epoch_hi && epoch_hi <= classifier.epochs, Errc::config,
          "epoch window must lie inside the classifier epochs");
  require(k_images >= 1 && synth_count >= 0, Errc::config, "bad plan.k_images/synth_count");
  if (!arm.empty()) protocol::arm_from_name(arm);
}

protocol::ExperimentPlan RunConfig::plan_for(const std::string& material,
                                             protocol::Arm plan_arm) const {
  protocol::ExperimentPlan plan;
  plan.held_out = material;
  plan.arm = plan_arm;
  plan.runs = runs;
  plan.epoch_lo = epoch_lo;
  plan.epoch_hi = epoch_hi;
  plan.fdr = fdr;
  plan.k_images = k_images;
  plan.synth_count = synth_count;
  plan.seed = seed;
  return plan;
}

protocol::ProtocolConfig RunConfig::protocol_config() const {
  protocol::ProtocolConfig cfg;
  cfg.classifier = classifier;
  cfg.generator = gen;
  cfg.pretrain = pretrain;
  cfg.jobs = jobs;
  return cfg;
}

void register_options(CLI::App& app, RunConfig& cfg) {
  app.option_defaults()->always_capture_default(true);
  app.add_option("--seed", cfg.seed, "Global seed");
  app.add_option("--jobs", cfg.jobs, "Worker threads for parallel stages");
  app.add_option("--fdr", cfg.fdr, "Target false detection rate");
  app.add_option("--arm", cfg.arm, "Restrict to one arm: baseline|fewshot|augmented");
  app.add_option("--held-out", cfg.held_out, "Restrict to one held-out material");

  app.add_option("--toy_image_size", cfg.toy.image_size, "Toy image side in pixels");
  app.add_option("--toy_ridge_freq", cfg.toy.ridge_freq, "Ridge frequency, cycles/pixel");
  app.add_option("--toy_orientation_drift", cfg.toy.orientation_drift,
                 "Smooth orientation drift amplitude, radians");
  app.add_option("--toy_noise_sigma", cfg.toy.noise_sigma, "Sensor noise sigma");
  app.add_option("--toy_bonafide_train", cfg.toy.bonafide_train, "Bonafide training images");
  app.add_option("--toy_bonafide_test", cfg.toy.bonafide_test, "Bonafide test images");
  app.add_option("--toy_spoof_train", cfg.toy.spoof_train_per_material,
                 "Spoof training images per material");
  app.add_option("--toy_spoof_test", cfg.toy.spoof_test_per_material,
                 "Spoof test images per material");
  app.add_option("--toy_material", cfg.toy_materials,
                 "Material descriptor name:kind:strength (repeatable)");

  app.add_option("--patch_per_image", cfg.patch.patches_per_image, "Patches per image");
  app.add_option("--patch_raw_size", cfg.patch.raw_size, "Sampling window before alignment");
  app.add_option("--patch_final_size", cfg.patch.final_size, "Aligned patch size");
  app.add_option("--patch_min_foreground", cfg.patch.min_foreground_fraction,
                 "Minimum foreground fraction per window");
  app.add_option("--patch_trim", cfg.patch.trim_fraction_per_tail,
                 "Trimmed-mean tail fraction");
  app.add_option("--patch_max_attempts", cfg.patch.max_sampling_attempts,
                 "Consecutive rejections before giving up");
  app.add_option("--patch_orient_window", cfg.patch.orient_window, "Orientation window");
  app.add_option("--patch_orient_stride", cfg.patch.orient_stride, "Orientation stride");

  app.add_option("--gen_lambda_c", cfg.gen.lambda_c, "Content loss weight");
  app.add_option("--gen_lambda_s", cfg.gen.lambda_s, "Style loss weight");
  app.add_option("--gen_eps", cfg.gen.eps, "Epsilon inside sigma");
  app.add_option("--gen_lr", cfg.gen.lr, "Generator Adam learning rate");
  app.add_option("--gen_iters", cfg.gen.iters, "Generator training iterations");
  app.add_option("--gen_pretrain_iters", cfg.pretrain.iters, "Encoder pretraining iterations");
  app.add_option("--gen_pretrain_lr", cfg.pretrain.lr, "Encoder pretraining learning rate");
  app.add_option("--gen_pretrain_batch", cfg.pretrain.batch, "Encoder pretraining batch size");

  app.add_option("--clf_lr", cfg.classifier.lr, "Classifier Adam learning rate");
  app.add_option("--clf_batch", cfg.classifier.batch_size, "Classifier batch size");
  app.add_option("--clf_epochs", cfg.classifier.epochs, "Classifier epochs");

  app.add_option("--plan_runs", cfg.runs, "Independent runs per experiment");
  app.add_option("--plan_epoch_lo", cfg.epoch_lo, "Aggregation window start (1-based)");
  app.add_option("--plan_epoch_hi", cfg.epoch_hi, "Aggregation window end (inclusive)");
  app.add_option("--plan_k_images", cfg.k_images, "Held-out images for the few-shot set");
  app.add_option("--plan_synth_count", cfg.synth_count, "Synthesized patches per run");
}

void write_run_artifacts(const std::string& out_dir, const std::string& command,
                         const RunConfig& cfg, const std::string& resolved_config) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  nlohmann::ordered_json meta;
  meta["schema"] = 1;
  meta["tool"] = kToolName;
  meta["version"] = kToolVersion;
  meta["command"] = command;
  meta["seed"] = cfg.seed;
  std::ofstream mout(fs::path(out_dir) / "meta.json", std::ios::trunc);
  if (!mout) fail(Errc::io, "cannot write meta.json in " + out_dir);
  mout << meta.dump(2) << "\n";

  std::ofstream cout_file(fs::path(out_dir) / "config_resolved.ini", std::ios::trunc);
  if (!cout_file) fail(Errc::io, "cannot write config_resolved.ini in " + out_dir);
  cout_file << "# " << kToolName << " " << kToolVersion << " resolved configuration\n"
            << resolved_config;
}

}  // namespace umt::cli
