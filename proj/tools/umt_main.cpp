#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "umt/config.hpp"
#include "umt/log.hpp"
#include "umt/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace umt;

namespace {

std::string fmt_f(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void require_out(const cli::RunConfig& cfg) {
  require(!cfg.out.empty(), Errc::config, "--out DIR is required");
}

void require_artifact(const fs::path& path, const std::string& what) {
  if (!fs::exists(path))
    fail(Errc::missing_artifact, "no " + what + " at " + path.string());
}

std::vector<const AlignedPatch*> pointers(const data::PatchCorpus& corpus,
                                          const std::vector<uint32_t>& idx) {
  std::vector<const AlignedPatch*> out;
  out.reserve(idx.size());
  for (uint32_t i : idx) out.push_back(&corpus.patches[i]);
  return out;
}

void write_csv(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  for (const auto& line : lines) out << line << "\n";
  if (!out) fail(Errc::io, "short write on " + path.string());
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------- gen-toy

void run_gen_toy(cli::RunConfig cfg, const std::string& resolved) {
  require_out(cfg);
  cfg.resolve_materials();
  cfg.toy.seed = cfg.seed;
  cfg.toy.validate();
  fs::create_directories(cfg.out);
  const auto manifest = data::generate_toy_corpus(cfg.toy, cfg.out);
  cli::write_run_artifacts(cfg.out, "gen-toy", cfg, resolved);
  log_info("gen-toy: %zu images, %zu materials -> %s", manifest.entries.size(),
           manifest.materials.size(), cfg.out.c_str());
}

// ------------------------------------------------------------- preprocess

void run_preprocess(cli::RunConfig cfg, const std::string& corpus_dir,
                    const std::string& resolved) {
  require_out(cfg);
  require(!corpus_dir.empty(), Errc::config, "--corpus DIR is required");
  const auto manifest = data::ingest(corpus_dir);
  const auto corpus = data::preprocess_corpus(manifest, cfg.patch, cfg.seed, cfg.jobs);
  data::save_corpus(corpus, cfg.out);
  cli::write_run_artifacts(cfg.out, "preprocess", cfg, resolved);
  log_info("preprocess: %zu images -> %zu patches", manifest.entries.size(),
           corpus.patches.size());
}

// -------------------------------------------------------- pretrain-encoder

void run_pretrain(cli::RunConfig cfg, const std::string& patches_dir,
                  const std::string& resolved) {
  require_out(cfg);
  require(!patches_dir.empty(), Errc::config, "--patches DIR is required");
  require_artifact(fs::path(patches_dir) / "materials.json", "patch corpus");
  const auto corpus = data::load_corpus(patches_dir);
  const auto bona = pointers(corpus, corpus.select(data::Role::bonafide_train));

  engine::UmtGenerator gen(cfg.seed, cfg.gen);
  const auto log = engine::pretrain_encoder(gen, bona, cfg.pretrain, cfg.seed);
  gen.encoder.freeze();

  fs::create_directories(cfg.out);
  nn::save_checkpoint(fs::path(cfg.out) / "encoder.umtw", gen.snapshot());
  std::vector<std::string> lines{"iter,mse"};
  for (const auto& row : log)
    lines.push_back(std::to_string(row.iter) + "," + fmt_f(double(row.mse)));
  write_csv(fs::path(cfg.out) / "pretrain_log.csv", lines);
  cli::write_run_artifacts(cfg.out, "pretrain-encoder", cfg, resolved);
  log_info("pretrain-encoder: %d iters, final mse %.5f", cfg.pretrain.iters,
           log.empty() ? 0.0 : double(log.back().mse));
}

// --------------------------------------------------------------- train-umt

void run_train_umt(cli::RunConfig cfg, const std::string& patches_dir,
                   const std::string& encoder_path, const std::string& resolved) {
  require_out(cfg);
  require(!patches_dir.empty(), Errc::config, "--patches DIR is required");
  require(!encoder_path.empty(), Errc::config, "--encoder CKPT is required");
  require_artifact(fs::path(patches_dir) / "materials.json", "patch corpus");
  require_artifact(encoder_path, "encoder checkpoint");
  const auto corpus = data::load_corpus(patches_dir);
  const auto content = pointers(corpus, corpus.select(data::Role::bonafide_train));

  MaterialId held_out = 0;
  if (!cfg.held_out.empty()) {
    held_out = corpus.material_id(cfg.held_out);
    require(held_out != 0, Errc::missing_material,
            "held-out material \"" + cfg.held_out + "\" not in corpus");
  }
  std::vector<const AlignedPatch*> style;
  for (uint32_t i : corpus.select(data::Role::spoof_train))
    if (corpus.patches[i].material != held_out) style.push_back(&corpus.patches[i]);

  engine::UmtGenerator gen(cfg.seed, cfg.gen);
  gen.restore(nn::load_checkpoint(encoder_path));
  gen.encoder.freeze();
  const auto log = engine::train_generator(gen, content, style, cfg.gen.iters, cfg.seed);

  fs::create_directories(cfg.out);
  nn::save_checkpoint(fs::path(cfg.out) / "generator.umtw", gen.snapshot());
  std::vector<std::string> lines{"iter,content_loss,style_loss,total_loss"};
  for (const auto& row : log)
    lines.push_back(std::to_string(row.iter) + "," + fmt_f(double(row.content)) + "," +
                    fmt_f(double(row.style)) + "," + fmt_f(double(row.total)));
  write_csv(fs::path(cfg.out) / "umt_log.csv", lines);
  cli::write_run_artifacts(cfg.out, "train-umt", cfg, resolved);
  log_info("train-umt: %d iters, final loss %.5f", cfg.gen.iters,
           log.empty() ? 0.0 : double(log.back().total));
}

// -------------------------------------------------------------- synthesize

void run_synthesize(cli::RunConfig cfg, const std::string& patches_dir,
                    const std::string& generator_path, const std::string& resolved) {
  require_out(cfg);
  require(!patches_dir.empty(), Errc::config, "--patches DIR is required");
  require(!generator_path.empty(), Errc::config, "--generator CKPT is required");
  require(!cfg.held_out.empty(), Errc::config,
          "--held-out MATERIAL selects the synthesis target");
  require_artifact(fs::path(patches_dir) / "materials.json", "patch corpus");
  require_artifact(generator_path, "generator checkpoint");

  const auto corpus = data::load_corpus(patches_dir);
  const MaterialId target = corpus.material_id(cfg.held_out);
  require(target != 0, Errc::missing_material,
          "material \"" + cfg.held_out + "\" not in corpus");
  const auto content = pointers(corpus, corpus.select(data::Role::bonafide_train));
  const auto style_idx =
      protocol::select_fewshot_patches(corpus, target, cfg.k_images, cfg.seed);
  const auto styles = pointers(corpus, style_idx);

  engine::UmtGenerator gen(cfg.seed, cfg.gen);
  gen.restore(nn::load_checkpoint(generator_path));
  gen.encoder.freeze();
  const auto result = engine::synthesize_corpus(gen, content, styles, cfg.synth_count, target,
                                                cfg.seed, cfg.jobs);

  fs::create_directories(cfg.out);
  data::save_patches(fs::path(cfg.out) / "synth.umtp", result.patches);
  json manifest;
  manifest["schema"] = 1;
  manifest["material"] = cfg.held_out;
  manifest["count"] = result.patches.size();
  json prov = json::array();
  for (const auto& p : result.provenance)
    prov.push_back({{"content_index", p.content_index}, {"style_index", p.style_index}});
  manifest["provenance"] = std::move(prov);
  json style_sources = json::array();
  for (uint32_t i : style_idx) style_sources.push_back(corpus.patches[i].source_id);
  manifest["style_source_ids"] = std::move(style_sources);
  write_json(fs::path(cfg.out) / "synth_manifest.json", manifest);
  cli::write_run_artifacts(cfg.out, "synthesize", cfg, resolved);
  log_info("synthesize: %zu patches in material %s", result.patches.size(),
           cfg.held_out.c_str());
}

// --------------------------------------------------------- train-classifier

void run_train_classifier(cli::RunConfig cfg, const std::string& patches_dir,
                          const std::vector<std::string>& extra_caches,
                          const std::string& resolved) {
  require_out(cfg);
  require(!patches_dir.empty(), Errc::config, "--patches DIR is required");
  require_artifact(fs::path(patches_dir) / "materials.json", "patch corpus");
  for (const auto& cache : extra_caches) require_artifact(cache, "patch cache");

  const auto corpus = data::load_corpus(patches_dir);
  MaterialId held_out = 0;
  if (!cfg.held_out.empty()) {
    held_out = corpus.material_id(cfg.held_out);
    require(held_out != 0, Errc::missing_material,
            "held-out material \"" + cfg.held_out + "\" not in corpus");
  }

  std::vector<const AlignedPatch*> train;
  for (uint32_t i : corpus.select(data::Role::bonafide_train)) train.push_back(&corpus.patches[i]);
  for (uint32_t i : corpus.select(data::Role::spoof_train))
    if (corpus.patches[i].material != held_out) train.push_back(&corpus.patches[i]);
  std::vector<std::vector<AlignedPatch>> extras;
  for (const auto& cache : extra_caches) extras.push_back(data::load_patches(cache));
  for (const auto& cache : extras)
    for (const auto& p : cache) train.push_back(&p);

  clf::ClassifierConfig clf_cfg = cfg.classifier;
  clf_cfg.seed = cfg.seed;
  const auto result = clf::train_classifier(train, clf_cfg);

  fs::create_directories(cfg.out);
  auto params = const_cast<clf::Classifier&>(result.model).params();
  nn::save_checkpoint(fs::path(cfg.out) / "classifier.umtw", nn::snapshot_params(params));
  for (size_t e = 0; e < result.epoch_checkpoints.size(); ++e) {
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03zu.umtw", e + 1);
    nn::save_checkpoint(fs::path(cfg.out) / name, result.epoch_checkpoints[e]);
  }
  std::vector<std::string> lines{"epoch,mean_loss"};
  for (const auto& row : result.log)
    lines.push_back(std::to_string(row.epoch) + "," + fmt_f(double(row.mean_loss)));
  write_csv(fs::path(cfg.out) / "classifier_log.csv", lines);
  cli::write_run_artifacts(cfg.out, "train-classifier", cfg, resolved);
  log_info("train-classifier: %zu patches, %d epochs", train.size(), clf_cfg.epochs);
}

// ----------------------------------------------------------------- evaluate

void run_evaluate(cli::RunConfig cfg, const std::string& classifier_path,
                  const std::string& bona_cache, const std::string& spoof_cache,
                  const std::string& resolved) {
  require_out(cfg);
  require(!classifier_path.empty() && !bona_cache.empty() && !spoof_cache.empty(), Errc::config,
          "--classifier, --bona and --spoof are required");
  require_artifact(classifier_path, "classifier checkpoint");
  require_artifact(bona_cache, "bonafide patch cache");
  require_artifact(spoof_cache, "spoof patch cache");

  const auto bona = data::load_patches(bona_cache);
  const auto spoof = data::load_patches(spoof_cache);
  clf::Classifier model(0);
  nn::restore_params(model.params(), nn::load_checkpoint(classifier_path));

  std::vector<const AlignedPatch*> all;
  for (const auto& p : bona) all.push_back(&p);
  for (const auto& p : spoof) all.push_back(&p);
  const auto scored = clf::score(model, all);

  std::vector<double> bona_scores, spoof_scores;
  std::vector<std::string> lines{"patch_index,truth,material,score"};
  for (size_t i = 0; i < scored.size(); ++i) {
    const auto& s = scored[i];
    const bool is_bona = s.truth == PatchLabel::bonafide;
    (is_bona ? bona_scores : spoof_scores).push_back(double(s.score));
    lines.push_back(std::to_string(i) + "," + (is_bona ? "bonafide" : "spoof") + "," +
                    std::to_string(s.material) + "," + fmt_f(double(s.score)));
  }
  const auto tdr = metrics::tdr_at_fdr(bona_scores, spoof_scores, cfg.fdr);

  fs::create_directories(cfg.out);
  write_csv(fs::path(cfg.out) / "scores.csv", lines);
  json m;
  m["schema"] = 1;
  m["fdr"] = cfg.fdr;
  m["tdr"] = tdr.tdr;
  m["tdr_pct"] = tdr.tdr * 100.0;
  m["threshold"] = tdr.threshold;
  m["bonafide_count"] = bona_scores.size();
  m["spoof_count"] = spoof_scores.size();
  write_json(fs::path(cfg.out) / "metrics.json", m);
  cli::write_run_artifacts(cfg.out, "evaluate", cfg, resolved);
  log_info("evaluate: TDR %.2f%% @ FDR %.4f", tdr.tdr * 100.0, cfg.fdr);
}

// --------------------------------------------------------------- experiment

json report_json(const protocol::ExperimentReport& r) {
  json j;
  j["schema"] = r.schema;
  j["held_out"] = r.held_out;
  j["arm"] = r.arm;
  j["eval"] = r.eval_kind;
  j["fdr"] = r.fdr;
  j["runs"] = r.runs;
  j["epochs"] = r.epochs;
  j["epoch_window"] = {r.epoch_lo, r.epoch_hi};
  j["tdr_pct"] = r.tdr_pct;
  j["mean_pct"] = r.mean_pct;
  j["std_pct"] = r.std_pct;
  return j;
}

std::vector<std::string> epochs_csv(const protocol::ExperimentReport& r) {
  std::vector<std::string> lines;
  std::string header = "epoch";
  for (int run = 0; run < r.runs; ++run) header += ",run" + std::to_string(run);
  header += ",mean";
  lines.push_back(header);
  for (int e = 0; e < r.epochs; ++e) {
    double sum = 0.0;
    std::string line = std::to_string(e + 1);
    for (int run = 0; run < r.runs; ++run) {
      const double v = r.tdr_pct[size_t(run)][size_t(e)];
      sum += v;
      line += "," + fmt_f(v);
    }
    line += "," + fmt_f(sum / double(r.runs));
    lines.push_back(line);
  }
  return lines;
}

void run_experiment(cli::RunConfig cfg, const std::string& corpus_dir,
                    const std::string& resolved) {
  require_out(cfg);
  require(!corpus_dir.empty(), Errc::config, "--corpus DIR is required");
  const auto manifest = data::ingest(corpus_dir);
  require(manifest.materials.size() >= 2, Errc::config,
          "experiment needs at least two spoof materials");

  log_info("experiment: preprocessing %zu images", manifest.entries.size());
  const auto corpus = data::preprocess_corpus(manifest, cfg.patch, cfg.seed, cfg.jobs);
  data::save_corpus(corpus, fs::path(cfg.out) / "patches");

  std::vector<std::string> materials = corpus.materials;
  if (!cfg.held_out.empty()) {
    require(corpus.material_id(cfg.held_out) != 0, Errc::missing_material,
            "held-out material \"" + cfg.held_out + "\" not in corpus");
    materials = {cfg.held_out};
  }
  std::vector<protocol::Arm> arms = {protocol::Arm::baseline, protocol::Arm::fewshot,
                                     protocol::Arm::augmented};
  if (!cfg.arm.empty()) arms = {protocol::arm_from_name(cfg.arm)};

  const auto pcfg = cfg.protocol_config();
  std::optional<engine::UmtGenerator> pretrained;
  if (std::count(arms.begin(), arms.end(), protocol::Arm::augmented)) {
    log_info("experiment: pretraining the shared encoder (%d iters)", cfg.pretrain.iters);
    pretrained = protocol::make_pretrained_generator(corpus, pcfg, cfg.seed);
  }

  std::vector<std::string> summary{
      "material,arm,eval,fdr,runs,epoch_lo,epoch_hi,mean_tdr_pct,std_tdr_pct"};
  for (const auto& material : materials) {
    for (protocol::Arm arm : arms) {
      log_info("experiment: material=%s arm=%s", material.c_str(), protocol::arm_name(arm));
      const auto plan = cfg.plan_for(material, arm);
      const auto result = protocol::run_protocol(corpus, plan, pcfg,
                                                 pretrained ? &*pretrained : nullptr);
      const fs::path dir = fs::path(cfg.out) / "reports" / material / protocol::arm_name(arm);
      fs::create_directories(dir);
      write_json(dir / "cross.json", report_json(result.cross));
      write_json(dir / "known.json", report_json(result.known));
      write_csv(dir / "cross_epochs.csv", epochs_csv(result.cross));
      write_csv(dir / "known_epochs.csv", epochs_csv(result.known));
      for (const auto* r : {&result.cross, &result.known}) {
        summary.push_back(material + "," + r->arm + "," + r->eval_kind + "," + fmt_f(r->fdr) +
                          "," + std::to_string(r->runs) + "," + std::to_string(r->epoch_lo) +
                          "," + std::to_string(r->epoch_hi) + "," + fmt_f(r->mean_pct) + "," +
                          fmt_f(r->std_pct));
      }
      log_info("  cross %.2f +/- %.2f | known %.2f +/- %.2f", result.cross.mean_pct,
               result.cross.std_pct, result.known.mean_pct, result.known.std_pct);
    }
  }
  write_csv(fs::path(cfg.out) / "summary.csv", summary);
  cli::write_run_artifacts(cfg.out, "experiment", cfg, resolved);
  log_info("experiment: summary written to %s/summary.csv", cfg.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Universal material translator: style-transfer spoof augmentation pipeline"};
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
  app.set_config("--config", "", "Configuration file (INI format)");
  app.require_subcommand(0, 1);

  cli::RunConfig cfg;
  cli::register_options(app, cfg);
  app.add_option("--out", cfg.out, "Output directory");

  std::string corpus_dir, patches_dir, encoder_path, generator_path, classifier_path;
  std::string bona_cache, spoof_cache;
  std::vector<std::string> extra_caches;

  auto* gen_toy = app.add_subcommand("gen-toy", "Generate the procedural toy corpus");
  auto* preprocess = app.add_subcommand("preprocess", "Segment, sample and align patches");
  preprocess->add_option("--corpus", corpus_dir, "Corpus root (manifest or convention)");
  auto* pretrain = app.add_subcommand("pretrain-encoder",
                                      "Pretrain the reconstruction autoencoder");
  pretrain->add_option("--patches", patches_dir, "Preprocessed patch directory");
  auto* train_umt = app.add_subcommand("train-umt", "Train the style-transfer generator");
  train_umt->add_option("--patches", patches_dir, "Preprocessed patch directory");
  train_umt->add_option("--encoder", encoder_path, "Pretrained encoder checkpoint");
  auto* synthesize = app.add_subcommand("synthesize", "Generate styled spoof patches");
  synthesize->add_option("--patches", patches_dir, "Preprocessed patch directory");
  synthesize->add_option("--generator", generator_path, "Trained generator checkpoint");
  auto* train_clf = app.add_subcommand("train-classifier", "Train the spoof classifier");
  train_clf->add_option("--patches", patches_dir, "Preprocessed patch directory");
  train_clf->add_option("--extra", extra_caches, "Additional patch caches to include");
  auto* evaluate = app.add_subcommand("evaluate", "Score caches and compute TDR@FDR");
  evaluate->add_option("--classifier", classifier_path, "Classifier checkpoint");
  evaluate->add_option("--bona", bona_cache, "Bonafide patch cache");
  evaluate->add_option("--spoof", spoof_cache, "Spoof patch cache");
  auto* experiment = app.add_subcommand("experiment",
                                        "Full leave-one-material-out protocol");
  experiment->add_option("--corpus", corpus_dir, "Corpus root (manifest or convention)");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::fprintf(stderr, "error: ConfigError: invalid command line or config file\n");
    return 2;
  }

  try {
    cfg.validate();
    const std::string resolved = app.config_to_str(true, true);
    if (gen_toy->parsed())
      run_gen_toy(cfg, resolved);
    else if (preprocess->parsed())
      run_preprocess(cfg, corpus_dir, resolved);
    else if (pretrain->parsed())
      run_pretrain(cfg, patches_dir, resolved);
    else if (train_umt->parsed())
      run_train_umt(cfg, patches_dir, encoder_path, resolved);
    else if (synthesize->parsed())
      run_synthesize(cfg, patches_dir, generator_path, resolved);
    else if (train_clf->parsed())
      run_train_classifier(cfg, patches_dir, extra_caches, resolved);
    else if (evaluate->parsed())
      run_evaluate(cfg, classifier_path, bona_cache, spoof_cache, resolved);
    else if (experiment->parsed())
      run_experiment(cfg, corpus_dir, resolved);
    else {
      std::fprintf(stderr, "%s\n", app.help().c_str());
      return 2;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: Runtime: %s\n", e.what());
    return 4;
  }
  return 0;
}
