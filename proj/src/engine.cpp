#include "umt/engine.hpp"

#include <algorithm>
#include <cmath>

#include "umt/parallel.hpp"

namespace umt::engine {

using nn::Tensor;

EncoderTaps Encoder::taps(const Tensor<float>& x) const {
  const nn::Shape& s = x.shape();
  require(s.size() == 4 && s[1] == 1 && s[2] == kTapResolutions[0] && s[3] == kTapResolutions[0],
          Errc::shape, "encoder input must be [N,1,96,96], got " + nn::shape_str(s));
  EncoderTaps out;
  out.taps[0] = nn::relu(c1(x));
  out.taps[1] = nn::relu(c2(nn::avg_pool2(out.taps[0])));
  out.taps[2] = nn::relu(c3(nn::avg_pool2(out.taps[1])));
  out.taps[3] = nn::relu(c4(nn::avg_pool2(out.taps[2])));
  return out;
}

std::vector<nn::Param*> Encoder::params() {
  std::vector<nn::Param*> out;
  c1.collect(out);
  c2.collect(out);
  c3.collect(out);
  c4.collect(out);
  return out;
}

void Encoder::freeze() {
  for (nn::Param* p : params()) p->set_trainable(false);
}

bool Encoder::frozen() const {
  auto* self = const_cast<Encoder*>(this);
  for (nn::Param* p : self->params())
    if (p->trainable) return false;
  return true;
}

Tensor<float> Decoder::forward(const Tensor<float>& t) const {
  auto x = nn::upsample_nearest2(nn::relu(d1(t)));
  x = nn::upsample_nearest2(nn::relu(d2(x)));
  x = nn::upsample_nearest2(nn::relu(d3(x)));
  return d4(x);
}

std::vector<nn::Param*> Decoder::params() {
  std::vector<nn::Param*> out;
  d1.collect(out);
  d2.collect(out);
  d3.collect(out);
  d4.collect(out);
  return out;
}

UmtGenerator::UmtGenerator(uint64_t seed, GeneratorConfig cfg) : config(cfg) {
  config.validate();
  Rng rng(mix_seed(seed, 0x0e5cu));
  encoder = Encoder(rng);
  decoder = Decoder(rng);
}

std::vector<nn::Param*> UmtGenerator::all_params() {
  auto out = encoder.params();
  auto dec = decoder.params();
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

std::vector<nn::NamedTensor> UmtGenerator::snapshot() { return nn::snapshot_params(all_params()); }

void UmtGenerator::restore(const std::vector<nn::NamedTensor>& snap) {
  nn::restore_params(all_params(), snap);
}

Tensor<float> patch_to_tensor(const AlignedPatch& p) {
  require(p.pixels.size() == size_t(kPatchPixels), Errc::shape, "patch must be 96x96");
  return Tensor<float>::leaf({1, 1, kPatchSide, kPatchSide},
                             std::vector<float>(p.pixels.begin(), p.pixels.end()));
}

Tensor<float> patches_to_tensor(const std::vector<const AlignedPatch*>& patches, size_t begin,
                                size_t end) {
  require(begin < end && end <= patches.size(), Errc::precondition, "bad batch range");
  const size_t n = end - begin;
  std::vector<float> values(n * kPatchPixels);
  for (size_t i = 0; i < n; ++i) {
    const AlignedPatch& p = *patches[begin + i];
    require(p.pixels.size() == size_t(kPatchPixels), Errc::shape, "patch must be 96x96");
    std::copy(p.pixels.begin(), p.pixels.end(), values.begin() + i * kPatchPixels);
  }
  return Tensor<float>::leaf({int(n), 1, kPatchSide, kPatchSide}, std::move(values));
}

std::pair<Tensor<float>, Tensor<float>> translate(const UmtGenerator& gen,
                                                  const Tensor<float>& content,
                                                  const Tensor<float>& style) {
  const EncoderTaps content_taps = gen.encoder.taps(content);
  const EncoderTaps style_taps = gen.encoder.taps(style);
  auto t = adain(content_taps.deepest(), style_taps.deepest(), gen.config.eps);
  auto synth = gen.decoder.forward(t);
  return {synth, t};
}

std::vector<PretrainLogRow> pretrain_encoder(UmtGenerator& gen,
                                             const std::vector<const AlignedPatch*>& corpus,
                                             const PretrainConfig& cfg, uint64_t seed) {
  require(!corpus.empty(), Errc::empty_corpus, "pretraining corpus is empty");
  require(cfg.iters >= 0 && cfg.batch >= 1 && cfg.lr > 0.f, Errc::config,
          "bad pretraining config");
  nn::Adam opt(gen.all_params(), cfg.lr);
  Rng rng(mix_seed(seed, 0xae0u));
  std::vector<PretrainLogRow> log;
  log.reserve(size_t(cfg.iters));
  for (int iter = 1; iter <= cfg.iters; ++iter) {
    std::vector<const AlignedPatch*> batch(static_cast<size_t>(cfg.batch));
    for (auto& p : batch) p = corpus[rng.uniform_int(corpus.size())];
    auto x = patches_to_tensor(batch, 0, batch.size());
    auto recon = gen.decoder.forward(gen.encoder.taps(x).deepest());
    auto diff = nn::sub(recon, x);
    auto loss = nn::mul_scalar(nn::sum_all(nn::mul(diff, diff)), 1.f / float(x.numel()));
    nn::backward(loss);
    opt.step();
    log.push_back({iter, loss.val()[0]});
  }
  return log;
}

std::vector<GeneratorLogRow> train_generator(UmtGenerator& gen,
                                             const std::vector<const AlignedPatch*>& content,
                                             const std::vector<const AlignedPatch*>& style,
                                             int iters, uint64_t seed) {
  require(!content.empty(), Errc::empty_corpus, "content corpus is empty");
  require(!style.empty(), Errc::empty_corpus, "style corpus is empty");
  require(gen.encoder.frozen(), Errc::precondition,
          "encoder must be pretrained and frozen before generator training");
  gen.config.validate();

  nn::Adam opt(gen.decoder.params(), gen.config.lr);
  Rng rng(mix_seed(seed, 0x9e0u));
  std::vector<GeneratorLogRow> log;
  log.reserve(size_t(std::max(iters, 0)));
  for (int iter = 1; iter <= iters; ++iter) {
    const AlignedPatch& c = *content[rng.uniform_int(content.size())];
    const AlignedPatch& s = *style[rng.uniform_int(style.size())];
    auto content_tensor = patch_to_tensor(c);
    auto style_tensor = patch_to_tensor(s);

    const EncoderTaps content_taps = gen.encoder.taps(content_tensor);
    const EncoderTaps style_taps = gen.encoder.taps(style_tensor);
    auto t = adain(content_taps.deepest(), style_taps.deepest(), gen.config.eps);
    auto synth = gen.decoder.forward(t);
    const EncoderTaps synth_taps = gen.encoder.taps(synth);

    auto lc = content_loss(synth_taps.deepest(), t);
    auto ls = style_loss(synth_taps.as_vector(), style_taps.as_vector(), gen.config.eps);
    auto total = nn::add(nn::mul_scalar(lc, gen.config.lambda_c),
                         nn::mul_scalar(ls, gen.config.lambda_s));
    nn::backward(total);
    opt.step();
    log.push_back({iter, lc.val()[0], ls.val()[0], total.val()[0]});
  }
  return log;
}

SynthesisResult synthesize_corpus(const UmtGenerator& gen,
                                  const std::vector<const AlignedPatch*>& content,
                                  const std::vector<const AlignedPatch*>& styles, int count,
                                  MaterialId target_material, uint64_t seed, int jobs) {
  require(!styles.empty(), Errc::empty_corpus, "style set is empty");
  require(!content.empty(), Errc::empty_corpus, "content corpus is empty");
  require(count >= 0, Errc::precondition, "negative synthesis count");
  require(target_material != 0, Errc::missing_material,
          "synthesized patches need a target material");

  SynthesisResult result;
  result.patches.resize(size_t(count));
  result.provenance.resize(size_t(count));

  // Style encodings are reused across outputs; the graph is inference-only
  // for the frozen encoder so the cached taps are plain values.
  std::vector<Tensor<float>> style_deep(styles.size());
  for (size_t i = 0; i < styles.size(); ++i)
    style_deep[i] = gen.encoder.taps(patch_to_tensor(*styles[i])).deepest();

  parallel_for(jobs, count, [&](int j) {
    Rng rng(mix_seed(seed, uint64_t(j), 0x517u));
    const uint32_t ci = uint32_t(rng.uniform_int(content.size()));
    const uint32_t si = uint32_t(rng.uniform_int(styles.size()));
    auto content_tensor = patch_to_tensor(*content[ci]);
    auto t = adain(gen.encoder.taps(content_tensor).deepest(), style_deep[si], gen.config.eps);
    auto synth = gen.decoder.forward(t);

    AlignedPatch& out = result.patches[size_t(j)];
    out.pixels.resize(size_t(kPatchPixels));
    const auto v = synth.val();
    for (int i = 0; i < kPatchPixels; ++i) out.pixels[size_t(i)] = std::clamp(v[i], 0.f, 1.f);
    out.label = PatchLabel::synthesized_spoof;
    out.material = target_material;
    out.source_id = content[ci]->source_id;
    out.rotation_applied = 0.f;
    out.validate();
    result.provenance[size_t(j)] = {ci, si};
  });
  return result;
}

}  // namespace umt::engine
