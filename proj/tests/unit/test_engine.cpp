#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "conv_oracle.hpp"
#include "grad_check.hpp"
#include "umt/engine.hpp"

using namespace umt;
using namespace umt::testsup;
using nn::Tensor;

namespace {

AlignedPatch random_patch(Rng& rng) {
  AlignedPatch p;
  p.pixels.resize(size_t(kPatchPixels));
  for (auto& v : p.pixels) v = float(rng.uniform());
  return p;
}

std::vector<AlignedPatch> random_patches(Rng& rng, int n, PatchLabel label = PatchLabel::bonafide,
                                         MaterialId material = 0) {
  std::vector<AlignedPatch> out;
  for (int i = 0; i < n; ++i) {
    auto p = random_patch(rng);
    p.label = label;
    p.material = material;
    p.source_id = uint32_t(i);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<const AlignedPatch*> as_ptrs(const std::vector<AlignedPatch>& v) {
  std::vector<const AlignedPatch*> out;
  for (const auto& p : v) out.push_back(&p);
  return out;
}

}  // namespace

TEST_CASE("channel_stats on the worked 2x2 example") {
  auto x = Tensor<double>::leaf({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto st = engine::channel_stats(x, 0.0);
  CHECK(st.mean[0] == doctest::Approx(2.5));
  CHECK(st.stddev[0] == doctest::Approx(std::sqrt(1.25)));
}

TEST_CASE("channel_stats of a constant channel") {
  auto x = Tensor<double>::leaf({1, 2, 2, 2}, {0.7, 0.7, 0.7, 0.7, 0.2, 0.2, 0.2, 0.2});
  const auto st0 = engine::channel_stats(x, 0.0);
  CHECK(st0.mean[0] == doctest::Approx(0.7));
  CHECK(st0.stddev[0] == doctest::Approx(0.0));
  const auto st1 = engine::channel_stats(x, 1e-5);
  CHECK(st1.stddev[1] == doctest::Approx(std::sqrt(1e-5)));
}

TEST_CASE("instance_norm standardizes and applies the affine map") {
  // alpha=1,beta=0: output stats (0,1)
  Rng rng(3);
  auto x = random_leaf(rng, {1, 2, 4, 4}, false);
  engine::InstanceNormAffine<double> id{{1.0, 1.0}, {0.0, 0.0}};
  auto out = engine::instance_norm(x, id, 0.0);
  const auto st = engine::channel_stats(out, 0.0);
  for (int c = 0; c < 2; ++c) {
    CHECK(st.mean[size_t(c)] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(st.stddev[size_t(c)] == doctest::Approx(1.0).epsilon(1e-9));
  }

  // alpha=0: output is identically beta
  engine::InstanceNormAffine<double> flat{{0.0, 0.0}, {0.3, -0.9}};
  auto out2 = engine::instance_norm(x, flat, 0.0);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 16; ++i)
      CHECK(out2.val()[size_t(c) * 16 + size_t(i)] == doctest::Approx(c == 0 ? 0.3 : -0.9));
}

TEST_CASE("instance_norm on the worked 2x2 example with alpha 2 beta 1") {
  auto x = Tensor<double>::leaf({1, 1, 2, 2}, {1, 2, 3, 4});
  engine::InstanceNormAffine<double> affine{{2.0}, {1.0}};
  auto out = engine::instance_norm(x, affine, 0.0);
  const double sigma = std::sqrt(1.25);
  for (int i = 0; i < 4; ++i)
    CHECK(out.val()[size_t(i)] ==
          doctest::Approx(2.0 * ((1.0 + i) - 2.5) / sigma + 1.0).epsilon(1e-9));
  CHECK(out.val()[0] == doctest::Approx(-1.683281).epsilon(1e-5));
  CHECK(out.val()[2] == doctest::Approx(1.894427).epsilon(1e-5));
}

TEST_CASE("adain(x, x) is the identity within 1e-6") {
  Rng rng(5);
  auto x = random_leaf(rng, {1, 3, 6, 6}, false);
  auto out = engine::adain(x, x, 0.0);
  for (size_t i = 0; i < size_t(x.numel()); ++i)
    CHECK(out.val()[i] == doctest::Approx(x.val()[i]).epsilon(1e-6));
}

TEST_CASE("adain matches the per-channel arithmetic oracle") {
  auto x = Tensor<double>::leaf({1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = Tensor<double>::leaf({1, 1, 2, 2}, {0, 0, 0, 2});
  auto out = engine::adain(x, y, 0.0);
  CHECK(out.val()[0] == doctest::Approx(-0.661895).epsilon(1e-5));
  CHECK(out.val()[1] == doctest::Approx(0.112702).epsilon(1e-5));
  CHECK(out.val()[2] == doctest::Approx(0.887298).epsilon(1e-5));
  CHECK(out.val()[3] == doctest::Approx(1.661895).epsilon(1e-5));
}

TEST_CASE("adain transplants the style statistics") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const int C = 1 + int(rng.uniform_int(4));
    const int hx = 2 + int(rng.uniform_int(8)), wx = 2 + int(rng.uniform_int(8));
    const int hy = 2 + int(rng.uniform_int(8)), wy = 2 + int(rng.uniform_int(8));
    auto x = random_leaf(rng, {2, C, hx, wx}, false);
    auto y = random_leaf(rng, {2, C, hy, wy}, false);
    auto out = engine::adain(x, y, 0.0);
    const auto so = engine::channel_stats(out, 0.0);
    const auto sy = engine::channel_stats(y, 0.0);
    for (size_t i = 0; i < so.mean.size(); ++i) {
      CHECK(so.mean[i] == doctest::Approx(sy.mean[i]).epsilon(1e-5));
      CHECK(so.stddev[i] == doctest::Approx(sy.stddev[i]).epsilon(1e-5));
    }
    // composition: stats of adain(adain(x,y),z) follow z
    auto z = random_leaf(rng, {2, C, hx, wx}, false);
    const auto so2 = engine::channel_stats(engine::adain(out, z, 0.0), 0.0);
    const auto sz = engine::channel_stats(z, 0.0);
    for (size_t i = 0; i < so2.mean.size(); ++i) {
      CHECK(so2.mean[i] == doctest::Approx(sz.mean[i]).epsilon(1e-5));
      CHECK(so2.stddev[i] == doctest::Approx(sz.stddev[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("encoder taps have the contracted shapes and are deterministic") {
  engine::UmtGenerator gen(42, {});
  Rng rng(9);
  const auto patch = random_patch(rng);
  const auto taps = gen.encoder.taps(engine::patch_to_tensor(patch));
  for (int i = 0; i < 4; ++i) {
    const auto& s = taps.taps[size_t(i)].shape();
    CHECK(s[0] == 1);
    CHECK(s[1] == engine::kTapChannels[size_t(i)]);
    CHECK(s[2] == engine::kTapResolutions[size_t(i)]);
    CHECK(s[3] == engine::kTapResolutions[size_t(i)]);
  }
  const auto taps2 = gen.encoder.taps(engine::patch_to_tensor(patch));
  for (int i = 0; i < 4; ++i)
    for (size_t j = 0; j < size_t(taps.taps[size_t(i)].numel()); ++j)
      CHECK(taps.taps[size_t(i)].val()[j] == taps2.taps[size_t(i)].val()[j]);
}

TEST_CASE("zero input propagates biases exactly as the naive conv oracle says") {
  engine::UmtGenerator gen(7, {});
  AlignedPatch zero;
  zero.pixels.assign(size_t(kPatchPixels), 0.f);
  const auto taps = gen.encoder.taps(engine::patch_to_tensor(zero));

  // independent route: naive conv + relu + average pooling on plain vectors
  std::vector<float> current(size_t(kPatchPixels), 0.f);
  int ch = 1, res = kPatchSide;
  const nn::Conv3x3* convs[4] = {&gen.encoder.c1, &gen.encoder.c2, &gen.encoder.c3,
                                 &gen.encoder.c4};
  for (int stage = 0; stage < 4; ++stage) {
    if (stage > 0) {
      // 2x average pooling
      const int half = res / 2;
      std::vector<float> pooled(size_t(ch) * half * half);
      for (int c = 0; c < ch; ++c)
        for (int y = 0; y < half; ++y)
          for (int x = 0; x < half; ++x) {
            const float* base = current.data() + size_t(c) * res * res;
            pooled[(size_t(c) * half + y) * half + x] =
                0.25f * (base[size_t(2 * y) * res + 2 * x] + base[size_t(2 * y) * res + 2 * x + 1] +
                         base[size_t(2 * y + 1) * res + 2 * x] +
                         base[size_t(2 * y + 1) * res + 2 * x + 1]);
          }
      current = std::move(pooled);
      res = half;
    }
    const auto& conv = *convs[stage];
    const int cout = conv.weight.tensor.shape()[0];
    current = conv2d_oracle<float>(current, 1, ch, res, res,
                                   {conv.weight.tensor.val().begin(),
                                    conv.weight.tensor.val().end()},
                                   cout, 3,
                                   {conv.bias.tensor.val().begin(), conv.bias.tensor.val().end()},
                                   nn::Padding::zero);
    for (auto& v : current) v = std::max(v, 0.f);
    ch = cout;
    const auto& tap = taps.taps[size_t(stage)];
    REQUIRE(size_t(tap.numel()) == current.size());
    for (size_t i = 0; i < current.size(); ++i)
      CHECK(tap.val()[i] == doctest::Approx(current[i]).epsilon(1e-4));
  }
}

TEST_CASE("style loss is zero on identical taps and |delta| on a mean shift") {
  Rng rng(11);
  std::vector<Tensor<double>> taps;
  for (int i = 0; i < 4; ++i) taps.push_back(random_leaf(rng, {1, 3, 4, 4}, false));
  auto zero = engine::style_loss(taps, taps, 0.0);
  CHECK(zero.val()[0] == doctest::Approx(0.0));

  // shift channel 1 of tap 2 by +delta: only the mean term reacts
  const double delta = 0.37;
  std::vector<Tensor<double>> shifted = taps;
  {
    std::vector<double> v(taps[2].val().begin(), taps[2].val().end());
    for (int i = 0; i < 16; ++i) v[16 + size_t(i)] += delta;
    shifted[2] = Tensor<double>::leaf({1, 3, 4, 4}, std::move(v));
  }
  auto loss = engine::style_loss(shifted, taps, 0.0);
  CHECK(loss.val()[0] == doctest::Approx(delta).epsilon(1e-9));
}

TEST_CASE("style loss equals its channel-stats recomposition") {
  Rng rng(13);
  const double eps = 1e-5;
  std::vector<Tensor<double>> g, s;
  for (int i = 0; i < 4; ++i) {
    g.push_back(random_leaf(rng, {1, 4, 5, 5}, false));
    s.push_back(random_leaf(rng, {1, 4, 7, 3}, false));
  }
  auto loss = engine::style_loss(g, s, eps);
  double expect = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto sg = engine::channel_stats(g[size_t(i)], eps);
    const auto ss = engine::channel_stats(s[size_t(i)], eps);
    double m2 = 0.0, s2 = 0.0;
    for (size_t c = 0; c < sg.mean.size(); ++c) {
      m2 += (sg.mean[c] - ss.mean[c]) * (sg.mean[c] - ss.mean[c]);
      s2 += (sg.stddev[c] - ss.stddev[c]) * (sg.stddev[c] - ss.stddev[c]);
    }
    expect += std::sqrt(m2) + std::sqrt(s2);
  }
  CHECK(loss.val()[0] == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("content loss is the plain euclidean distance") {
  auto a = Tensor<double>::leaf({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(engine::content_loss(a, a).val()[0] == doctest::Approx(0.0));
  auto b = Tensor<double>::leaf({1, 1, 2, 2}, {1, 2, 6, 4});
  CHECK(engine::content_loss(a, b).val()[0] == doctest::Approx(3.0));

  Rng rng(15);
  auto x = random_leaf(rng, {1, 3, 4, 4}, false);
  auto y = random_leaf(rng, {1, 3, 4, 4}, false);
  double ss = 0.0;
  for (size_t i = 0; i < size_t(x.numel()); ++i) {
    const double d = x.val()[i] - y.val()[i];
    ss += d * d;
  }
  CHECK(engine::content_loss(x, y).val()[0] == doctest::Approx(std::sqrt(ss)));
}

TEST_CASE("finite differences validate instance_norm, adain and the losses") {
  Rng rng(17);
  for (int cfg = 0; cfg < 4; ++cfg) {
    const int C = 1 + int(rng.uniform_int(3));
    const int H = 2 + int(rng.uniform_int(5)), W = 2 + int(rng.uniform_int(5));

    auto x = random_leaf(rng, {1, C, H, W});
    engine::InstanceNormAffine<double> affine;
    for (int c = 0; c < C; ++c) {
      affine.scale.push_back(rng.uniform(0.5, 2.0));
      affine.shift.push_back(rng.uniform(-1.0, 1.0));
    }
    const auto pw = projection_weights(rng, int64_t(C) * H * W);
    auto res = check_gradients(rng, {&x}, [&] {
      return project_to_scalar(engine::instance_norm(x, affine, 1e-5), pw);
    });
    CHECK(res.failures == 0);

    auto y = random_leaf(rng, {1, C, H + 1, W + 2});
    auto res2 = check_gradients(rng, {&x, &y}, [&] {
      return project_to_scalar(engine::adain(x, y, 1e-5), pw);
    });
    CHECK(res2.failures == 0);

    std::vector<Tensor<double>> g{random_leaf(rng, {1, C, H, W}),
                                  random_leaf(rng, {1, C + 1, H, W})};
    std::vector<Tensor<double>> s{random_leaf(rng, {1, C, H, W}),
                                  random_leaf(rng, {1, C + 1, H, W})};
    auto res3 = check_gradients(rng, {&g[0], &g[1], &s[0], &s[1]},
                                [&] { return engine::style_loss(g, s, 1e-5); });
    CHECK(res3.failures == 0);

    auto t = random_leaf(rng, {1, C, H, W});
    auto res4 =
        check_gradients(rng, {&x, &t}, [&] { return engine::content_loss(x, t); });
    CHECK(res4.failures == 0);
  }
}

TEST_CASE("translate is deterministic and returns the adain target") {
  engine::UmtGenerator gen(21, {});
  Rng rng(19);
  const auto c = random_patch(rng);
  const auto s = random_patch(rng);
  auto [synth1, t1] = engine::translate(gen, engine::patch_to_tensor(c),
                                        engine::patch_to_tensor(s));
  auto [synth2, t2] = engine::translate(gen, engine::patch_to_tensor(c),
                                        engine::patch_to_tensor(s));
  CHECK(synth1.shape() == nn::Shape{1, 1, 96, 96});
  for (size_t i = 0; i < size_t(synth1.numel()); ++i)
    CHECK(synth1.val()[i] == synth2.val()[i]);
  for (size_t i = 0; i < size_t(t1.numel()); ++i) CHECK(t1.val()[i] == t2.val()[i]);
}

TEST_CASE("train_generator with zero iterations changes nothing and logs nothing") {
  engine::UmtGenerator gen(23, {});
  gen.encoder.freeze();
  Rng rng(25);
  const auto content = random_patches(rng, 3);
  const auto style = random_patches(rng, 3, PatchLabel::spoof, 1);
  const auto before = nn::params_checksum(gen.all_params());
  const auto log = engine::train_generator(gen, as_ptrs(content), as_ptrs(style), 0, 1);
  CHECK(log.empty());
  CHECK(nn::params_checksum(gen.all_params()) == before);
}

TEST_CASE("train_generator updates the decoder only and replays per seed") {
  Rng rng(27);
  const auto content = random_patches(rng, 4);
  const auto style = random_patches(rng, 4, PatchLabel::spoof, 1);

  auto run = [&](uint64_t seed) {
    engine::UmtGenerator gen(29, {});
    gen.encoder.freeze();
    const auto enc_before = nn::params_checksum(gen.encoder.params());
    const auto dec_before = nn::params_checksum(gen.decoder.params());
    const auto log = engine::train_generator(gen, as_ptrs(content), as_ptrs(style), 5, seed);
    CHECK(log.size() == 5);
    CHECK(nn::params_checksum(gen.encoder.params()) == enc_before);
    CHECK(nn::params_checksum(gen.decoder.params()) != dec_before);
    std::vector<float> flat;
    for (const auto& row : log) {
      flat.push_back(row.content);
      flat.push_back(row.style);
      flat.push_back(row.total);
    }
    return flat;
  };
  CHECK(run(77) == run(77));
  CHECK(run(77) != run(78));
}

TEST_CASE("train_generator requires a frozen encoder") {
  engine::UmtGenerator gen(31, {});
  Rng rng(33);
  const auto content = random_patches(rng, 2);
  const auto style = random_patches(rng, 2, PatchLabel::spoof, 1);
  CHECK_THROWS_AS(engine::train_generator(gen, as_ptrs(content), as_ptrs(style), 1, 1), Error);
}

TEST_CASE("decoder gradients flow on a random training step") {
  engine::UmtGenerator gen(35, {});
  gen.encoder.freeze();
  Rng rng(37);
  const auto c = random_patch(rng);
  const auto s = random_patch(rng);
  auto [synth, t] = engine::translate(gen, engine::patch_to_tensor(c),
                                      engine::patch_to_tensor(s));
  const auto synth_taps = gen.encoder.taps(synth);
  const auto style_taps = gen.encoder.taps(engine::patch_to_tensor(s));
  auto loss = nn::add(
      nn::mul_scalar(engine::content_loss(synth_taps.deepest(), t), gen.config.lambda_c),
      nn::mul_scalar(engine::style_loss(synth_taps.as_vector(), style_taps.as_vector(),
                                        gen.config.eps),
                     gen.config.lambda_s));
  nn::backward(loss);
  bool any_nonzero = false;
  for (nn::Param* p : gen.decoder.params()) {
    if (!p->tensor.has_grad()) continue;
    for (float g : p->tensor.grad())
      if (g != 0.f) any_nonzero = true;
  }
  CHECK(any_nonzero);
  for (nn::Param* p : gen.encoder.params()) CHECK_FALSE(p->tensor.has_grad());
}

TEST_CASE("pretraining throws on an empty corpus and runs zero iterations as a no-op") {
  engine::UmtGenerator gen(39, {});
  CHECK_THROWS_AS(engine::pretrain_encoder(gen, {}, {}, 1), Error);
  Rng rng(41);
  const auto corpus = random_patches(rng, 2);
  const auto before = nn::params_checksum(gen.all_params());
  engine::PretrainConfig cfg;
  cfg.iters = 0;
  engine::pretrain_encoder(gen, as_ptrs(corpus), cfg, 1);
  CHECK(nn::params_checksum(gen.all_params()) == before);
}

TEST_CASE("synthesize_corpus tags, clamps and replays deterministically") {
  engine::UmtGenerator gen(43, {});
  gen.encoder.freeze();
  Rng rng(45);
  const auto content = random_patches(rng, 5);
  const auto styles = random_patches(rng, 6, PatchLabel::spoof, 2);

  CHECK(engine::synthesize_corpus(gen, as_ptrs(content), as_ptrs(styles), 0, 2, 9).patches.empty());

  const auto a = engine::synthesize_corpus(gen, as_ptrs(content), as_ptrs(styles), 24, 2, 9, 1);
  const auto b = engine::synthesize_corpus(gen, as_ptrs(content), as_ptrs(styles), 24, 2, 9, 3);
  REQUIRE(a.patches.size() == 24);
  for (size_t i = 0; i < 24; ++i) {
    CHECK(a.patches[i].pixels == b.patches[i].pixels);  // jobs-invariant
    CHECK(a.patches[i].label == PatchLabel::synthesized_spoof);
    CHECK(a.patches[i].material == 2);
    for (float v : a.patches[i].pixels) {
      CHECK(v >= 0.f);
      CHECK(v <= 1.f);
    }
    CHECK(a.provenance[i].content_index < 5);
    CHECK(a.provenance[i].style_index < 6);
    CHECK(a.patches[i].source_id == content[a.provenance[i].content_index].source_id);
  }
}
