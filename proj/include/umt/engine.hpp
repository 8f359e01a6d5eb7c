#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "umt/nn.hpp"
#include "umt/patch.hpp"

namespace umt::engine {

/// Per-sample, per-channel spatial mean and sqrt(population variance + eps).
struct ChannelStats {
  int batch = 0;
  int channels = 0;
  std::vector<double> mean;    // batch * channels, row-major
  std::vector<double> stddev;  // same layout
};

template <typename T>
ChannelStats channel_stats(const nn::Tensor<T>& x, double eps) {
  const nn::Shape& s = x.shape();
  require(s.size() == 4, Errc::shape, "channel_stats input must be [N,C,H,W]");
  const int N = s[0], C = s[1];
  const int64_t hw = int64_t(s[2]) * s[3];
  require(hw >= 1, Errc::precondition, "channel_stats needs at least one spatial sample");
  ChannelStats st;
  st.batch = N;
  st.channels = C;
  st.mean.resize(size_t(N) * C);
  st.stddev.resize(size_t(N) * C);
  const T* v = x.val().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const T* src = v + size_t(nc) * hw;
    double sum = 0.0;
    for (int64_t i = 0; i < hw; ++i) sum += double(src[i]);
    const double mu = sum / double(hw);
    double var = 0.0;
    for (int64_t i = 0; i < hw; ++i) {
      const double d = double(src[i]) - mu;
      var += d * d;
    }
    st.mean[nc] = mu;
    st.stddev[nc] = std::sqrt(var / double(hw) + eps);
  }
  return st;
}

namespace detail {

/// Differentiable (mean, std) over spatial dims as graph ops: [N,C] each.
template <typename T>
std::pair<nn::Tensor<T>, nn::Tensor<T>> spatial_stats(const nn::Tensor<T>& x, T eps) {
  auto mean = nn::spatial_mean(x);
  auto centered = nn::sub(x, nn::broadcast_spatial(mean, x.shape()[2], x.shape()[3]));
  auto variance = nn::spatial_mean(nn::mul(centered, centered));
  auto stddev = nn::sqrt_t(nn::add_scalar(variance, eps));
  return {mean, stddev};
}

}  // namespace detail

/// Per-channel affine parameters for instance normalization.
template <typename T>
struct InstanceNormAffine {
  std::vector<T> scale;  // alpha, length C
  std::vector<T> shift;  // beta, length C
};

/// IN(x) = alpha * (x - mu(x)) / sigma(x) + beta, per sample per channel.
template <typename T>
nn::Tensor<T> instance_norm(const nn::Tensor<T>& x, const InstanceNormAffine<T>& affine, T eps) {
  const nn::Shape& s = x.shape();
  require(s.size() == 4, Errc::shape, "instance_norm input must be [N,C,H,W]");
  const int N = s[0], C = s[1], H = s[2], W = s[3];
  require(int(affine.scale.size()) == C && int(affine.shift.size()) == C, Errc::shape,
          "affine parameter length must equal channel count");
  auto [mean, stddev] = detail::spatial_stats(x, eps);
  auto normalized = nn::divt(nn::sub(x, nn::broadcast_spatial(mean, H, W)),
                             nn::broadcast_spatial(stddev, H, W));
  std::vector<T> scale_nc(size_t(N) * C), shift_nc(size_t(N) * C);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      scale_nc[size_t(n) * C + c] = affine.scale[size_t(c)];
      shift_nc[size_t(n) * C + c] = affine.shift[size_t(c)];
    }
  auto scale = nn::broadcast_spatial(nn::Tensor<T>::leaf({N, C}, std::move(scale_nc)), H, W);
  auto shift = nn::broadcast_spatial(nn::Tensor<T>::leaf({N, C}, std::move(shift_nc)), H, W);
  return nn::add(nn::mul(normalized, scale), shift);
}

/// AdaIN(x, y) = sigma(y) * (x - mu(x)) / sigma(x) + mu(y). The content
/// feature map x adopts the style map y's channel statistics; spatial sizes
/// may differ. Differentiable in both arguments.
template <typename T>
nn::Tensor<T> adain(const nn::Tensor<T>& x, const nn::Tensor<T>& y, T eps) {
  require(x.shape().size() == 4 && y.shape().size() == 4, Errc::shape,
          "adain inputs must be [N,C,H,W]");
  require(x.shape()[0] == y.shape()[0] && x.shape()[1] == y.shape()[1], Errc::shape,
          "adain batch/channel mismatch: " + nn::shape_str(x.shape()) + " vs " +
              nn::shape_str(y.shape()));
  const int H = x.shape()[2], W = x.shape()[3];
  auto [mx, sx] = detail::spatial_stats(x, eps);
  auto [my, sy] = detail::spatial_stats(y, eps);
  auto normalized = nn::divt(nn::sub(x, nn::broadcast_spatial(mx, H, W)),
                             nn::broadcast_spatial(sx, H, W));
  return nn::add(nn::mul(normalized, nn::broadcast_spatial(sy, H, W)),
                 nn::broadcast_spatial(my, H, W));
}

/// Sum over taps of ||mu_g - mu_s||_2 + ||sigma_g - sigma_s||_2 where the
/// norms run over the per-channel statistic vectors of each tap.
template <typename T>
nn::Tensor<T> style_loss(const std::vector<nn::Tensor<T>>& synth_taps,
                         const std::vector<nn::Tensor<T>>& style_taps, T eps) {
  require(!synth_taps.empty() && synth_taps.size() == style_taps.size(), Errc::shape,
          "style_loss needs matching tap lists");
  nn::Tensor<T> total;
  for (size_t i = 0; i < synth_taps.size(); ++i) {
    require(synth_taps[i].shape()[0] == style_taps[i].shape()[0] &&
                synth_taps[i].shape()[1] == style_taps[i].shape()[1],
            Errc::shape, "style_loss tap " + std::to_string(i) + " channel mismatch");
    auto [mg, sg] = detail::spatial_stats(synth_taps[i], eps);
    auto [ms, ss] = detail::spatial_stats(style_taps[i], eps);
    auto term = nn::add(nn::norm2(nn::sub(mg, ms)), nn::norm2(nn::sub(sg, ss)));
    total = total.defined() ? nn::add(total, term) : term;
  }
  return total;
}

/// Euclidean distance over all elements between the re-encoded synthesis
/// and its AdaIN target t.
template <typename T>
nn::Tensor<T> content_loss(const nn::Tensor<T>& synth_deep_tap, const nn::Tensor<T>& target) {
  require(synth_deep_tap.shape() == target.shape(), Errc::shape,
          "content_loss shape mismatch");
  return nn::norm2(nn::sub(synth_deep_tap, target));
}

/// The L = 4 encoder taps at resolutions 96/48/24/12 with channels
/// 8/16/32/64.
struct EncoderTaps {
  std::array<nn::Tensor<float>, 4> taps;
  const nn::Tensor<float>& deepest() const { return taps[3]; }
  std::vector<nn::Tensor<float>> as_vector() const { return {taps.begin(), taps.end()}; }
};

inline constexpr std::array<int, 4> kTapChannels = {8, 16, 32, 64};
inline constexpr std::array<int, 4> kTapResolutions = {96, 48, 24, 12};

/// Four conv3x3+relu stages with 2x average pooling between them.
/// Zero padding throughout the encoder.
struct Encoder {
  nn::Conv3x3 c1, c2, c3, c4;

  Encoder() = default;
  explicit Encoder(Rng& rng)
      : c1("enc1", 1, kTapChannels[0], nn::Padding::zero, rng),
        c2("enc2", kTapChannels[0], kTapChannels[1], nn::Padding::zero, rng),
        c3("enc3", kTapChannels[1], kTapChannels[2], nn::Padding::zero, rng),
        c4("enc4", kTapChannels[2], kTapChannels[3], nn::Padding::zero, rng) {}

  EncoderTaps taps(const nn::Tensor<float>& x) const;
  std::vector<nn::Param*> params();
  void freeze();
  bool frozen() const;
};

/// Mirror of the encoder with reflect padding and nearest upsampling;
/// the last convolution is linear (no relu) so outputs are unconstrained
/// until emission-time clamping.
struct Decoder {
  nn::Conv3x3 d1, d2, d3, d4;

  Decoder() = default;
  explicit Decoder(Rng& rng)
      : d1("dec1", kTapChannels[3], kTapChannels[2], nn::Padding::reflect, rng),
        d2("dec2", kTapChannels[2], kTapChannels[1], nn::Padding::reflect, rng),
        d3("dec3", kTapChannels[1], kTapChannels[0], nn::Padding::reflect, rng),
        d4("dec4", kTapChannels[0], 1, nn::Padding::reflect, rng) {}

  nn::Tensor<float> forward(const nn::Tensor<float>& t) const;
  std::vector<nn::Param*> params();
};

struct GeneratorConfig {
  float lambda_c = 1.0f;
  float lambda_s = 10.0f;
  float eps = 1e-5f;
  float lr = 1e-5f;
  int iters = 20000;

  void validate() const {
    require(lambda_c >= 0.f && lambda_s >= 0.f, Errc::config, "loss weights must be >= 0");
    require(eps > 0.f, Errc::config, "eps must be > 0");
    require(lr > 0.f && iters >= 0, Errc::config, "bad generator lr/iters");
  }
};

struct PretrainConfig {
  int iters = 6000;
  float lr = 1e-3f;
  int batch = 1;
};

/// Enc + AdaIN + Dec. The encoder must be pretrained and frozen before
/// generator training.
struct UmtGenerator {
  Encoder encoder;
  Decoder decoder;
  GeneratorConfig config;

  UmtGenerator() = default;
  UmtGenerator(uint64_t seed, GeneratorConfig cfg);
  std::vector<nn::Param*> all_params();
  std::vector<nn::NamedTensor> snapshot();
  void restore(const std::vector<nn::NamedTensor>& snap);
};

nn::Tensor<float> patch_to_tensor(const AlignedPatch& p);
nn::Tensor<float> patches_to_tensor(const std::vector<const AlignedPatch*>& patches,
                                    size_t begin, size_t end);

/// Enc(content), Enc(style) -> t = AdaIN at the deepest tap -> Dec(t).
/// Returns the unclamped synthesis and t; emission-time materialization
/// clamps to [0,1].
std::pair<nn::Tensor<float>, nn::Tensor<float>> translate(const UmtGenerator& gen,
                                                          const nn::Tensor<float>& content,
                                                          const nn::Tensor<float>& style);

struct PretrainLogRow {
  int iter;
  float mse;
};

/// Trains Enc+Dec jointly as a reconstruction autoencoder on bonafide
/// patches. Call freeze() on the encoder afterwards (the experiment driver
/// does) before any generator training.
std::vector<PretrainLogRow> pretrain_encoder(UmtGenerator& gen,
                                             const std::vector<const AlignedPatch*>& corpus,
                                             const PretrainConfig& cfg, uint64_t seed);

struct GeneratorLogRow {
  int iter;
  float content;
  float style;
  float total;
};

/// Batch-1 Adam over the decoder only: per iteration one content and one
/// style patch, loss lambda_c*Lc + lambda_s*Ls.
std::vector<GeneratorLogRow> train_generator(UmtGenerator& gen,
                                             const std::vector<const AlignedPatch*>& content,
                                             const std::vector<const AlignedPatch*>& style,
                                             int iters, uint64_t seed);

struct SynthesisProvenance {
  uint32_t content_index;
  uint32_t style_index;
};

struct SynthesisResult {
  std::vector<AlignedPatch> patches;
  std::vector<SynthesisProvenance> provenance;
};

/// Samples content (with replacement) and style uniformly per output using
/// a per-output RNG stream, so results are independent of `jobs`.
SynthesisResult synthesize_corpus(const UmtGenerator& gen,
                                  const std::vector<const AlignedPatch*>& content,
                                  const std::vector<const AlignedPatch*>& styles, int count,
                                  MaterialId target_material, uint64_t seed, int jobs = 1);

}  // namespace umt::engine
