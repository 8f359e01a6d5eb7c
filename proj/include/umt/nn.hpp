#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "umt/rng.hpp"
#include "umt/tensor.hpp"

namespace umt::nn {

/// A named, optionally trainable leaf tensor.
struct Param {
  std::string name;
  Tensor<float> tensor;
  bool trainable = true;

  void set_trainable(bool t) {
    trainable = t;
    tensor.set_requires_grad(t);
  }
};

Param make_conv_param(const std::string& name, int cout, int cin, int k, Rng& rng);
Param make_bias_param(const std::string& name, int n);
Param make_linear_param(const std::string& name, int out, int in, Rng& rng);

/// 3x3 same-size convolution block.
struct Conv3x3 {
  Param weight;
  Param bias;
  Padding padding = Padding::zero;

  Conv3x3() = default;
  Conv3x3(const std::string& name, int cin, int cout, Padding pad, Rng& rng)
      : weight(make_conv_param(name + ".w", cout, cin, 3, rng)),
        bias(make_bias_param(name + ".b", cout)),
        padding(pad) {}

  Tensor<float> operator()(const Tensor<float>& x) const {
    return conv2d(x, weight.tensor, bias.tensor, padding);
  }

  void collect(std::vector<Param*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// Adam with bias correction. Moments are keyed to the parameter list given
/// at construction; frozen parameters are skipped and every managed
/// parameter's gradient is cleared after each step.
class Adam {
 public:
  Adam(std::vector<Param*> params, float lr, float beta1 = 0.9f, float beta2 = 0.999f,
       float eps = 1e-8f);

  void step();
  int64_t step_count() const { return step_; }
  float lr() const { return lr_; }

 private:
  std::vector<Param*> params_;
  std::vector<std::vector<float>> first_moment_;
  std::vector<std::vector<float>> second_moment_;
  int64_t step_ = 0;
  float lr_, beta1_, beta2_, eps_;
};

/// Flat named-tensor container ("UMTW"): magic, version u32, count u32,
/// then per parameter name (u32 length + bytes), rank u32, extents u32[],
/// and 32-bit little-endian values. Round-trips bit-exactly.
struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Snapshot/restore helpers used for per-epoch classifier checkpoints and
/// the frozen-encoder checksum.
std::vector<NamedTensor> snapshot_params(const std::vector<Param*>& params);
void restore_params(const std::vector<Param*>& params, const std::vector<NamedTensor>& snap);
uint64_t params_checksum(const std::vector<Param*>& params);

}  // namespace umt::nn
