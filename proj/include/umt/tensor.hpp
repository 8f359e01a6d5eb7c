#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "umt/error.hpp"

namespace umt::nn {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) {
    require(e >= 1, Errc::shape, "tensor extents must be >= 1");
    n *= e;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

/// Reverse-mode autodiff node. Graphs are built per forward pass; nodes
/// whose inputs carry no gradient drop their parent edges so inference
/// retains nothing.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> val;
  std::vector<T> grad;  // allocated lazily, only when requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward;

  int64_t numel() const { return int64_t(val.size()); }
  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, std::vector<T> values, bool requires_grad = false) {
    const int64_t n = shape_numel(shape);
    require(int64_t(values.size()) == n, Errc::shape,
            "value count does not match shape " + shape_str(shape));
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->val = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const int64_t n = shape_numel(shape);
    return leaf(std::move(shape), std::vector<T>(size_t(n), T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const int64_t n = shape_numel(shape);
    return leaf(std::move(shape), std::vector<T>(size_t(n), value), requires_grad);
  }

  bool defined() const { return bool(node_); }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> val() const { return node_->val; }
  /// Mutable leaf values, for optimizers and finite-difference probes.
  std::span<T> val_mut() { return node_->val; }

  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  void set_requires_grad(bool rg) {
    node_->requires_grad = rg;
    if (!rg) node_->grad.clear();
  }

  std::shared_ptr<Node<T>> node() const { return node_; }

  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> val, std::vector<Tensor<T>> parents,
                  std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->val = std::move(val);
  for (const auto& p : parents)
    if (p.node()->requires_grad) node->requires_grad = true;
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
void accumulate(Node<T>& parent, size_t index, T g) {
  parent.grad[index] += g;
}

}  // namespace detail

enum class Padding { zero, reflect };

namespace detail {

/// Maps a padded coordinate back to its source coordinate; -1 means the
/// sample lies in zero padding. Reflection is reflect-101 (border excluded).
inline int pad_src(int padded, int pad, int extent, Padding mode) {
  int s = padded - pad;
  if (s >= 0 && s < extent) return s;
  if (mode == Padding::zero) return -1;
  if (s < 0) s = -s;
  if (s >= extent) s = 2 * extent - 2 - s;
  return s;
}

}  // namespace detail

/// Same-size 2-D cross-correlation, stride 1, odd kernel.
/// input [N,Cin,H,W], weight [Cout,Cin,k,k], bias [Cout] -> [N,Cout,H,W].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Padding padding) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  require(is.size() == 4, Errc::shape, "conv2d input must be 4-D, got " + shape_str(is));
  require(ws.size() == 4, Errc::shape, "conv2d weight must be 4-D, got " + shape_str(ws));
  require(bias.shape().size() == 1 && bias.shape()[0] == ws[0], Errc::shape,
          "conv2d bias must be [Cout]");
  require(ws[1] == is[1], Errc::shape, "conv2d channel mismatch: input " + shape_str(is) +
                                           " weight " + shape_str(ws));
  require(ws[2] == ws[3] && ws[2] % 2 == 1, Errc::shape, "conv2d kernel must be odd square");
  const int N = is[0], Ci = is[1], H = is[2], W = is[3];
  const int Co = ws[0], k = ws[2], p = k / 2;
  require(padding == Padding::zero || (H > p && W > p), Errc::shape,
          "reflect padding needs extent > pad");

  const int Hp = H + 2 * p, Wp = W + 2 * p;
  // Padded copy of the input; the same coordinate maps drive both the
  // forward gather and the backward scatter so the adjoint is exact.
  std::vector<int> map_y(Hp), map_x(Wp);
  for (int i = 0; i < Hp; ++i) map_y[i] = detail::pad_src(i, p, H, padding);
  for (int i = 0; i < Wp; ++i) map_x[i] = detail::pad_src(i, p, W, padding);

  std::vector<T> padded(size_t(N) * Ci * Hp * Wp, T(0));
  {
    const T* in = input.val().data();
    for (int n = 0; n < N; ++n)
      for (int ci = 0; ci < Ci; ++ci)
        for (int y = 0; y < Hp; ++y) {
          if (map_y[y] < 0) continue;
          const T* src = in + ((size_t(n) * Ci + ci) * H + map_y[y]) * W;
          T* dst = padded.data() + ((size_t(n) * Ci + ci) * Hp + y) * Wp;
          for (int x = 0; x < Wp; ++x)
            if (map_x[x] >= 0) dst[x] = src[map_x[x]];
        }
  }

  std::vector<T> out(size_t(N) * Co * H * W);
  {
    const T* wv = weight.val().data();
    const T* bv = bias.val().data();
    for (int n = 0; n < N; ++n)
      for (int co = 0; co < Co; ++co) {
        T* base = out.data() + (size_t(n) * Co + co) * H * W;
        std::fill(base, base + size_t(H) * W, bv[co]);
        for (int ci = 0; ci < Ci; ++ci) {
          const T* pin = padded.data() + (size_t(n) * Ci + ci) * Hp * Wp;
          const T* wrow = wv + (size_t(co) * Ci + ci) * k * k;
          if (k == 3) {
            // Fused three-tap row kernel; restrict lets the row loop
            // vectorize to FMA.
            for (int ky = 0; ky < 3; ++ky) {
              const T w0 = wrow[ky * 3], w1 = wrow[ky * 3 + 1], w2 = wrow[ky * 3 + 2];
              for (int y = 0; y < H; ++y) {
                const T* __restrict src = pin + size_t(y + ky) * Wp;
                T* __restrict dst = base + size_t(y) * W;
                for (int x = 0; x < W; ++x)
                  dst[x] += w0 * src[x] + w1 * src[x + 1] + w2 * src[x + 2];
              }
            }
          } else {
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const T wk = wrow[size_t(ky) * k + kx];
                for (int y = 0; y < H; ++y) {
                  const T* __restrict src = pin + size_t(y + ky) * Wp + kx;
                  T* __restrict dst = base + size_t(y) * W;
                  for (int x = 0; x < W; ++x) dst[x] += wk * src[x];
                }
              }
          }
        }
      }
  }

  auto backward = [=, padded = std::move(padded)](Node<T>& self) {
    auto& in_node = *self.parents[0];
    auto& w_node = *self.parents[1];
    auto& b_node = *self.parents[2];
    const T* go = self.grad.data();
    if (b_node.requires_grad) {
      for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
          T acc = T(0);
          const T* src = go + (size_t(n) * Co + co) * H * W;
          for (int64_t i = 0; i < int64_t(H) * W; ++i) acc += src[i];
          b_node.grad[co] += acc;
        }
    }
    if (w_node.requires_grad) {
      // Row-buffer accumulators keep the reduction lanes independent so the
      // inner loop vectorizes without FP reassociation.
      std::vector<T> acc(size_t(3) * W);
      for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
          const T* gbase = go + (size_t(n) * Co + co) * H * W;
          for (int ci = 0; ci < Ci; ++ci) {
            const T* pin = padded.data() + (size_t(n) * Ci + ci) * Hp * Wp;
            T* wg = w_node.grad.data() + (size_t(co) * Ci + ci) * k * k;
            if (k == 3) {
              for (int ky = 0; ky < 3; ++ky) {
                std::fill(acc.begin(), acc.end(), T(0));
                T* __restrict a0 = acc.data();
                T* __restrict a1 = acc.data() + W;
                T* __restrict a2 = acc.data() + 2 * W;
                for (int y = 0; y < H; ++y) {
                  const T* __restrict src = pin + size_t(y + ky) * Wp;
                  const T* __restrict g = gbase + size_t(y) * W;
                  for (int x = 0; x < W; ++x) {
                    a0[x] += src[x] * g[x];
                    a1[x] += src[x + 1] * g[x];
                    a2[x] += src[x + 2] * g[x];
                  }
                }
                T s0 = T(0), s1 = T(0), s2 = T(0);
                for (int x = 0; x < W; ++x) {
                  s0 += a0[x];
                  s1 += a1[x];
                  s2 += a2[x];
                }
                wg[ky * 3] += s0;
                wg[ky * 3 + 1] += s1;
                wg[ky * 3 + 2] += s2;
              }
            } else {
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  std::fill(acc.begin(), acc.begin() + W, T(0));
                  T* __restrict a0 = acc.data();
                  for (int y = 0; y < H; ++y) {
                    const T* __restrict src = pin + size_t(y + ky) * Wp + kx;
                    const T* __restrict g = gbase + size_t(y) * W;
                    for (int x = 0; x < W; ++x) a0[x] += src[x] * g[x];
                  }
                  T s = T(0);
                  for (int x = 0; x < W; ++x) s += a0[x];
                  wg[size_t(ky) * k + kx] += s;
                }
            }
          }
        }
    }
    if (in_node.requires_grad) {
      // Gather formulation of the scatter adjoint: pad the output gradient
      // by k-1 and run a full correlation with the flipped kernel, which
      // vectorizes exactly like the forward pass.
      std::vector<T> gpad(size_t(N) * Ci * Hp * Wp, T(0));
      const int m = k - 1;
      const int Hg = H + 2 * m, Wg = W + 2 * m;
      std::vector<T> goutp(size_t(Hg) * Wg, T(0));
      const T* wv = w_node.val.data();
      for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
          const T* gbase = go + (size_t(n) * Co + co) * H * W;
          for (int y = 0; y < H; ++y)
            std::copy_n(gbase + size_t(y) * W, W, goutp.data() + size_t(y + m) * Wg + m);
          for (int ci = 0; ci < Ci; ++ci) {
            T* gp = gpad.data() + (size_t(n) * Ci + ci) * Hp * Wp;
            const T* wrow = wv + (size_t(co) * Ci + ci) * k * k;
            if (k == 3) {
              for (int a = 0; a < 3; ++a) {
                const T w0 = wrow[(2 - a) * 3 + 2], w1 = wrow[(2 - a) * 3 + 1],
                        w2 = wrow[(2 - a) * 3];
                for (int py = 0; py < Hp; ++py) {
                  const T* __restrict src = goutp.data() + size_t(py + a) * Wg;
                  T* __restrict dst = gp + size_t(py) * Wp;
                  for (int px = 0; px < Wp; ++px)
                    dst[px] += w0 * src[px] + w1 * src[px + 1] + w2 * src[px + 2];
                }
              }
            } else {
              for (int a = 0; a < k; ++a)
                for (int b = 0; b < k; ++b) {
                  const T wk = wrow[size_t(k - 1 - a) * k + (k - 1 - b)];
                  for (int py = 0; py < Hp; ++py) {
                    const T* __restrict src = goutp.data() + size_t(py + a) * Wg + b;
                    T* __restrict dst = gp + size_t(py) * Wp;
                    for (int px = 0; px < Wp; ++px) dst[px] += wk * src[px];
                  }
                }
            }
          }
        }
      // Fold the padded gradient back through the coordinate maps.
      for (int n = 0; n < N; ++n)
        for (int ci = 0; ci < Ci; ++ci)
          for (int y = 0; y < Hp; ++y) {
            if (map_y[y] < 0) continue;
            const T* src = gpad.data() + ((size_t(n) * Ci + ci) * Hp + y) * Wp;
            T* dst = in_node.grad.data() + ((size_t(n) * Ci + ci) * H + map_y[y]) * W;
            for (int x = 0; x < Wp; ++x)
              if (map_x[x] >= 0) dst[map_x[x]] += src[x];
          }
    }
  };

  return detail::make_op<T>({N, Co, H, W}, std::move(out), {input, weight, bias},
                            std::move(backward));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.val().begin(), x.val().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  auto backward = [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const T* __restrict v = p.val.data();
    const T* __restrict g = self.grad.data();
    T* __restrict pg = p.grad.data();
    for (size_t i = 0; i < self.val.size(); ++i) pg[i] += v[i] > T(0) ? g[i] : T(0);
  };
  return detail::make_op<T>(x.shape(), std::move(out), {x}, std::move(backward));
}

/// 2x2 average pooling; spatial extents must be even.
template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  const Shape& s = x.shape();
  require(s.size() == 4, Errc::shape, "avg_pool2 input must be 4-D");
  require(s[2] % 2 == 0 && s[3] % 2 == 0, Errc::shape,
          "avg_pool2 needs even extents, got " + shape_str(s));
  const int N = s[0], C = s[1], H = s[2], W = s[3], Ho = H / 2, Wo = W / 2;
  std::vector<T> out(size_t(N) * C * Ho * Wo);
  const T* in = x.val().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const T* src = in + size_t(nc) * H * W;
    T* dst = out.data() + size_t(nc) * Ho * Wo;
    for (int y = 0; y < Ho; ++y)
      for (int xx = 0; xx < Wo; ++xx) {
        const T* r0 = src + size_t(2 * y) * W + 2 * xx;
        const T* r1 = r0 + W;
        dst[size_t(y) * Wo + xx] = (r0[0] + r0[1] + r1[0] + r1[1]) * T(0.25);
      }
  }
  auto backward = [=](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int nc = 0; nc < N * C; ++nc) {
      const T* g = self.grad.data() + size_t(nc) * Ho * Wo;
      T* dst = p.grad.data() + size_t(nc) * H * W;
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx) {
          const T q = g[size_t(y) * Wo + xx] * T(0.25);
          T* r0 = dst + size_t(2 * y) * W + 2 * xx;
          T* r1 = r0 + W;
          r0[0] += q;
          r0[1] += q;
          r1[0] += q;
          r1[1] += q;
        }
    }
  };
  return detail::make_op<T>({N, C, Ho, Wo}, std::move(out), {x}, std::move(backward));
}

/// 2x nearest-neighbour upsampling.
template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  const Shape& s = x.shape();
  require(s.size() == 4, Errc::shape, "upsample_nearest2 input must be 4-D");
  const int N = s[0], C = s[1], H = s[2], W = s[3], Ho = H * 2, Wo = W * 2;
  std::vector<T> out(size_t(N) * C * Ho * Wo);
  const T* in = x.val().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const T* src = in + size_t(nc) * H * W;
    T* dst = out.data() + size_t(nc) * Ho * Wo;
    for (int y = 0; y < Ho; ++y)
      for (int xx = 0; xx < Wo; ++xx)
        dst[size_t(y) * Wo + xx] = src[size_t(y / 2) * W + xx / 2];
  }
  auto backward = [=](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int nc = 0; nc < N * C; ++nc) {
      const T* g = self.grad.data() + size_t(nc) * Ho * Wo;
      T* dst = p.grad.data() + size_t(nc) * H * W;
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx) dst[size_t(y / 2) * W + xx / 2] += g[size_t(y) * Wo + xx];
    }
  };
  return detail::make_op<T>({N, C, Ho, Wo}, std::move(out), {x}, std::move(backward));
}

/// x [N,F] @ weight [O,F]^T + bias [O] -> [N,O].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  require(xs.size() == 2 && ws.size() == 2, Errc::shape, "linear expects 2-D input and weight");
  require(xs[1] == ws[1], Errc::shape, "linear feature mismatch: input " + shape_str(xs) +
                                           " weight " + shape_str(ws));
  require(bias.shape().size() == 1 && bias.shape()[0] == ws[0], Errc::shape,
          "linear bias must be [Out]");
  const int N = xs[0], F = xs[1], O = ws[0];
  std::vector<T> out(size_t(N) * O);
  const T* xv = x.val().data();
  const T* wv = weight.val().data();
  const T* bv = bias.val().data();
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) {
      T acc = bv[o];
      const T* xr = xv + size_t(n) * F;
      const T* wr = wv + size_t(o) * F;
      for (int f = 0; f < F; ++f) acc += xr[f] * wr[f];
      out[size_t(n) * O + o] = acc;
    }
  auto backward = [=](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    auto& bn = *self.parents[2];
    const T* g = self.grad.data();
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < O; ++o) {
        const T gv = g[size_t(n) * O + o];
        if (bn.requires_grad) bn.grad[o] += gv;
        for (int f = 0; f < F; ++f) {
          if (wn.requires_grad) wn.grad[size_t(o) * F + f] += gv * xn.val[size_t(n) * F + f];
          if (xn.requires_grad) xn.grad[size_t(n) * F + f] += gv * wn.val[size_t(o) * F + f];
        }
      }
  };
  return detail::make_op<T>({N, O}, std::move(out), {x, weight, bias}, std::move(backward));
}

/// Mean over spatial dimensions: [N,C,H,W] -> [N,C]. Double accumulation
/// keeps channel statistics tight in 32-bit training.
template <typename T>
Tensor<T> spatial_mean(const Tensor<T>& x) {
  const Shape& s = x.shape();
  require(s.size() == 4, Errc::shape, "spatial_mean input must be 4-D");
  const int N = s[0], C = s[1];
  const int64_t HW = int64_t(s[2]) * s[3];
  std::vector<T> out(size_t(N) * C);
  const T* in = x.val().data();
  for (int nc = 0; nc < N * C; ++nc) {
    double acc = 0.0;
    const T* src = in + size_t(nc) * HW;
    for (int64_t i = 0; i < HW; ++i) acc += double(src[i]);
    out[nc] = T(acc / double(HW));
  }
  auto backward = [=](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const T inv = T(1.0 / double(HW));
    for (int nc = 0; nc < N * C; ++nc) {
      const T q = self.grad[nc] * inv;
      T* dst = p.grad.data() + size_t(nc) * HW;
      for (int64_t i = 0; i < HW; ++i) dst[i] += q;
    }
  };
  return detail::make_op<T>({N, C}, std::move(out), {x}, std::move(backward));
}

/// Alias used by the classifier head.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  return spatial_mean(x);
}

/// [N,C] -> [N,C,H,W] by repetition.
template <typename T>
Tensor<T> broadcast_spatial(const Tensor<T>& x, int H, int W) {
  const Shape& s = x.shape();
  require(s.size() == 2, Errc::shape, "broadcast_spatial input must be [N,C]");
  require(H >= 1 && W >= 1, Errc::shape, "broadcast target must be positive");
  const int N = s[0], C = s[1];
  const int64_t HW = int64_t(H) * W;
  std::vector<T> out(size_t(N) * C * HW);
  for (int nc = 0; nc < N * C; ++nc)
    std::fill_n(out.begin() + size_t(nc) * HW, HW, x.val()[nc]);
  auto backward = [=](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int nc = 0; nc < N * C; ++nc) {
      double acc = 0.0;
      const T* g = self.grad.data() + size_t(nc) * HW;
      for (int64_t i = 0; i < HW; ++i) acc += double(g[i]);
      p.grad[nc] += T(acc);
    }
  };
  return detail::make_op<T>({N, C, H, W}, std::move(out), {x}, std::move(backward));
}

namespace detail {
template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), Errc::shape,
          std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
}
}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> out(a.val().begin(), a.val().end());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.val()[i];
  auto backward = [](Node<T>& self) {
    for (int side = 0; side < 2; ++side) {
      auto& p = *self.parents[side];
      if (!p.requires_grad) continue;
      for (size_t i = 0; i < self.val.size(); ++i) p.grad[i] += self.grad[i];
    }
  };
  return detail::make_op<T>(a.shape(), std::move(out), {a, b}, std::move(backward));
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<T> out(a.val().begin(), a.val().end());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.val()[i];
  auto backward = [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad)
      for (size_t i = 0; i < self.val.size(); ++i) pa.grad[i] += self.grad[i];
    if (pb.requires_grad)
      for (size_t i = 0; i < self.val.size(); ++i) pb.grad[i] -= self.grad[i];
  };
  return detail::make_op<T>(a.shape(), std::move(out), {a, b}, std::move(backward));
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> out(a.val().begin(), a.val().end());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.val()[i];
  auto backward = [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad)
      for (size_t i = 0; i < self.val.size(); ++i) pa.grad[i] += self.grad[i] * pb.val[i];
    if (pb.requires_grad)
      for (size_t i = 0; i < self.val.size(); ++i) pb.grad[i] += self.grad[i] * pa.val[i];
  };
  return detail::make_op<T>(a.shape(), std::move(out), {a, b}, std::move(backward));
}

template <typename T>
Tensor<T> divt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "div");
  std::vector<T> out(a.val().begin(), a.val().end());
  for (size_t i = 0; i < out.size(); ++i) out[i] /= b.val()[i];
  auto backward = [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (size_t i = 0; i < self.val.size(); ++i) {
      const T inv = T(1) / pb.val[i];
      if (pa.requires_grad) pa.grad[i] += self.grad[i] * inv;
      if (pb.requires_grad) pb.grad[i] -= self.grad[i] * self.val[i] * inv;
    }
  };
  return detail::make_op<T>(a.shape(), std::move(out), {a, b}, std::move(backward));
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  std::vector<T> out(x.val().begin(), x.val().end());
  for (auto& v : out) v += c;
  auto backward = [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (size_t i = 0; i < self.val.size(); ++i) p.grad[i] += self.grad[i];
  };
  return detail::make_op<T>(x.shape(), std::move(out), {x}, std::move(backward));
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  std::vector<T> out(x.val().begin(), x.val().end());
  for (auto& v : out) v *= c;
  auto backward = [c](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (size_t i = 0; i < self.val.size(); ++i) p.grad[i] += self.grad[i] * c;
  };
  return detail::make_op<T>(x.shape(), std::move(out), {x}, std::move(backward));
}

template <typename T>
Tensor<T> sqrt_t(const Tensor<T>& x) {
  std::vector<T> out(x.val().begin(), x.val().end());
  for (auto& v : out) {
    require(v >= T(0), Errc::precondition, "sqrt of negative value");
    v = std::sqrt(v);
  }
  auto backward = [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (size_t i = 0; i < self.val.size(); ++i)
      if (self.val[i] > T(0)) p.grad[i] += self.grad[i] / (T(2) * self.val[i]);
  };
  return detail::make_op<T>(x.shape(), std::move(out), {x}, std::move(backward));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.val()) acc += double(v);
  auto backward = [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const T g = self.grad[0];
    for (size_t i = 0; i < p.val.size(); ++i) p.grad[i] += g;
  };
  return detail::make_op<T>({1}, {T(acc)}, {x}, std::move(backward));
}

/// Euclidean norm over every element; subgradient 0 at the origin.
template <typename T>
Tensor<T> norm2(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.val()) acc += double(v) * double(v);
  const T norm = T(std::sqrt(acc));
  auto backward = [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const T n = self.val[0];
    if (n <= T(0)) return;
    const T g = self.grad[0] / n;
    for (size_t i = 0; i < p.val.size(); ++i) p.grad[i] += g * p.val[i];
  };
  return detail::make_op<T>({1}, {norm}, {x}, std::move(backward));
}

/// Mean softmax cross-entropy over the batch; logits [N,K], labels in [0,K).
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  const Shape& s = logits.shape();
  require(s.size() == 2, Errc::shape, "logits must be [N,K]");
  const int N = s[0], K = s[1];
  require(int(labels.size()) == N, Errc::shape, "labels must match batch size");
  for (int l : labels)
    require(l >= 0 && l < K, Errc::precondition, "label out of range");

  const T* lv = logits.val().data();
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const T* row = lv + size_t(n) * K;
    double m = double(row[0]);
    for (int j = 1; j < K; ++j) m = std::max(m, double(row[j]));
    double z = 0.0;
    for (int j = 0; j < K; ++j) z += std::exp(double(row[j]) - m);
    total += m + std::log(z) - double(row[labels[size_t(n)]]);
  }
  auto backward = [N, K, labels](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const T g = self.grad[0] / T(N);
    for (int n = 0; n < N; ++n) {
      const T* row = p.val.data() + size_t(n) * K;
      double m = double(row[0]);
      for (int j = 1; j < K; ++j) m = std::max(m, double(row[j]));
      double z = 0.0;
      for (int j = 0; j < K; ++j) z += std::exp(double(row[j]) - m);
      for (int j = 0; j < K; ++j) {
        const double soft = std::exp(double(row[j]) - m) / z;
        const double onehot = (j == labels[size_t(n)]) ? 1.0 : 0.0;
        p.grad[size_t(n) * K + j] += g * T(soft - onehot);
      }
    }
  };
  return detail::make_op<T>({1}, {T(total / double(N))}, {logits}, std::move(backward));
}

/// Row-wise softmax probabilities computed outside the graph (scoring path).
template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits) {
  const Shape& s = logits.shape();
  require(s.size() == 2, Errc::shape, "logits must be [N,K]");
  const int N = s[0], K = s[1];
  std::vector<T> out(size_t(N) * K);
  const T* lv = logits.val().data();
  for (int n = 0; n < N; ++n) {
    const T* row = lv + size_t(n) * K;
    double m = double(row[0]);
    for (int j = 1; j < K; ++j) m = std::max(m, double(row[j]));
    double z = 0.0;
    for (int j = 0; j < K; ++j) z += std::exp(double(row[j]) - m);
    for (int j = 0; j < K; ++j) out[size_t(n) * K + j] = T(std::exp(double(row[j]) - m) / z);
  }
  return out;
}

/// Populates gradients of every reachable requires-grad node by reverse
/// topological sweep from a scalar loss.
template <typename T>
void backward(const Tensor<T>& loss) {
  require(loss.numel() == 1, Errc::precondition, "backward requires a scalar loss");
  if (!loss.node()->requires_grad) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  struct Frame {
    Node<T>* node;
    size_t next_parent;
  };
  std::vector<Frame> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node<T>* parent = f.node->parents[f.next_parent++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.push_back({parent, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) n->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

}  // namespace umt::nn
