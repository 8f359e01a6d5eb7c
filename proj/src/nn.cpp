#include "umt/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace umt::nn {

namespace {

std::vector<float> he_normal(size_t n, double fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / fan_in);
  std::vector<float> v(n);
  for (auto& x : v) x = float(rng.normal(0.0, stddev));
  return v;
}

}  // namespace

Param make_conv_param(const std::string& name, int cout, int cin, int k, Rng& rng) {
  auto values = he_normal(size_t(cout) * cin * k * k, double(cin) * k * k, rng);
  return Param{name, Tensor<float>::leaf({cout, cin, k, k}, std::move(values), true), true};
}

Param make_bias_param(const std::string& name, int n) {
  return Param{name, Tensor<float>::zeros({n}, true), true};
}

Param make_linear_param(const std::string& name, int out, int in, Rng& rng) {
  auto values = he_normal(size_t(out) * in, double(in), rng);
  return Param{name, Tensor<float>::leaf({out, in}, std::move(values), true), true};
}

Adam::Adam(std::vector<Param*> params, float lr, float beta1, float beta2, float eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (const Param* p : params_) {
    first_moment_.emplace_back(size_t(p->tensor.numel()), 0.f);
    second_moment_.emplace_back(size_t(p->tensor.numel()), 0.f);
  }
}

void Adam::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(double(beta1_), double(step_));
  const double bc2 = 1.0 - std::pow(double(beta2_), double(step_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Param& p = *params_[pi];
    if (!p.trainable) {
      p.tensor.zero_grad();
      continue;
    }
    auto vals = p.tensor.val_mut();
    auto grads = p.tensor.grad();
    auto& m = first_moment_[pi];
    auto& v = second_moment_[pi];
    if (grads.empty()) continue;  // never touched by backward: no update
    for (size_t i = 0; i < vals.size(); ++i) {
      const float g = grads[i];
      m[i] = beta1_ * m[i] + (1.f - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.f - beta2_) * g * g;
      const float mhat = float(double(m[i]) / bc1);
      const float vhat = float(double(v[i]) / bc2);
      vals[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    p.tensor.zero_grad();
  }
}

namespace {

constexpr char kMagic[4] = {'U', 'M', 'T', 'W'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) fail(Errc::truncated_file, "checkpoint truncated in " + what);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

void put_f32(std::ostream& out, const float* data, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    put_u32(out, bits);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, uint32_t(tensors.size()));
  for (const auto& t : tensors) {
    require(shape_numel(t.shape) == int64_t(t.values.size()), Errc::shape,
            "checkpoint tensor " + t.name + " values do not match its shape");
    put_u32(out, uint32_t(t.name.size()));
    out.write(t.name.data(), std::streamsize(t.name.size()));
    put_u32(out, uint32_t(t.shape.size()));
    for (int e : t.shape) put_u32(out, uint32_t(e));
    put_f32(out, t.values.data(), t.values.size());
  }
  if (!out) fail(Errc::io, "short write on checkpoint " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::missing_file, "cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    fail(Errc::bad_magic, "not a UMTW checkpoint: " + path.string());
  const uint32_t version = get_u32(in, "version");
  if (version != kVersion)
    fail(Errc::version_mismatch,
         "checkpoint version " + std::to_string(version) + " unsupported");
  const uint32_t count = get_u32(in, "count");
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const uint32_t name_len = get_u32(in, "name length");
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    if (size_t(in.gcount()) != name_len) fail(Errc::truncated_file, "checkpoint truncated in name");
    const uint32_t rank = get_u32(in, "rank");
    t.shape.resize(rank);
    int64_t n = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      t.shape[r] = int(get_u32(in, "extent"));
      require(t.shape[r] >= 1, Errc::shape, "bad extent in checkpoint");
      n *= t.shape[r];
    }
    t.values.resize(size_t(n));
    for (int64_t j = 0; j < n; ++j) {
      const uint32_t bits = get_u32(in, "values");
      std::memcpy(&t.values[size_t(j)], &bits, 4);
    }
    tensors.push_back(std::move(t));
  }
  return tensors;
}

std::vector<NamedTensor> snapshot_params(const std::vector<Param*>& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const Param* p : params) {
    out.push_back(NamedTensor{p->name, p->tensor.shape(),
                              {p->tensor.val().begin(), p->tensor.val().end()}});
  }
  return out;
}

void restore_params(const std::vector<Param*>& params, const std::vector<NamedTensor>& snap) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : snap) by_name[t.name] = &t;
  for (Param* p : params) {
    auto it = by_name.find(p->name);
    require(it != by_name.end(), Errc::precondition,
            "checkpoint is missing parameter " + p->name);
    require(it->second->shape == p->tensor.shape(), Errc::shape,
            "checkpoint shape mismatch for " + p->name);
    std::copy(it->second->values.begin(), it->second->values.end(), p->tensor.val_mut().begin());
  }
}

uint64_t params_checksum(const std::vector<Param*>& params) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over raw float bits
  auto feed = [&h](const void* data, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const Param* p : params) {
    feed(p->name.data(), p->name.size());
    feed(p->tensor.val().data(), p->tensor.val().size() * sizeof(float));
  }
  return h;
}

}  // namespace umt::nn
