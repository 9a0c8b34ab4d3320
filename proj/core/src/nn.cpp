#include "xvseg/nn.hpp"

#include <cmath>
#include <cstring>

#include "xvseg/errors.hpp"

namespace xvseg {

Param& ParamStore::add(const std::string& name, const std::string& group, Tensor init,
                       bool trainable) {
  if (find(name)) throw ConfigError("duplicate parameter name: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->group = group;
  p->value = std::move(init);
  p->trainable = trainable;
  p->index = static_cast<int>(params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Param* ParamStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Param* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::size_t ParamStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p->trainable) ++n;
  return n;
}

std::size_t ParamStore::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (!trainable_only || p->trainable) n += static_cast<std::size_t>(p->value.size());
  return n;
}

std::uint64_t ParamStore::checksum(const std::string& group) const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix_bytes = [&h](const void* data, std::size_t len) {
    const unsigned char* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params_) {
    if (!group.empty() && p->group != group) continue;
    mix_bytes(p->name.data(), p->name.size());
    mix_bytes(p->value.m.data(), sizeof(double) * static_cast<std::size_t>(p->value.size()));
  }
  return h;
}

Tensor randn_init(Rng& rng, int rows, int cols, double stddev) {
  Tensor t = Tensor::matrix(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) t.m(r, c) = rng.normal(0.0, stddev);
  return t;
}

Tensor zeros_init(int rows, int cols) { return Tensor::matrix(rows, cols); }

Tensor ones_init(int rows, int cols) {
  Tensor t = Tensor::matrix(rows, cols);
  t.m.setOnes();
  return t;
}

LinearP make_linear(ParamStore& ps, const std::string& prefix, const std::string& group,
                    int in, int out, Rng& rng, double wstd) {
  if (wstd < 0) wstd = 1.0 / std::sqrt(static_cast<double>(in));
  LinearP p;
  p.w = &ps.add(prefix + ".w", group, randn_init(rng, in, out, wstd));
  p.b = &ps.add(prefix + ".b", group, zeros_init(1, out));
  return p;
}

Value linear(Tape& tp, const LinearP& p, const Value& x) {
  return add_bias(matmul(x, tp.param(*p.w)), tp.param(*p.b));
}

LayerNormP make_layer_norm(ParamStore& ps, const std::string& prefix,
                           const std::string& group, int dim) {
  LayerNormP p;
  p.gamma = &ps.add(prefix + ".gamma", group, ones_init(1, dim));
  p.beta = &ps.add(prefix + ".beta", group, zeros_init(1, dim));
  return p;
}

Value layer_norm(Tape& tp, const LayerNormP& p, const Value& x) {
  return layer_norm(x, tp.param(*p.gamma), tp.param(*p.beta));
}

AttnP make_attn(ParamStore& ps, const std::string& prefix, const std::string& group,
                int dim, Rng& rng) {
  AttnP p;
  p.q = make_linear(ps, prefix + ".q", group, dim, dim, rng);
  p.k = make_linear(ps, prefix + ".k", group, dim, dim, rng);
  p.v = make_linear(ps, prefix + ".v", group, dim, dim, rng);
  // Small output projection keeps residual streams near identity at init.
  p.o = make_linear(ps, prefix + ".o", group, dim, dim, rng, 0.02);
  return p;
}

Value mha(Tape& tp, const AttnP& p, const Value& q_in, const Value& k_in,
          const Value& v_in, int heads) {
  const int dim = q_in.t().cols();
  if (dim % heads != 0) throw ConfigError("mha: dim not divisible by heads");
  const int dh = dim / heads;
  Value q = linear(tp, p.q, q_in);
  Value k = linear(tp, p.k, k_in);
  Value v = linear(tp, p.v, v_in);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Value> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Value qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    Value kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    Value vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    Value attn = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt));
    outs.push_back(matmul(attn, vh));
  }
  Value merged = heads == 1 ? outs[0] : concat_cols(outs);
  return linear(tp, p.o, merged);
}

FfnP make_ffn(ParamStore& ps, const std::string& prefix, const std::string& group,
              int dim, int hidden, Rng& rng) {
  FfnP p;
  p.fc1 = make_linear(ps, prefix + ".fc1", group, dim, hidden, rng);
  p.fc2 = make_linear(ps, prefix + ".fc2", group, hidden, dim, rng, 0.02);
  return p;
}

Value ffn(Tape& tp, const FfnP& p, const Value& x) {
  return linear(tp, p.fc2, gelu(linear(tp, p.fc1, x)));
}

}  // namespace xvseg
