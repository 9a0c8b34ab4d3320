#pragma once

#include <memory>
#include <string>
#include <vector>

#include "xvseg/autograd.hpp"
#include "xvseg/rng.hpp"

namespace xvseg {

// Owns every parameter of a model. Pointers returned by add() stay valid for
// the life of the store; registration order defines checkpoint order.
class ParamStore {
 public:
  Param& add(const std::string& name, const std::string& group, Tensor init,
             bool trainable = true);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  const std::vector<std::unique_ptr<Param>>& all() const { return params_; }

  std::size_t trainable_count() const;
  std::size_t scalar_count(bool trainable_only = true) const;

  // FNV-1a over the raw bytes of every param in `group` ("" = all).
  std::uint64_t checksum(const std::string& group = "") const;

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

// ---- initializers -------------------------------------------------------

Tensor randn_init(Rng& rng, int rows, int cols, double stddev);
Tensor zeros_init(int rows, int cols);
Tensor ones_init(int rows, int cols);

// ---- layer parameter bundles --------------------------------------------

struct LinearP {
  Param* w = nullptr;  // in x out
  Param* b = nullptr;  // 1 x out
};
LinearP make_linear(ParamStore& ps, const std::string& prefix, const std::string& group,
                    int in, int out, Rng& rng, double wstd = -1.0);
Value linear(Tape& tp, const LinearP& p, const Value& x);

struct LayerNormP {
  Param* gamma = nullptr;
  Param* beta = nullptr;
};
LayerNormP make_layer_norm(ParamStore& ps, const std::string& prefix,
                           const std::string& group, int dim);
Value layer_norm(Tape& tp, const LayerNormP& p, const Value& x);

struct AttnP {
  LinearP q, k, v, o;
};
AttnP make_attn(ParamStore& ps, const std::string& prefix, const std::string& group,
                int dim, Rng& rng);
// Multi-head scaled dot-product attention. q_in: Nq x C, k_in/v_in: Nk x C.
Value mha(Tape& tp, const AttnP& p, const Value& q_in, const Value& k_in,
          const Value& v_in, int heads);

struct FfnP {
  LinearP fc1, fc2;
};
FfnP make_ffn(ParamStore& ps, const std::string& prefix, const std::string& group,
              int dim, int hidden, Rng& rng);
Value ffn(Tape& tp, const FfnP& p, const Value& x);  // fc2(gelu(fc1(x)))

}  // namespace xvseg
