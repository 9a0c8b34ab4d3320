#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "xvseg/ops.hpp"
#include "xvseg/tensor.hpp"

namespace xvseg {

// A named parameter tensor. `group` buckets parameters by pipeline stage for
// gradient reporting; `trainable == false` marks frozen weights and fixed
// buffers (they are checkpointed but never receive updates).
struct Param {
  std::string name;
  std::string group;
  Tensor value;
  bool trainable = true;
  int index = -1;  // position in the owning ParamStore
};

class Tape;

// Handle to a tensor that may live on a tape (grad mode) or stand alone
// (no-grad mode, freed when the last handle dies).
class Value {
 public:
  Value() = default;
  const Tensor& t() const;
  bool valid() const { return tape_ != nullptr || detached_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool is_detached() const { return detached_ != nullptr; }

 private:
  friend class Tape;
  Tape* tape_ = nullptr;
  int id_ = -1;
  std::shared_ptr<Tensor> detached_;
};

// Define-by-run reverse-mode tape. One tape per forward pass; not shared
// across threads. With grad disabled no graph is recorded and intermediates
// are reclaimed as soon as their handles go out of scope.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_; }

  Value constant(Tensor t);
  Value param(Param& p);  // leaf; receives gradient iff p.trainable

  void backward(const Value& loss);

  // After backward: gradient of a node (zero tensor if untouched).
  Tensor grad_of(const Value& v) const;

  // After backward: visit (param, grad) for every trainable param leaf used
  // in this pass, in first-use order (deterministic).
  void for_each_param_grad(const std::function<void(Param&, const Tensor&)>& fn) const;

  size_t node_count() const { return nodes_.size(); }

  // --- internal graph machinery, used by the op implementations ---
  struct Node {
    Tensor val;
    Tensor grad;
    bool needs_grad = false;
    bool grad_live = false;
    Param* param = nullptr;
    std::function<void(Tape&, const Node&)> back;
  };
  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  int push(Tensor val, bool needs_grad);
  void accum(int id, const Mat& g);
  Value wrap(int id);
  Value detached(Tensor t);
  int ensure_node(const Value& v);  // grad mode: wraps detached values as constants

 private:
  std::vector<Node> nodes_;
  std::vector<int> param_leaves_;
  bool grad_;
};

// ---- tape ops ----------------------------------------------------------
// Shapes follow the plain kernels in ops.hpp. Grid tags propagate from the
// first argument unless stated otherwise.

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);  // elementwise
Value scale(const Value& a, double s);
Value add_scalar(const Value& a, double s);
Value add_bias(const Value& x, const Value& b);        // x: NxC, b: 1xC
Value add_row_broadcast(const Value& x, const Value& r);  // alias of add_bias
Value matmul(const Value& a, const Value& b);
Value matmul_nt(const Value& a, const Value& b);  // a * b^T
Value softmax_rows(const Value& x);
Value layer_norm(const Value& x, const Value& gamma, const Value& beta, double eps = 1e-5);
Value gelu(const Value& x);
Value sigmoid(const Value& x);
Value log_elem(const Value& x);
Value pow_const(const Value& x, double p);
Value clamp(const Value& x, double lo, double hi);
Value sum_all(const Value& x);   // 1x1
Value mean_all(const Value& x);  // 1x1
Value div_elem(const Value& a, const Value& b);
Value concat_rows(const std::vector<Value>& parts);
Value slice_rows(const Value& x, int r0, int n);
Value slice_cols(const Value& x, int c0, int n);
Value concat_cols(const std::vector<Value>& parts);
Value conv2d(const Value& x, const Value& w, const Value& b, const ops::Conv2dSpec& spec);
Value avg_pool(const Value& x, int r);
Value bilinear_resize(const Value& x, int ho, int wo);
Value bilinear_sample(const Value& x, const std::vector<std::array<double, 2>>& pts);
Value tag_grid(const Value& x, int h, int w);

}  // namespace xvseg
