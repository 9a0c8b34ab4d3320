#include "xvseg/autograd.hpp"

#include <cmath>

#include "xvseg/errors.hpp"

namespace xvseg {

const Tensor& Value::t() const {
  if (detached_) return *detached_;
  return tape_->node(id_).val;
}

namespace {

Tape* common_tape(std::initializer_list<const Value*> vs) {
  Tape* tp = nullptr;
  for (const Value* v : vs) {
    Tape* t = v->tape();
    if (!t) continue;
    if (tp && t != tp) throw ShapeError("autograd: values belong to different tapes");
    tp = t;
  }
  if (!tp) throw ShapeError("autograd: value has no tape");
  return tp;
}

}  // namespace

int Tape::push(Tensor val, bool needs_grad) {
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad && grad_;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Value Tape::wrap(int id) {
  Value v;
  v.tape_ = this;
  v.id_ = id;
  return v;
}

Value Tape::detached(Tensor t) {
  Value v;
  v.tape_ = this;
  v.detached_ = std::make_shared<Tensor>(std::move(t));
  return v;
}

Value Tape::constant(Tensor t) {
  if (!grad_) return detached(std::move(t));
  return wrap(push(std::move(t), false));
}

Value Tape::param(Param& p) {
  if (!grad_) {
    // Read-only alias; params are never mutated while a forward pass runs.
    Value v;
    v.tape_ = this;
    v.detached_ = std::shared_ptr<Tensor>(&p.value, [](Tensor*) {});
    return v;
  }
  int id = push(p.value, p.trainable);
  nodes_[id].param = &p;
  if (p.trainable) param_leaves_.push_back(id);
  return wrap(id);
}

int Tape::ensure_node(const Value& v) {
  if (!v.is_detached()) return v.id();
  return push(v.t(), false);
}

void Tape::accum(int id, const Mat& g) {
  Node& n = nodes_[id];
  if (!n.grad_live) {
    n.grad.m = Mat::Zero(n.val.m.rows(), n.val.m.cols());
    n.grad.h = n.val.h;
    n.grad.w = n.val.w;
    n.grad_live = true;
  }
  n.grad.m += g;
}

void Tape::backward(const Value& loss) {
  if (!grad_) throw ShapeError("backward on a no-grad tape");
  int lid = loss.id();
  if (lid < 0) throw ShapeError("backward target is detached");
  if (nodes_[lid].val.size() != 1) throw ShapeError("backward target must be scalar");
  accum(lid, Mat::Ones(1, 1));
  for (int i = lid; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.grad_live && n.back) n.back(*this, n);
  }
}

Tensor Tape::grad_of(const Value& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad_live) return n.grad;
  Tensor z = Tensor::matrix(n.val.rows(), n.val.cols());
  z.h = n.val.h;
  z.w = n.val.w;
  return z;
}

void Tape::for_each_param_grad(const std::function<void(Param&, const Tensor&)>& fn) const {
  for (int id : param_leaves_) {
    const Node& n = nodes_[id];
    if (n.grad_live) {
      fn(*n.param, n.grad);
    } else {
      Tensor z = Tensor::matrix(n.val.rows(), n.val.cols());
      fn(*n.param, z);
    }
  }
}

// ---- op helpers ---------------------------------------------------------

namespace {

using Node = Tape::Node;
using BackFn = std::function<void(Tape&, const Node&)>;

// Finalize an op: either record a node or hand back a detached value.
Value finish(Tape* tp, Tensor out, std::initializer_list<const Value*> parents,
             const std::function<BackFn(Tape&, const std::vector<int>&)>& make_back) {
  if (!tp->grad_enabled()) return tp->detached(std::move(out));
  std::vector<int> ids;
  ids.reserve(parents.size());
  bool ng = false;
  for (const Value* p : parents) {
    int id = tp->ensure_node(*p);
    ids.push_back(id);
    ng = ng || tp->node(id).needs_grad;
  }
  int id = tp->push(std::move(out), ng);
  if (ng) tp->node(id).back = make_back(*tp, ids);
  return tp->wrap(id);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

}  // namespace

Value add(const Value& a, const Value& b) {
  Tape* tp = common_tape({&a, &b});
  check_same_shape(a.t(), b.t(), "add");
  Tensor out = a.t();
  out.m += b.t().m;
  return finish(tp, std::move(out), {&a, &b}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad) t.accum(ids[0], n.grad.m);
      if (t.node(ids[1]).needs_grad) t.accum(ids[1], n.grad.m);
    };
  });
}

Value sub(const Value& a, const Value& b) {
  Tape* tp = common_tape({&a, &b});
  check_same_shape(a.t(), b.t(), "sub");
  Tensor out = a.t();
  out.m -= b.t().m;
  return finish(tp, std::move(out), {&a, &b}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad) t.accum(ids[0], n.grad.m);
      if (t.node(ids[1]).needs_grad) t.accum(ids[1], -n.grad.m);
    };
  });
}

Value mul(const Value& a, const Value& b) {
  Tape* tp = common_tape({&a, &b});
  check_same_shape(a.t(), b.t(), "mul");
  Tensor out = a.t();
  out.m = out.m.cwiseProduct(b.t().m);
  return finish(tp, std::move(out), {&a, &b}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad)
        t.accum(ids[0], n.grad.m.cwiseProduct(t.node(ids[1]).val.m));
      if (t.node(ids[1]).needs_grad)
        t.accum(ids[1], n.grad.m.cwiseProduct(t.node(ids[0]).val.m));
    };
  });
}

Value scale(const Value& a, double s) {
  Tape* tp = common_tape({&a});
  Tensor out = a.t();
  out.m *= s;
  return finish(tp, std::move(out), {&a}, [s](Tape&, const std::vector<int>& ids) {
    return [ids, s](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad) t.accum(ids[0], s * n.grad.m);
    };
  });
}

Value add_scalar(const Value& a, double s) {
  Tape* tp = common_tape({&a});
  Tensor out = a.t();
  out.m.array() += s;
  return finish(tp, std::move(out), {&a}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad) t.accum(ids[0], n.grad.m);
    };
  });
}

Value add_bias(const Value& x, const Value& b) {
  Tape* tp = common_tape({&x, &b});
  if (b.t().rows() != 1 || b.t().cols() != x.t().cols())
    throw ShapeError("add_bias: bias must be 1x" + std::to_string(x.t().cols()));
  Tensor out = x.t();
  out.m.rowwise() += b.t().m.row(0);
  return finish(tp, std::move(out), {&x, &b}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad) t.accum(ids[0], n.grad.m);
      if (t.node(ids[1]).needs_grad) t.accum(ids[1], n.grad.m.colwise().sum());
    };
  });
}

Value add_row_broadcast(const Value& x, const Value& r) { return add_bias(x, r); }

Value matmul(const Value& a, const Value& b) {
  Tape* tp = common_tape({&a, &b});
  if (a.t().cols() != b.t().rows())
    throw ShapeError("matmul: inner dims " + a.t().shape_str() + " * " + b.t().shape_str());
  Tensor out = Tensor::from_matrix(a.t().m * b.t().m);
  out.h = a.t().h;
  out.w = a.t().w;
  return finish(tp, std::move(out), {&a, &b}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad) t.accum(ids[0], n.grad.m * t.node(ids[1]).val.m.transpose());
      if (t.node(ids[1]).needs_grad) t.accum(ids[1], t.node(ids[0]).val.m.transpose() * n.grad.m);
    };
  });
}

Value matmul_nt(const Value& a, const Value& b) {
  Tape* tp = common_tape({&a, &b});
  if (a.t().cols() != b.t().cols())
    throw ShapeError("matmul_nt: inner dims " + a.t().shape_str() + " * " +
                     b.t().shape_str() + "^T");
  Tensor out = Tensor::from_matrix(a.t().m * b.t().m.transpose());
  out.h = a.t().h;
  out.w = a.t().w;
  return finish(tp, std::move(out), {&a, &b}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad) t.accum(ids[0], n.grad.m * t.node(ids[1]).val.m);
      if (t.node(ids[1]).needs_grad) t.accum(ids[1], n.grad.m.transpose() * t.node(ids[0]).val.m);
    };
  });
}

Value softmax_rows(const Value& x) {
  Tape* tp = common_tape({&x});
  Tensor out = ops::softmax_rows(x.t());
  return finish(tp, std::move(out), {&x}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad)
        t.accum(ids[0], ops::softmax_rows_backward(n.val, n.grad).m);
    };
  });
}

Value layer_norm(const Value& x, const Value& gamma, const Value& beta, double eps) {
  Tape* tp = common_tape({&x, &gamma, &beta});
  auto cache = std::make_shared<ops::LayerNormCache>();
  Tensor out = ops::layer_norm(x.t(), gamma.t(), beta.t(), eps,
                               tp->grad_enabled() ? cache.get() : nullptr);
  return finish(tp, std::move(out), {&x, &gamma, &beta},
                [cache](Tape&, const std::vector<int>& ids) {
                  return [ids, cache](Tape& t, const Node& n) {
                    Tensor gx, gg, gb;
                    bool nx = t.node(ids[0]).needs_grad;
                    bool ng = t.node(ids[1]).needs_grad;
                    bool nb = t.node(ids[2]).needs_grad;
                    ops::layer_norm_backward(*cache, t.node(ids[1]).val, n.grad,
                                             nx ? &gx : nullptr, ng ? &gg : nullptr,
                                             nb ? &gb : nullptr);
                    if (nx) t.accum(ids[0], gx.m);
                    if (ng) t.accum(ids[1], gg.m);
                    if (nb) t.accum(ids[2], gb.m);
                  };
                });
}

Value gelu(const Value& x) {
  Tape* tp = common_tape({&x});
  Tensor out = ops::gelu(x.t());
  return finish(tp, std::move(out), {&x}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad)
        t.accum(ids[0], ops::gelu_backward(t.node(ids[0]).val, n.grad).m);
    };
  });
}

Value sigmoid(const Value& x) {
  Tape* tp = common_tape({&x});
  Tensor out = ops::sigmoid(x.t());
  return finish(tp, std::move(out), {&x}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad) {
        Mat g = n.grad.m.cwiseProduct(
            n.val.m.cwiseProduct((1.0 - n.val.m.array()).matrix()));
        t.accum(ids[0], g);
      }
    };
  });
}

Value log_elem(const Value& x) {
  Tape* tp = common_tape({&x});
  Tensor out = x.t();
  out.m = out.m.array().log().matrix();
  return finish(tp, std::move(out), {&x}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad)
        t.accum(ids[0], n.grad.m.cwiseQuotient(t.node(ids[0]).val.m));
    };
  });
}

Value pow_const(const Value& x, double p) {
  Tape* tp = common_tape({&x});
  Tensor out = x.t();
  out.m = out.m.array().pow(p).matrix();
  return finish(tp, std::move(out), {&x}, [p](Tape&, const std::vector<int>& ids) {
    return [ids, p](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad) {
        Mat g = p * t.node(ids[0]).val.m.array().pow(p - 1.0).matrix().cwiseProduct(n.grad.m);
        t.accum(ids[0], g);
      }
    };
  });
}

Value clamp(const Value& x, double lo, double hi) {
  Tape* tp = common_tape({&x});
  Tensor out = x.t();
  out.m = out.m.array().max(lo).min(hi).matrix();
  return finish(tp, std::move(out), {&x}, [lo, hi](Tape&, const std::vector<int>& ids) {
    return [ids, lo, hi](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad) {
        const Mat& x0 = t.node(ids[0]).val.m;
        Mat g = ((x0.array() >= lo && x0.array() <= hi).cast<double>() * n.grad.m.array()).matrix();
        t.accum(ids[0], g);
      }
    };
  });
}

Value sum_all(const Value& x) {
  Tape* tp = common_tape({&x});
  Tensor out = Tensor::scalar(x.t().m.sum());
  return finish(tp, std::move(out), {&x}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad) {
        const Tensor& xv = t.node(ids[0]).val;
        t.accum(ids[0], Mat::Constant(xv.m.rows(), xv.m.cols(), n.grad.m(0, 0)));
      }
    };
  });
}

Value mean_all(const Value& x) {
  Tape* tp = common_tape({&x});
  double inv = 1.0 / static_cast<double>(x.t().size());
  Tensor out = Tensor::scalar(x.t().m.sum() * inv);
  return finish(tp, std::move(out), {&x}, [inv](Tape&, const std::vector<int>& ids) {
    return [ids, inv](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad) {
        const Tensor& xv = t.node(ids[0]).val;
        t.accum(ids[0], Mat::Constant(xv.m.rows(), xv.m.cols(), n.grad.m(0, 0) * inv));
      }
    };
  });
}

Value div_elem(const Value& a, const Value& b) {
  Tape* tp = common_tape({&a, &b});
  check_same_shape(a.t(), b.t(), "div_elem");
  Tensor out = a.t();
  out.m = out.m.cwiseQuotient(b.t().m);
  return finish(tp, std::move(out), {&a, &b}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      const Mat& av = t.node(ids[0]).val.m;
      const Mat& bv = t.node(ids[1]).val.m;
      if (t.node(ids[0]).needs_grad) t.accum(ids[0], n.grad.m.cwiseQuotient(bv));
      if (t.node(ids[1]).needs_grad)
        t.accum(ids[1], -n.grad.m.cwiseProduct(av).cwiseQuotient(bv.cwiseProduct(bv)));
    };
  });
}

Value concat_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty");
  std::vector<const Value*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  Tape* tp = nullptr;
  for (const auto& p : parts)
    if (p.tape()) tp = p.tape();
  if (!tp) throw ShapeError("concat_rows: no tape");
  int cols = parts[0].t().cols();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.t().cols() != cols) throw ShapeError("concat_rows: column mismatch");
    total += p.t().m.rows();
  }
  Tensor out = Tensor::matrix(static_cast<int>(total), cols);
  Eigen::Index at = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> spans;
  for (const auto& p : parts) {
    Eigen::Index r = p.t().m.rows();
    out.m.middleRows(at, r) = p.t().m;
    spans.emplace_back(at, r);
    at += r;
  }
  if (!tp->grad_enabled()) return tp->detached(std::move(out));
  std::vector<int> ids;
  bool ng = false;
  for (const auto& p : parts) {
    ids.push_back(tp->ensure_node(p));
    ng = ng || tp->node(ids.back()).needs_grad;
  }
  int id = tp->push(std::move(out), ng);
  if (ng)
    tp->node(id).back = [ids, spans](Tape& t, const Node& n) {
      for (size_t i = 0; i < ids.size(); ++i)
        if (t.node(ids[i]).needs_grad)
          t.accum(ids[i], n.grad.m.middleRows(spans[i].first, spans[i].second));
    };
  return tp->wrap(id);
}

Value slice_rows(const Value& x, int r0, int n) {
  Tape* tp = common_tape({&x});
  if (r0 < 0 || r0 + n > x.t().rows()) throw ShapeError("slice_rows: out of range");
  Tensor out = Tensor::from_matrix(x.t().m.middleRows(r0, n));
  return finish(tp, std::move(out), {&x}, [r0, n](Tape&, const std::vector<int>& ids) {
    return [ids, r0, n](Tape& t, const Node& nd) {
      if (t.node(ids[0]).needs_grad) {
        const Tensor& xv = t.node(ids[0]).val;
        Mat g = Mat::Zero(xv.m.rows(), xv.m.cols());
        g.middleRows(r0, n) = nd.grad.m;
        t.accum(ids[0], g);
      }
    };
  });
}

Value slice_cols(const Value& x, int c0, int n) {
  Tape* tp = common_tape({&x});
  if (c0 < 0 || c0 + n > x.t().cols()) throw ShapeError("slice_cols: out of range");
  Tensor out = Tensor::from_matrix(x.t().m.middleCols(c0, n));
  out.h = x.t().h;
  out.w = x.t().w;
  return finish(tp, std::move(out), {&x}, [c0, n](Tape&, const std::vector<int>& ids) {
    return [ids, c0, n](Tape& t, const Node& nd) {
      if (t.node(ids[0]).needs_grad) {
        const Tensor& xv = t.node(ids[0]).val;
        Mat g = Mat::Zero(xv.m.rows(), xv.m.cols());
        g.middleCols(c0, n) = nd.grad.m;
        t.accum(ids[0], g);
      }
    };
  });
}

Value concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty");
  Tape* tp = nullptr;
  for (const auto& p : parts)
    if (p.tape()) tp = p.tape();
  if (!tp) throw ShapeError("concat_cols: no tape");
  Eigen::Index rows = parts[0].t().m.rows();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.t().m.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    total += p.t().m.cols();
  }
  Tensor out = Tensor::matrix(static_cast<int>(rows), static_cast<int>(total));
  out.h = parts[0].t().h;
  out.w = parts[0].t().w;
  Eigen::Index at = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> spans;
  for (const auto& p : parts) {
    Eigen::Index cc = p.t().m.cols();
    out.m.middleCols(at, cc) = p.t().m;
    spans.emplace_back(at, cc);
    at += cc;
  }
  if (!tp->grad_enabled()) return tp->detached(std::move(out));
  std::vector<int> ids;
  bool ng = false;
  for (const auto& p : parts) {
    ids.push_back(tp->ensure_node(p));
    ng = ng || tp->node(ids.back()).needs_grad;
  }
  int id = tp->push(std::move(out), ng);
  if (ng)
    tp->node(id).back = [ids, spans](Tape& t, const Node& n) {
      for (size_t i = 0; i < ids.size(); ++i)
        if (t.node(ids[i]).needs_grad)
          t.accum(ids[i], n.grad.m.middleCols(spans[i].first, spans[i].second));
    };
  return tp->wrap(id);
}

Value conv2d(const Value& x, const Value& w, const Value& b, const ops::Conv2dSpec& spec) {
  Tape* tp = common_tape({&x, &w, &b});
  Tensor out = ops::conv2d(x.t(), w.t(), b.t(), spec);
  return finish(tp, std::move(out), {&x, &w, &b}, [spec](Tape&, const std::vector<int>& ids) {
    return [ids, spec](Tape& t, const Node& n) {
      bool nx = t.node(ids[0]).needs_grad;
      bool nw = t.node(ids[1]).needs_grad;
      bool nb = t.node(ids[2]).needs_grad;
      Tensor gx, gw, gb;
      ops::conv2d_backward(t.node(ids[0]).val, t.node(ids[1]).val, spec, n.grad,
                           nx ? &gx : nullptr, nw ? &gw : nullptr, nb ? &gb : nullptr);
      if (nx) t.accum(ids[0], gx.m);
      if (nw) t.accum(ids[1], gw.m);
      if (nb) t.accum(ids[2], gb.m);
    };
  });
}

Value avg_pool(const Value& x, int r) {
  Tape* tp = common_tape({&x});
  Tensor out = ops::avg_pool(x.t(), r);
  int h = x.t().h, w = x.t().w;
  return finish(tp, std::move(out), {&x}, [h, w, r](Tape&, const std::vector<int>& ids) {
    return [ids, h, w, r](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad)
        t.accum(ids[0], ops::avg_pool_backward(h, w, r, n.grad).m);
    };
  });
}

Value bilinear_resize(const Value& x, int ho, int wo) {
  Tape* tp = common_tape({&x});
  Tensor out = ops::bilinear_resize(x.t(), ho, wo);
  int h = x.t().h, w = x.t().w;
  return finish(tp, std::move(out), {&x}, [h, w](Tape&, const std::vector<int>& ids) {
    return [ids, h, w](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad)
        t.accum(ids[0], ops::bilinear_resize_backward(h, w, n.grad).m);
    };
  });
}

Value bilinear_sample(const Value& x, const std::vector<std::array<double, 2>>& pts) {
  Tape* tp = common_tape({&x});
  Tensor out = ops::bilinear_sample(x.t(), pts);
  int h = x.t().h, w = x.t().w, c = x.t().cols();
  return finish(tp, std::move(out), {&x}, [h, w, c, pts](Tape&, const std::vector<int>& ids) {
    return [ids, h, w, c, pts](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad)
        t.accum(ids[0], ops::bilinear_sample_backward(h, w, c, pts, n.grad).m);
    };
  });
}

Value tag_grid(const Value& x, int h, int w) {
  Tape* tp = common_tape({&x});
  if (static_cast<Eigen::Index>(h) * w != x.t().m.rows())
    throw ShapeError("tag_grid: h*w != rows");
  Tensor out = x.t();
  out.h = h;
  out.w = w;
  return finish(tp, std::move(out), {&x}, [](Tape&, const std::vector<int>& ids) {
    return [ids](Tape& t, const Node& n) {
      if (t.node(ids[0]).needs_grad) t.accum(ids[0], n.grad.m);
    };
  });
}

}  // namespace xvseg
