#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>

#include "xvseg/autograd.hpp"
#include "xvseg/nn.hpp"
#include "xvseg/rng.hpp"

using namespace xvseg;

namespace {

Tensor rand_tensor(Rng& rng, int r, int c, double s = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) t.m(i, j) = rng.normal(0.0, s);
  return t;
}

Tensor rand_grid(Rng& rng, int h, int w, int c, double s = 1.0) {
  Tensor t = rand_tensor(rng, h * w, c, s);
  t.tag_grid(h, w);
  return t;
}

// Exhaustive central-difference check of d(loss)/d(param) for every scalar
// in every listed param. Returns the max relative error.
double max_fd_error(const std::function<Value(Tape&)>& fwd, std::vector<Param*> params) {
  Tape tp(true);
  Value loss = fwd(tp);
  tp.backward(loss);
  std::map<const Param*, Tensor> analytic;
  tp.for_each_param_grad([&](Param& p, const Tensor& g) {
    auto [it, fresh] = analytic.emplace(&p, g);
    if (!fresh) it->second.m += g.m;
  });
  auto eval = [&fwd]() {
    Tape t0(false);
    return fwd(t0).t().item();
  };
  double worst = 0;
  for (Param* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double* slot = p->value.m.data() + i;
      double theta = *slot;
      double h = 1e-5 * std::max(std::abs(theta), 1.0);
      *slot = theta + h;
      double up = eval();
      *slot = theta - h;
      double dn = eval();
      *slot = theta;
      double fd = (up - dn) / (2 * h);
      double an = analytic.count(p) ? analytic[p].m.data()[i] : 0.0;
      double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("elementwise and matmul gradients match finite differences") {
  Rng rng(7);
  ParamStore ps;
  Param& a = ps.add("a", "t", rand_tensor(rng, 3, 4));
  Param& b = ps.add("b", "t", rand_tensor(rng, 3, 4));
  Param& w = ps.add("w", "t", rand_tensor(rng, 4, 5));
  Param& bias = ps.add("bias", "t", rand_tensor(rng, 1, 5, 0.1));

  auto fwd = [&](Tape& tp) {
    Value x = mul(tp.param(a), sigmoid(tp.param(b)));
    Value y = add_bias(matmul(x, tp.param(w)), tp.param(bias));
    Value z = gelu(sub(y, scale(y, 0.25)));
    return mean_all(mul(z, z));
  };
  CHECK(max_fd_error(fwd, {&a, &b, &w, &bias}) < 1e-7);
}

TEST_CASE("softmax, layer norm, log, pow, clamp, div gradients") {
  Rng rng(11);
  ParamStore ps;
  Param& x = ps.add("x", "t", rand_tensor(rng, 4, 6));
  Param& g = ps.add("g", "t", rand_tensor(rng, 1, 6, 0.2));
  Param& be = ps.add("be", "t", rand_tensor(rng, 1, 6, 0.2));
  // keep values away from clamp kinks
  auto fwd = [&](Tape& tp) {
    Value ln = layer_norm(tp.param(x), add_scalar(tp.param(g), 1.0), tp.param(be));
    Value sm = softmax_rows(ln);
    Value safe = clamp(sm, 1e-7, 1.0 - 1e-7);
    Value l = log_elem(safe);
    Value p = pow_const(add_scalar(sm, 2.0), 1.7);
    Value d = div_elem(p, add_scalar(sm, 3.0));
    return add(mean_all(mul(l, d)), sum_all(scale(sm, 0.01)));
  };
  CHECK(max_fd_error(fwd, {&x, &g, &be}) < 1e-6);
}

TEST_CASE("conv2d / avg_pool / bilinear_resize / bilinear_sample gradients") {
  Rng rng(13);
  ParamStore ps;
  Param& x = ps.add("x", "t", rand_grid(rng, 6, 6, 2));
  Param& w = ps.add("w", "t", rand_tensor(rng, 9 * 2, 3, 0.4));
  Param& b = ps.add("b", "t", rand_tensor(rng, 1, 3, 0.1));
  Param& xs = ps.add("xs", "t", rand_grid(rng, 4, 4, 2));
  Param& wc = ps.add("wc", "t", rand_tensor(rng, 16, 3, 0.4));  // 4x4 stride-2 conv, cin=1

  std::vector<std::array<double, 2>> pts{{0.3, 0.7}, {2.9, 1.2}, {0.0, 3.0}};
  auto fwd = [&](Tape& tp) {
    Value c = conv2d(tp.param(x), tp.param(w), tp.param(b), ops::Conv2dSpec{3, 1, 1});
    Value pooled = avg_pool(c, 2);
    Value up = bilinear_resize(pooled, 5, 5);
    Value sampled = bilinear_sample(tp.param(xs), pts);
    Value strided = conv2d(slice_cols(tp.param(xs), 0, 1), tp.param(wc), tp.param(b),
                           ops::Conv2dSpec{4, 2, 1});
    return add(add(mean_all(mul(up, up)), mean_all(mul(sampled, sampled))),
               mean_all(strided));
  };
  CHECK(max_fd_error(fwd, {&x, &w, &b, &xs, &wc}) < 1e-6);
}

TEST_CASE("multi-head attention and ffn gradients") {
  Rng rng(17);
  ParamStore ps;
  Param& q = ps.add("q", "t", rand_tensor(rng, 3, 8));
  Param& k = ps.add("k", "t", rand_tensor(rng, 5, 8));
  AttnP attn = make_attn(ps, "attn", "t", 8, rng);
  FfnP f = make_ffn(ps, "ffn", "t", 8, 16, rng);
  LayerNormP ln = make_layer_norm(ps, "ln", "t", 8);

  auto fwd = [&](Tape& tp) {
    Value qq = tp.param(q);
    Value kk = tp.param(k);
    Value o = mha(tp, attn, qq, kk, kk, 2);
    Value o2 = add(o, ffn(tp, f, layer_norm(tp, ln, o)));
    return mean_all(mul(o2, o2));
  };
  std::vector<Param*> params{&q, &k, attn.q.w, attn.q.b, attn.k.w, attn.v.w,
                             attn.o.w, attn.o.b, f.fc1.w, f.fc2.w, ln.gamma, ln.beta};
  CHECK(max_fd_error(fwd, params) < 1e-6);
}

TEST_CASE("concat/slice round trips and gradients") {
  Rng rng(19);
  ParamStore ps;
  Param& a = ps.add("a", "t", rand_tensor(rng, 2, 4));
  Param& b = ps.add("b", "t", rand_tensor(rng, 3, 4));
  auto fwd = [&](Tape& tp) {
    Value cat = concat_rows({tp.param(a), tp.param(b)});
    Value s1 = slice_rows(cat, 1, 3);
    Value cols = concat_cols({slice_cols(s1, 0, 2), slice_cols(s1, 2, 2)});
    return mean_all(mul(cols, cols));
  };
  CHECK(max_fd_error(fwd, {&a, &b}) < 1e-8);

  // value-level: concat then slice is the identity
  Tape tp(false);
  Value cat = concat_rows({tp.param(a), tp.param(b)});
  CHECK(slice_rows(cat, 0, 2).t().m == a.value.m);
  CHECK(slice_rows(cat, 2, 3).t().m == b.value.m);
}

TEST_CASE("no-grad tape records nothing and detaches values") {
  Rng rng(23);
  ParamStore ps;
  Param& a = ps.add("a", "t", rand_tensor(rng, 2, 2));
  Tape tp(false);
  Value v = mul(tp.param(a), tp.param(a));
  CHECK(tp.node_count() == 0);
  CHECK(v.t().rows() == 2);
  CHECK_THROWS(tp.backward(v));
}

TEST_CASE("constants receive no gradients; severed inputs stay severed") {
  Rng rng(29);
  ParamStore ps;
  Param& a = ps.add("a", "t", rand_tensor(rng, 2, 2));
  Tape tp(true);
  Value c = tp.constant(rand_tensor(rng, 2, 2));
  Value loss = mean_all(mul(tp.param(a), c));
  tp.backward(loss);
  int leaves = 0;
  tp.for_each_param_grad([&](Param&, const Tensor& g) {
    ++leaves;
    CHECK(g.m.allFinite());
    CHECK(g.m.cwiseAbs().sum() > 0.0);
  });
  CHECK(leaves == 1);
}

TEST_CASE("negative control: a corrupted analytic gradient is detected") {
  Rng rng(31);
  ParamStore ps;
  Param& a = ps.add("a", "t", rand_tensor(rng, 2, 3));
  auto fwd = [&](Tape& tp) { return mean_all(mul(tp.param(a), tp.param(a))); };

  Tape tp(true);
  Value loss = fwd(tp);
  tp.backward(loss);
  Tensor grad;
  tp.for_each_param_grad([&](Param&, const Tensor& g) { grad = g; });
  grad.m(0, 0) += 0.5;  // deliberate corruption
  auto eval = [&fwd]() {
    Tape t0(false);
    return fwd(t0).t().item();
  };
  double theta = a.value.m(0, 0);
  double h = 1e-5;
  a.value.m(0, 0) = theta + h;
  double up = eval();
  a.value.m(0, 0) = theta - h;
  double dn = eval();
  a.value.m(0, 0) = theta;
  double fd = (up - dn) / (2 * h);
  CHECK(std::abs(fd - grad.m(0, 0)) > 0.4);  // corruption flagged
}
