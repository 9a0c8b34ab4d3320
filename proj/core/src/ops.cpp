#include "xvseg/ops.hpp"

#include <algorithm>
#include <cmath>

#include "xvseg/errors.hpp"

namespace xvseg::ops {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }
}  // namespace

Tensor softmax_rows(const Tensor& x) {
  Tensor y = x;
  for (Eigen::Index r = 0; r < y.m.rows(); ++r) {
    auto row = y.m.row(r);
    double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
  return y;
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& gy) {
  Tensor gx = y;
  for (Eigen::Index r = 0; r < y.m.rows(); ++r) {
    double dot = y.m.row(r).dot(gy.m.row(r));
    gx.m.row(r) = y.m.row(r).cwiseProduct((gy.m.row(r).array() - dot).matrix());
  }
  return gx;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps, LayerNormCache* cache) {
  const Eigen::Index n = x.m.rows(), c = x.m.cols();
  Tensor y = x;
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double mean = x.m.row(r).mean();
    double var = (x.m.row(r).array() - mean).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(r) = is;
    y.m.row(r) = ((x.m.row(r).array() - mean) * is).matrix();
  }
  if (cache) {
    cache->xhat = y;
    cache->inv_std = inv_std;
  }
  for (Eigen::Index r = 0; r < n; ++r)
    y.m.row(r) = y.m.row(r).cwiseProduct(gamma.m.row(0)) + beta.m.row(0);
  (void)c;
  return y;
}

void layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma,
                         const Tensor& gy, Tensor* gx, Tensor* ggamma, Tensor* gbeta) {
  const Eigen::Index n = gy.m.rows(), c = gy.m.cols();
  if (ggamma) {
    ggamma->m = (cache.xhat.m.cwiseProduct(gy.m)).colwise().sum();
  }
  if (gbeta) {
    gbeta->m = gy.m.colwise().sum();
  }
  if (gx) {
    gx->m.resize(n, c);
    gx->h = gy.h;
    gx->w = gy.w;
    for (Eigen::Index r = 0; r < n; ++r) {
      Eigen::RowVectorXd gh = gy.m.row(r).cwiseProduct(gamma.m.row(0));
      double m1 = gh.mean();
      double m2 = gh.cwiseProduct(cache.xhat.m.row(r)).mean();
      gx->m.row(r) = cache.inv_std(r) *
                     (gh.array() - m1 - cache.xhat.m.row(r).array() * m2).matrix();
    }
  }
}

Tensor gelu(const Tensor& x) {
  Tensor y = x;
  y.m = x.m.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
  return y;
}

Tensor gelu_backward(const Tensor& x, const Tensor& gy) {
  Tensor gx = x;
  gx.m = x.m.unaryExpr([](double v) {
    double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    return cdf + v * pdf;
  });
  gx.m = gx.m.cwiseProduct(gy.m);
  return gx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  y.m = x.m.unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  return y;
}

// Gathers the stride-s window slice of x for kernel offset (ky, kx) into an
// (ho*wo) x cin matrix. Out-of-bounds rows are zero.
static Mat shift_gather(const Tensor& x, int ho, int wo, int ky, int kx,
                        const Conv2dSpec& s) {
  const int cin = x.cols();
  Mat out = Mat::Zero(static_cast<Eigen::Index>(ho) * wo, cin);
  for (int oy = 0; oy < ho; ++oy) {
    int iy = oy * s.stride + ky - s.pad;
    if (iy < 0 || iy >= x.h) continue;
    for (int ox = 0; ox < wo; ++ox) {
      int ix = ox * s.stride + kx - s.pad;
      if (ix < 0 || ix >= x.w) continue;
      out.row(static_cast<Eigen::Index>(oy) * wo + ox) =
          x.m.row(static_cast<Eigen::Index>(iy) * x.w + ix);
    }
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv2dSpec& spec) {
  if (!x.is_grid()) throw ShapeError("conv2d: input must be a spatial grid");
  const int cin = x.cols();
  const int k = spec.kernel;
  if (w.rows() != k * k * cin)
    throw ShapeError("conv2d: weight rows != kernel*kernel*cin");
  const int cout = w.cols();
  const int ho = (x.h + 2 * spec.pad - k) / spec.stride + 1;
  const int wo = (x.w + 2 * spec.pad - k) / spec.stride + 1;
  Tensor y = Tensor::grid(ho, wo, cout);
  for (int ky = 0; ky < k; ++ky)
    for (int kx = 0; kx < k; ++kx) {
      Mat xs = shift_gather(x, ho, wo, ky, kx, spec);
      y.m.noalias() += xs * w.m.middleRows(static_cast<Eigen::Index>(ky * k + kx) * cin, cin);
    }
  y.m.rowwise() += b.m.row(0);
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Conv2dSpec& spec,
                     const Tensor& gy, Tensor* gx, Tensor* gw, Tensor* gb) {
  const int cin = x.cols();
  const int k = spec.kernel;
  const int ho = gy.h, wo = gy.w;
  if (gb) gb->m = gy.m.colwise().sum();
  if (gw) {
    gw->m = Mat::Zero(w.rows(), w.cols());
  }
  if (gx) {
    gx->m = Mat::Zero(x.m.rows(), x.m.cols());
    gx->h = x.h;
    gx->w = x.w;
  }
  for (int ky = 0; ky < k; ++ky)
    for (int kx = 0; kx < k; ++kx) {
      const Eigen::Index wrow = static_cast<Eigen::Index>(ky * k + kx) * cin;
      if (gw) {
        Mat xs = shift_gather(x, ho, wo, ky, kx, spec);
        gw->m.middleRows(wrow, cin).noalias() += xs.transpose() * gy.m;
      }
      if (gx) {
        Mat gxs = gy.m * w.m.middleRows(wrow, cin).transpose();  // (ho*wo) x cin
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * spec.stride + ky - spec.pad;
          if (iy < 0 || iy >= x.h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * spec.stride + kx - spec.pad;
            if (ix < 0 || ix >= x.w) continue;
            gx->m.row(static_cast<Eigen::Index>(iy) * x.w + ix) +=
                gxs.row(static_cast<Eigen::Index>(oy) * wo + ox);
          }
        }
      }
    }
}

Tensor avg_pool(const Tensor& x, int r) {
  if (!x.is_grid()) throw ShapeError("avg_pool: input must be a spatial grid");
  if (x.h % r != 0 || x.w % r != 0)
    throw ShapeError("avg_pool: grid " + x.shape_str() + " not divisible by window " +
                     std::to_string(r));
  const int ho = x.h / r, wo = x.w / r, c = x.cols();
  Tensor y = Tensor::grid(ho, wo, c);
  const double inv = 1.0 / (r * r);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      auto acc = y.m.row(static_cast<Eigen::Index>(oy) * wo + ox);
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx)
          acc += x.m.row(static_cast<Eigen::Index>(oy * r + dy) * x.w + (ox * r + dx));
      acc *= inv;
    }
  return y;
}

Tensor avg_pool_backward(int h_in, int w_in, int r, const Tensor& gy) {
  const int c = gy.cols();
  Tensor gx = Tensor::grid(h_in, w_in, c);
  const double inv = 1.0 / (r * r);
  for (int oy = 0; oy < gy.h; ++oy)
    for (int ox = 0; ox < gy.w; ++ox) {
      Eigen::RowVectorXd g = gy.m.row(static_cast<Eigen::Index>(oy) * gy.w + ox) * inv;
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx)
          gx.m.row(static_cast<Eigen::Index>(oy * r + dy) * w_in + (ox * r + dx)) = g;
    }
  return gx;
}

namespace {
struct Lerp {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1-w1
};
inline Lerp axis_lerp(double src, int n) {
  double f = std::floor(src);
  Lerp l;
  l.w1 = src - f;
  int i = static_cast<int>(f);
  l.i0 = clampi(i, 0, n - 1);
  l.i1 = clampi(i + 1, 0, n - 1);
  return l;
}
}  // namespace

Tensor bilinear_resize(const Tensor& x, int ho, int wo) {
  if (!x.is_grid()) throw ShapeError("bilinear_resize: input must be a spatial grid");
  const int c = x.cols();
  Tensor y = Tensor::grid(ho, wo, c);
  const double sy = static_cast<double>(x.h) / ho;
  const double sx = static_cast<double>(x.w) / wo;
  for (int oy = 0; oy < ho; ++oy) {
    Lerp ly = axis_lerp((oy + 0.5) * sy - 0.5, x.h);
    for (int ox = 0; ox < wo; ++ox) {
      Lerp lx = axis_lerp((ox + 0.5) * sx - 0.5, x.w);
      y.m.row(static_cast<Eigen::Index>(oy) * wo + ox) =
          (1 - ly.w1) * (1 - lx.w1) * x.m.row(static_cast<Eigen::Index>(ly.i0) * x.w + lx.i0) +
          (1 - ly.w1) * lx.w1 * x.m.row(static_cast<Eigen::Index>(ly.i0) * x.w + lx.i1) +
          ly.w1 * (1 - lx.w1) * x.m.row(static_cast<Eigen::Index>(ly.i1) * x.w + lx.i0) +
          ly.w1 * lx.w1 * x.m.row(static_cast<Eigen::Index>(ly.i1) * x.w + lx.i1);
    }
  }
  return y;
}

Tensor bilinear_resize_backward(int h_in, int w_in, const Tensor& gy) {
  const int c = gy.cols();
  Tensor gx = Tensor::grid(h_in, w_in, c);
  const double sy = static_cast<double>(h_in) / gy.h;
  const double sx = static_cast<double>(w_in) / gy.w;
  for (int oy = 0; oy < gy.h; ++oy) {
    Lerp ly = axis_lerp((oy + 0.5) * sy - 0.5, h_in);
    for (int ox = 0; ox < gy.w; ++ox) {
      Lerp lx = axis_lerp((ox + 0.5) * sx - 0.5, w_in);
      auto g = gy.m.row(static_cast<Eigen::Index>(oy) * gy.w + ox);
      gx.m.row(static_cast<Eigen::Index>(ly.i0) * w_in + lx.i0) += (1 - ly.w1) * (1 - lx.w1) * g;
      gx.m.row(static_cast<Eigen::Index>(ly.i0) * w_in + lx.i1) += (1 - ly.w1) * lx.w1 * g;
      gx.m.row(static_cast<Eigen::Index>(ly.i1) * w_in + lx.i0) += ly.w1 * (1 - lx.w1) * g;
      gx.m.row(static_cast<Eigen::Index>(ly.i1) * w_in + lx.i1) += ly.w1 * lx.w1 * g;
    }
  }
  return gx;
}

Tensor bilinear_sample(const Tensor& grid, const std::vector<std::array<double, 2>>& pts) {
  if (!grid.is_grid()) throw ShapeError("bilinear_sample: input must be a spatial grid");
  Tensor y = Tensor::matrix(static_cast<int>(pts.size()), grid.cols());
  for (size_t i = 0; i < pts.size(); ++i) {
    Lerp lx = axis_lerp(pts[i][0], grid.w);
    Lerp ly = axis_lerp(pts[i][1], grid.h);
    y.m.row(static_cast<Eigen::Index>(i)) =
        (1 - ly.w1) * (1 - lx.w1) * grid.m.row(static_cast<Eigen::Index>(ly.i0) * grid.w + lx.i0) +
        (1 - ly.w1) * lx.w1 * grid.m.row(static_cast<Eigen::Index>(ly.i0) * grid.w + lx.i1) +
        ly.w1 * (1 - lx.w1) * grid.m.row(static_cast<Eigen::Index>(ly.i1) * grid.w + lx.i0) +
        ly.w1 * lx.w1 * grid.m.row(static_cast<Eigen::Index>(ly.i1) * grid.w + lx.i1);
  }
  return y;
}

Tensor bilinear_sample_backward(int h_in, int w_in, int c,
                                const std::vector<std::array<double, 2>>& pts,
                                const Tensor& gy) {
  Tensor gx = Tensor::grid(h_in, w_in, c);
  for (size_t i = 0; i < pts.size(); ++i) {
    Lerp lx = axis_lerp(pts[i][0], w_in);
    Lerp ly = axis_lerp(pts[i][1], h_in);
    auto g = gy.m.row(static_cast<Eigen::Index>(i));
    gx.m.row(static_cast<Eigen::Index>(ly.i0) * w_in + lx.i0) += (1 - ly.w1) * (1 - lx.w1) * g;
    gx.m.row(static_cast<Eigen::Index>(ly.i0) * w_in + lx.i1) += (1 - ly.w1) * lx.w1 * g;
    gx.m.row(static_cast<Eigen::Index>(ly.i1) * w_in + lx.i0) += ly.w1 * (1 - lx.w1) * g;
    gx.m.row(static_cast<Eigen::Index>(ly.i1) * w_in + lx.i1) += ly.w1 * lx.w1 * g;
  }
  return gx;
}

}  // namespace xvseg::ops
