#pragma once

#include <array>
#include <vector>

#include "xvseg/tensor.hpp"

namespace xvseg::ops {

// Row-wise softmax.
Tensor softmax_rows(const Tensor& x);
// gx from the softmax output y and upstream gy.
Tensor softmax_rows_backward(const Tensor& y, const Tensor& gy);

struct LayerNormCache {
  Tensor xhat;               // normalized input
  Eigen::VectorXd inv_std;   // per row
};
// Per-row layer norm with affine (gamma, beta are 1 x C). cache may be null.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps, LayerNormCache* cache);
void layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma,
                         const Tensor& gy, Tensor* gx, Tensor* ggamma,
                         Tensor* gbeta);

// Exact (erf) GELU; smooth, which keeps finite-difference checks clean.
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& gy);

Tensor sigmoid(const Tensor& x);

struct Conv2dSpec {
  int kernel = 3;
  int stride = 1;
  int pad = 1;
};
// x: (h, w, cin) grid; w: (kernel*kernel*cin) x cout, row (ky*kernel+kx)*cin+ci;
// b: 1 x cout. Zero padding. Implemented as a sum of shifted matmuls so no
// full im2col buffer is ever materialized.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv2dSpec& spec);
void conv2d_backward(const Tensor& x, const Tensor& w, const Conv2dSpec& spec,
                     const Tensor& gy, Tensor* gx, Tensor* gw, Tensor* gb);

// Non-overlapping r x r mean pooling; grid dims must be divisible by r.
Tensor avg_pool(const Tensor& x, int r);
Tensor avg_pool_backward(int h_in, int w_in, int r, const Tensor& gy);

// Bilinear resize with half-pixel centers and edge clamping.
Tensor bilinear_resize(const Tensor& x, int ho, int wo);
Tensor bilinear_resize_backward(int h_in, int w_in, const Tensor& gy);

// Bilinear sample of a (h, w, c) grid at continuous grid coords (x, y),
// clamped to the valid range. Returns n x c.
Tensor bilinear_sample(const Tensor& grid, const std::vector<std::array<double, 2>>& pts);
Tensor bilinear_sample_backward(int h_in, int w_in, int c,
                                const std::vector<std::array<double, 2>>& pts,
                                const Tensor& gy);

}  // namespace xvseg::ops
