#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <string>

namespace xvseg {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense double tensor. Storage is always a rows x cols row-major matrix; a
// spatial tensor additionally carries a (h, w, c) tag with rows == h*w and
// cols == c, rows enumerated in (y, x) raster order. Channels-last.
class Tensor {
 public:
  Tensor() = default;

  static Tensor matrix(int rows, int cols) {
    Tensor t;
    t.m = Mat::Zero(rows, cols);
    return t;
  }
  static Tensor grid(int h, int w, int c) {
    Tensor t;
    t.m = Mat::Zero(static_cast<Eigen::Index>(h) * w, c);
    t.h = h;
    t.w = w;
    return t;
  }
  static Tensor scalar(double v) {
    Tensor t = matrix(1, 1);
    t.m(0, 0) = v;
    return t;
  }
  static Tensor from_matrix(Mat mat) {
    Tensor t;
    t.m = std::move(mat);
    return t;
  }

  int rows() const { return static_cast<int>(m.rows()); }
  int cols() const { return static_cast<int>(m.cols()); }
  std::int64_t size() const { return m.size(); }
  bool is_grid() const { return h > 0; }
  int channels() const { return cols(); }

  double& at(int r, int c) { return m(r, c); }
  double at(int r, int c) const { return m(r, c); }
  // Grid accessors, (y, x) in raster order.
  double& at(int y, int x, int c) { return m(static_cast<Eigen::Index>(y) * w + x, c); }
  double at(int y, int x, int c) const { return m(static_cast<Eigen::Index>(y) * w + x, c); }

  double item() const { return m(0, 0); }

  bool same_shape(const Tensor& o) const {
    return rows() == o.rows() && cols() == o.cols() && h == o.h && w == o.w;
  }

  // Keeps data, reinterprets the row dimension as a (gh, gw) raster.
  Tensor& tag_grid(int gh, int gw) {
    h = gh;
    w = gw;
    return *this;
  }
  Tensor untagged() const {
    Tensor t = *this;
    t.h = 0;
    t.w = 0;
    return t;
  }

  bool all_finite() const { return m.allFinite(); }

  std::string shape_str() const;

  Mat m;
  int h = 0;  // 0 when not a spatial grid
  int w = 0;
};

}  // namespace xvseg
