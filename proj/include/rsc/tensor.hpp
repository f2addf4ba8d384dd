#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rsc/error.hpp"
#include "rsc/rng.hpp"

namespace rsc {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major array of doubles. Images are channels-first (C x H x W),
/// matrices are rows x cols.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(shape_size(shape_), 0.0);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents(shape_);
    if (data_.size() != shape_size(shape_))
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_str(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& vec() noexcept { return data_; }
  const std::vector<double>& vec() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }

  double& at(std::size_t c, std::size_t i, std::size_t j) noexcept {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double at(std::size_t c, std::size_t i, std::size_t j) const noexcept {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  void fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static void check_extents(const Shape& s) {
    if (s.empty()) throw ShapeError("tensor shape must have at least one extent");
    for (auto e : s)
      if (e == 0) throw ShapeError("zero extent in shape " + shape_str(s));
  }

  Shape shape_;
  std::vector<double> data_;
};

inline Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

/// Elements drawn uniformly from [lo, hi) in row-major order.
inline Tensor uniform_init(Shape shape, double lo, double hi, SeededRng& rng) {
  if (!(lo < hi)) throw RangeError("uniform_init requires lo < hi");
  Tensor t(std::move(shape));
  for (auto& v : t.data()) {
    v = rng.uniform(lo, hi);
    if (v >= hi) v = std::nextafter(hi, lo);
  }
  return t;
}

inline void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + " must be a matrix, got " + shape_str(t.shape()));
}

namespace detail {

// The three kernels below accumulate every output element over the inner
// index in increasing order, which keeps results bit-reproducible. Output
// buffers must be zeroed by the caller for the accumulating variants.

// c(m x n) += a(m x k) * b(k x n)
inline void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* row = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
}

// c(m x n) = a(m x k) * b(n x k)^T. b is transposed first so the inner loop
// runs over contiguous memory; every c[i][j] still sums p = 0..k-1 in order.
inline void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  std::fill(c, c + m * n, 0.0);
  gemm_nn(m, k, n, a, bt.data(), c);
}

// c(m x n) += a(k x m)^T * b(k x n)
inline void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) {
      const double s = a[p * m + i];
      double* row = c + i * n;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
}

}  // namespace detail

/// a (m x k) * b (k x n)
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor c({m, n});
  detail::gemm_nn(m, k, n, a.data().data(), b.data().data(), c.data().data());
  return c;
}

/// a (m x k) * b^T where b is (n x k)
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt lhs");
  require_matrix(b, "matmul_nt rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) throw ShapeError("matmul_nt inner extents differ");
  Tensor c({m, n});
  detail::gemm_nt(m, k, n, a.data().data(), b.data().data(), c.data().data());
  return c;
}

/// a^T * b where a is (k x m) and b is (k x n)
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn lhs");
  require_matrix(b, "matmul_tn rhs");
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul_tn inner extents differ");
  Tensor c({m, n});
  detail::gemm_tn(m, k, n, a.data().data(), b.data().data(), c.data().data());
  return c;
}

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  const std::size_t padded = in + 2 * pad;
  if (stride == 0 || padded < k || (padded - k) % stride != 0)
    throw ShapeError("non-integral convolution output size for extent " + std::to_string(in));
  return (padded - k) / stride + 1;
}

/// Unfolds a C x H x W input into a (C*k*k) x (Hout*Wout) matrix. Row index
/// is (c*k + u)*k + v, column j is the receptive field of output position j.
/// Out-of-image taps read as zero.
inline Tensor im2col(const Tensor& input, std::size_t k, std::size_t stride, std::size_t pad) {
  if (input.rank() != 3) throw ShapeError("im2col expects C x H x W input, got " + shape_str(input.shape()));
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const std::size_t Ho = conv_out_extent(H, k, stride, pad);
  const std::size_t Wo = conv_out_extent(W, k, stride, pad);
  Tensor cols({C * k * k, Ho * Wo});
  double* out = cols.data().data();
  const double* in = input.data().data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t u = 0; u < k; ++u)
      for (std::size_t v = 0; v < k; ++v) {
        double* row = out + ((c * k + u) * k + v) * Ho * Wo;
        for (std::size_t i = 0; i < Ho; ++i) {
          const long y = static_cast<long>(i * stride + u) - static_cast<long>(pad);
          if (y < 0 || y >= static_cast<long>(H)) continue;
          const double* src = in + (c * H + static_cast<std::size_t>(y)) * W;
          for (std::size_t j = 0; j < Wo; ++j) {
            const long x = static_cast<long>(j * stride + v) - static_cast<long>(pad);
            if (x >= 0 && x < static_cast<long>(W)) row[i * Wo + j] = src[x];
          }
        }
      }
  return cols;
}

/// Adjoint of im2col: scatters column entries back onto a C x H x W grid,
/// summing overlapping taps.
inline Tensor col2im(const Tensor& cols, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
                     std::size_t stride, std::size_t pad) {
  const std::size_t Ho = conv_out_extent(H, k, stride, pad);
  const std::size_t Wo = conv_out_extent(W, k, stride, pad);
  if (cols.rank() != 2 || cols.dim(0) != C * k * k || cols.dim(1) != Ho * Wo)
    throw ShapeError("col2im column matrix has shape " + shape_str(cols.shape()));
  Tensor img({C, H, W});
  double* out = img.data().data();
  const double* in = cols.data().data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t u = 0; u < k; ++u)
      for (std::size_t v = 0; v < k; ++v) {
        const double* row = in + ((c * k + u) * k + v) * Ho * Wo;
        for (std::size_t i = 0; i < Ho; ++i) {
          const long y = static_cast<long>(i * stride + u) - static_cast<long>(pad);
          if (y < 0 || y >= static_cast<long>(H)) continue;
          double* dst = out + (c * H + static_cast<std::size_t>(y)) * W;
          for (std::size_t j = 0; j < Wo; ++j) {
            const long x = static_cast<long>(j * stride + v) - static_cast<long>(pad);
            if (x >= 0 && x < static_cast<long>(W)) dst[x] += row[i * Wo + j];
          }
        }
      }
  return img;
}

}  // namespace rsc
