#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Core>

#include "nsopt/errors.hpp"

namespace nsopt {

using Index = std::int64_t;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

/// Dense tensor of doubles with row-major storage. Shapes are fixed-rank
/// lists: vector [n], matrix [r,c], general [d1..dk]; scalars use [1].
/// All arithmetic on tensors goes through the kernels below, which use
/// explicit loops with a fixed accumulation order so that repeated
/// evaluations (and independently coded gradient paths) produce
/// bit-identical results.
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(Eigen::VectorXd::Zero(shape_size(shape_))) {}

  Tensor(Shape shape, Eigen::VectorXd data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw ShapeMismatchError("tensor data length does not match shape");
  }

  static Tensor scalar(double v) {
    Tensor t({1});
    t.data_[0] = v;
    return t;
  }

  /// Matrix [r,c] from an Eigen matrix (converted to row-major order).
  static Tensor matrix(const Eigen::MatrixXd& m) {
    Tensor t({m.rows(), m.cols()});
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) t.data_[i * m.cols() + j] = m(i, j);
    return t;
  }

  /// Vector [n].
  static Tensor vector(const Eigen::VectorXd& v) { return Tensor({v.size()}, v); }

  /// Column matrix [n,1].
  static Tensor column(const Eigen::VectorXd& v) { return Tensor({v.size(), 1}, v); }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }
  bool empty() const { return shape_.empty(); }

  double operator[](Index i) const { return data_[i]; }
  double& operator[](Index i) { return data_[i]; }

  const Eigen::VectorXd& flat() const { return data_; }
  Eigen::VectorXd& flat() { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (Index i = 0; i < data_.size(); ++i)
      if (!std::isfinite(data_[i])) return false;
    return true;
  }

  bool is_scalar() const { return data_.size() == 1; }

  double scalar_value() const {
    if (!is_scalar()) throw ShapeMismatchError("tensor is not a scalar");
    return data_[0];
  }

  // rank-2 helpers
  Index rows() const { return shape_.at(0); }
  Index cols() const { return shape_.at(1); }
  double at2(Index i, Index j) const { return data_[i * cols() + j]; }
  double& at2(Index i, Index j) { return data_[i * cols() + j]; }

private:
  Shape shape_;
  Eigen::VectorXd data_;
};

/// Elementary tensor kernels. Deterministic loop order throughout;
/// reductions accumulate left to right in flat index order.
namespace kernels {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeMismatchError(std::string(op) + ": operand shapes differ");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros_like(a);
  for (Index i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros_like(a);
  for (Index i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Tensor neg(const Tensor& a) {
  Tensor out = Tensor::zeros_like(a);
  for (Index i = 0; i < a.size(); ++i) out[i] = -a[i];
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros_like(a);
  for (Index i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline Tensor smul(double c, const Tensor& a) {
  Tensor out = Tensor::zeros_like(a);
  for (Index i = 0; i < a.size(); ++i) out[i] = c * a[i];
  return out;
}

/// A [r,k] times B, where B is [k,c] (result [r,c]) or [k] (result [r]).
/// Inner products accumulate over the shared index in increasing order.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2) throw ShapeMismatchError("matmul: left operand must be rank 2");
  const Index r = a.rows(), k = a.cols();
  if (b.rank() == 2) {
    if (b.rows() != k) throw ShapeMismatchError("matmul: inner dimensions differ");
    const Index c = b.cols();
    Tensor out(Shape{r, c});
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) {
        double s = 0.0;
        for (Index l = 0; l < k; ++l) s += a.at2(i, l) * b.at2(l, j);
        out.at2(i, j) = s;
      }
    return out;
  }
  if (b.rank() == 1) {
    if (b.shape()[0] != k) throw ShapeMismatchError("matmul: inner dimensions differ");
    Tensor out(Shape{r});
    for (Index i = 0; i < r; ++i) {
      double s = 0.0;
      for (Index l = 0; l < k; ++l) s += a.at2(i, l) * b[l];
      out[i] = s;
    }
    return out;
  }
  throw ShapeMismatchError("matmul: right operand must be rank 1 or 2");
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw UnsupportedOpError("transpose: rank-2 tensors only");
  Tensor out(Shape{a.cols(), a.rows()});
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out.at2(j, i) = a.at2(i, j);
  return out;
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw ShapeMismatchError("reshape: element count changed");
  return Tensor(std::move(shape), a.flat());
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (Index i = 0; i < a.size(); ++i) s += a[i];
  return Tensor::scalar(s);
}

inline Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeMismatchError("dot: sizes differ");
  double s = 0.0;
  for (Index i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return Tensor::scalar(s);
}

inline double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

inline Tensor abs(const Tensor& a) {
  Tensor out = Tensor::zeros_like(a);
  for (Index i = 0; i < a.size(); ++i) out[i] = std::abs(a[i]);
  return out;
}

inline Tensor sign(const Tensor& a) {
  Tensor out = Tensor::zeros_like(a);
  for (Index i = 0; i < a.size(); ++i) out[i] = sign_of(a[i]);
  return out;
}

inline Tensor relu(const Tensor& a) {
  Tensor out = Tensor::zeros_like(a);
  for (Index i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return out;
}

inline Tensor max(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "max");
  Tensor out = Tensor::zeros_like(a);
  for (Index i = 0; i < a.size(); ++i) out[i] = a[i] >= b[i] ? a[i] : b[i];
  return out;
}

inline Tensor norm1(const Tensor& a) {
  double s = 0.0;
  for (Index i = 0; i < a.size(); ++i) s += std::abs(a[i]);
  return Tensor::scalar(s);
}

inline Tensor sqnorm2(const Tensor& a) {
  double s = 0.0;
  for (Index i = 0; i < a.size(); ++i) s += a[i] * a[i];
  return Tensor::scalar(s);
}

inline Tensor norm2(const Tensor& a) {
  return Tensor::scalar(std::sqrt(sqnorm2(a).scalar_value()));
}

}  // namespace kernels
}  // namespace nsopt
