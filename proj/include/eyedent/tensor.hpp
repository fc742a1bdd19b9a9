// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "eyedent/errors.hpp"

namespace eyedent::autograd {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <class Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using MatMap = Eigen::Map<MatX<Scalar>>;
template <class Scalar>
using ConstMatMap = Eigen::Map<const MatX<Scalar>>;

inline Index shape_size(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense n-d array stored as a row-major flat buffer. Rank is dynamic; the
/// operator set only ever uses ranks 1 to 3.
template <class Scalar>
struct Tensor {
  Shape shape;
  ArrayX<Scalar> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)) { data = ArrayX<Scalar>::Zero(shape_size(shape)); }
  Tensor(Shape s, ArrayX<Scalar> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_size(shape))
      throw Error(ErrorCode::shape, "tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
  }
  Tensor(Shape s, std::initializer_list<Scalar> vals) : shape(std::move(s)) {
    data.resize(static_cast<Index>(vals.size()));
    Index i = 0;
    for (Scalar v : vals) data[i++] = v;
    if (data.size() != shape_size(shape))
      throw Error(ErrorCode::shape, "tensor initializer length does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor constant(Shape s, Scalar v) {
    Tensor t;
    t.shape = std::move(s);
    t.data = ArrayX<Scalar>::Constant(shape_size(t.shape), v);
    return t;
  }
  static Tensor scalar(Scalar v) { return constant({1}, v); }

  Index size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  Index dim(int i) const { return shape[static_cast<size_t>(i)]; }
  /// Product of all dimensions except the last (the "row" count of the 2-d view).
  Index rows2d() const { return size() == 0 ? 0 : size() / shape.back(); }
  Index cols2d() const { return shape.empty() ? 0 : shape.back(); }

  MatMap<Scalar> mat(Index rows, Index cols) { return MatMap<Scalar>(data.data(), rows, cols); }
  ConstMatMap<Scalar> mat(Index rows, Index cols) const {
    return ConstMatMap<Scalar>(data.data(), rows, cols);
  }
  /// 2-d view collapsing all leading dimensions.
  MatMap<Scalar> mat2d() { return mat(rows2d(), cols2d()); }
  ConstMatMap<Scalar> mat2d() const { return mat(rows2d(), cols2d()); }

  template <class Other>
  Tensor<Other> cast() const {
    Tensor<Other> t;
    t.shape = shape;
    t.data = data.template cast<Other>();
    return t;
  }
};

template <class Scalar>
bool same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return a.shape == b.shape;
}

/// Row-wise numerically stabilized softmax of the trailing dimension.
template <class Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& logits) {
  Tensor<Scalar> out(logits.shape);
  auto x = logits.mat2d();
  auto y = out.mat2d();
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return out;
}

}  // namespace eyedent::autograd
