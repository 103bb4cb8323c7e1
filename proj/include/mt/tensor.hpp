// Copyright 2026 The Midtrain Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MT_TENSOR_HPP
#define MT_TENSOR_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <initializer_list>
#include <vector>

namespace mt {

using Index = Eigen::Index;
using TokenId = std::int32_t;

/// Raised when tensor shapes do not line up for an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation's precondition is violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<Index>;

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline Index element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

/// Dense row-major tensor. The trailing dimension maps to matrix columns and
/// all leading dimensions are folded into rows, so every tensor is also a
/// matrix view. Scalars have shape {1}.
template <typename Scalar>
class Tensor {
 public:
  using Matrix = RowMatrix<Scalar>;

  Tensor() : shape_{1}, values_(Matrix::Zero(1, 1)) {}

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate();
    values_ = Matrix::Zero(rows_of(shape_), shape_.back());
  }

  Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)) {
    validate();
    if (static_cast<Index>(data.size()) != element_count(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + to_string(shape_));
    }
    values_ = Eigen::Map<const Matrix>(data.data(), rows_of(shape_), shape_.back());
  }

  Tensor(Shape shape, std::initializer_list<Scalar> data)
      : Tensor(std::move(shape), std::vector<Scalar>(data)) {}

  Tensor(Shape shape, Matrix values) : shape_(std::move(shape)), values_(std::move(values)) {
    validate();
    if (values_.rows() != rows_of(shape_) || values_.cols() != shape_.back()) {
      throw DimensionError("matrix " + std::to_string(values_.rows()) + "x" +
                           std::to_string(values_.cols()) + " does not fit shape " +
                           to_string(shape_));
    }
  }

  /// Rank-2 tensor from a matrix.
  static Tensor from_matrix(Matrix values) {
    Shape shape{values.rows(), values.cols()};
    return Tensor(std::move(shape), std::move(values));
  }

  static Tensor scalar(Scalar v) { return Tensor(Shape{1}, std::vector<Scalar>{v}); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return values_.size(); }
  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }

  const Matrix& values() const { return values_; }
  /// In-place access for optimizers and initializers; shape stays fixed.
  Matrix& mutable_values() { return values_; }

  const Scalar* data() const { return values_.data(); }
  Scalar item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor " + to_string(shape_));
    return values_(0, 0);
  }
  Scalar operator[](Index flat) const { return values_.data()[flat]; }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, values_.template cast<Other>().eval());
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  static Index rows_of(const Shape& shape) {
    return element_count(shape) / shape.back();
  }
  void validate() const {
    if (shape_.empty()) throw DimensionError("tensor shape must have at least one dimension");
    for (Index d : shape_) {
      if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape_));
    }
  }

  Shape shape_;
  Matrix values_;
};

}  // namespace mt

#endif  // MT_TENSOR_HPP
