#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sfpp/errors.hpp"

namespace sfpp {

using Shape = std::vector<int>;

inline Eigen::Index numel(const Shape& shape) {
  Eigen::Index n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major array. Extents are strictly positive; a rank-0 tensor holds
// one value and is the representation of a scalar.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;

  explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    validate_shape();
    data_ = Storage::Constant(numel(shape_), fill);
  }

  Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (data_.size() != numel(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values) : shape_(std::move(shape)) {
    validate_shape();
    if (static_cast<Eigen::Index>(values.size()) != numel(shape_))
      throw ShapeError("initializer length does not match shape " + shape_str(shape_));
    data_.resize(numel(shape_));
    std::copy(values.begin(), values.end(), data_.data());
  }

  static Tensor scalar(Scalar v) { return Tensor(Shape{}, v); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_, Scalar(0)); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> values() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> values() const {
    return {data_.data(), static_cast<std::size_t>(data_.size())};
  }

  Scalar& operator[](Eigen::Index i) { return data_[i]; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }

  Scalar& operator()(int i, int j) { return data_[Eigen::Index(i) * shape_[1] + j]; }
  Scalar operator()(int i, int j) const { return data_[Eigen::Index(i) * shape_[1] + j]; }
  Scalar& operator()(int c, int i, int j) {
    return data_[(Eigen::Index(c) * shape_[1] + i) * shape_[2] + j];
  }
  Scalar operator()(int c, int i, int j) const {
    return data_[(Eigen::Index(c) * shape_[1] + i) * shape_[2] + j];
  }

  Scalar item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (numel(shape) != data_.size())
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>().eval());
  }

  bool all_finite() const { return data_.isFinite().all(); }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && (data_ == o.data_).all();
  }

 private:
  void validate_shape() const {
    for (int d : shape_)
      if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape_));
  }

  Shape shape_;
  Storage data_;
};

// Throws NumericError naming the op when a result holds NaN/Inf.
template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, const char* op) {
  if (!t.all_finite())
    throw NumericError(std::string(op) + " produced non-finite values (shape " +
                       shape_str(t.shape()) + ")");
}

}  // namespace sfpp
