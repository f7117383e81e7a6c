#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fse/error.hpp"

namespace fse {

using ShapeVec = std::vector<int64_t>;

inline int64_t numel(const ShapeVec& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const ShapeVec& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major n-dimensional array. Element type is float for training
// paths and double for gradient-check / enumeration paths.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(ShapeVec shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<size_t>(numel(shape_)), T(0));
  }

  Tensor(ShapeVec shape, T fill) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<size_t>(numel(shape_)), fill);
  }

  static Tensor from_data(ShapeVec shape, std::vector<T> data) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.validate_shape();
    if (static_cast<int64_t>(data.size()) != numel(t.shape_))
      fail("tensor: data length ", data.size(), " does not match shape ", shape_str(t.shape_));
    t.data_ = std::move(data);
    return t;
  }

  static Tensor scalar(T v) { return from_data({1}, {v}); }

  const ShapeVec& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }

  int64_t dim(int i) const {
    if (i < 0 || i >= rank()) fail("tensor: dim index ", i, " out of range for ", shape_str(shape_));
    return shape_[static_cast<size_t>(i)];
  }

  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // element access for 4-d tensors (hot loops index raw pointers instead)
  T& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return const_cast<Tensor*>(this)->at4(n, c, h, w);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  std::string shape_string() const { return shape_str(shape_); }

 private:
  void validate_shape() const {
    for (int64_t d : shape_)
      if (d <= 0) fail("tensor: non-positive extent in shape ", shape_str(shape_));
  }

  ShapeVec shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace fse
