#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pvfault/error.hpp"

namespace pvfault {

using Shape = std::vector<std::size_t>;

/// Renders a shape as "3x300x300".
std::string shape_string(const Shape& shape);

/// Product of extents; 0 for an empty shape.
std::size_t shape_size(const Shape& shape);

/// Dense row-major array with shape metadata.
///
/// A default-constructed tensor is empty (rank 0, no data). Any constructed
/// tensor has all extents >= 1 and exactly product(shape) elements.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{});
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  /// Row-major flat offset of a multi-index. Throws ShapeError on bad input.
  std::size_t offset(std::span<const std::size_t> index) const;

  template <class... I>
  T& operator()(I... idx) {
    const std::size_t index[] = {static_cast<std::size_t>(idx)...};
    return data_[offset(index)];
  }
  template <class... I>
  const T& operator()(I... idx) const {
    const std::size_t index[] = {static_cast<std::size_t>(idx)...};
    return data_[offset(index)];
  }

  void fill(T value);

  /// Same data, new shape of equal element count.
  BasicTensor reshaped(Shape shape) const;

  /// Sub-tensor along axis 0: item `i` of a batch-major tensor.
  BasicTensor slice(std::size_t i) const;
  void set_slice(std::size_t i, const BasicTensor& item);

  template <class U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace pvfault
