#include "pvfault/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace pvfault {

std::string shape_string(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out.empty() ? "[]" : out;
}

std::size_t shape_size(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extent of 0 in shape " + shape_string(shape));
  }
}

}  // namespace

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_size(shape_), fill);
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

template <class T>
std::size_t BasicTensor<T>::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("index of rank " + std::to_string(index.size()) + " into tensor " +
                     shape_string(shape_));
  }
  std::size_t flat = 0;
  for (std::size_t a = 0; a < index.size(); ++a) {
    if (index[a] >= shape_[a]) {
      throw ShapeError("index " + std::to_string(index[a]) + " out of range on axis " +
                       std::to_string(a) + " of " + shape_string(shape_));
    }
    flat = flat * shape_[a] + index[a];
  }
  return flat;
}

template <class T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <class T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return BasicTensor(std::move(shape), data_);
}

template <class T>
BasicTensor<T> BasicTensor<T>::slice(std::size_t i) const {
  if (shape_.size() < 2 || i >= shape_[0]) {
    throw ShapeError("slice " + std::to_string(i) + " of " + shape_string(shape_));
  }
  Shape item(shape_.begin() + 1, shape_.end());
  const std::size_t n = shape_size(item);
  std::vector<T> out(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                     data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  return BasicTensor(std::move(item), std::move(out));
}

template <class T>
void BasicTensor<T>::set_slice(std::size_t i, const BasicTensor& item) {
  if (shape_.size() < 2 || i >= shape_[0] ||
      !std::equal(shape_.begin() + 1, shape_.end(), item.shape().begin(), item.shape().end())) {
    throw ShapeError("cannot place " + shape_string(item.shape()) + " at slot " +
                     std::to_string(i) + " of " + shape_string(shape_));
  }
  std::copy(item.data().begin(), item.data().end(),
            data_.begin() + static_cast<std::ptrdiff_t>(i * item.size()));
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace pvfault
