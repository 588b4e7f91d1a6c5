#include "mcdet/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "mcdet/error.hpp"

namespace mcdet {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_numel(shape_) != data_.size()) {
    throw InternalError("tensor shape " + shape_string(shape_) + " does not match " +
                        std::to_string(data_.size()) + " values");
  }
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (!on) grad_.reset();
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (!grad_) throw InternalError("tensor has no gradient buffer");
  return *grad_;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!grad_) throw InternalError("tensor has no gradient buffer");
  return *grad_;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (grad_) {
    std::fill(grad_->begin(), grad_->end(), T{});
  } else {
    grad_.emplace(data_.size(), T{});
  }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  Tensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

template <typename T>
void Tensor<T>::reshape(Shape shape) {
  if (shape_numel(shape) != data_.size()) {
    throw InternalError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
void Tensor<T>::check_finite(std::string_view context) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NumericError("non-finite value in " + std::string(context) + " at index " + std::to_string(i));
    }
  }
  if (grad_) {
    for (std::size_t i = 0; i < grad_->size(); ++i) {
      if (!std::isfinite((*grad_)[i])) {
        throw NumericError("non-finite gradient in " + std::string(context) + " at index " +
                           std::to_string(i));
      }
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace mcdet
