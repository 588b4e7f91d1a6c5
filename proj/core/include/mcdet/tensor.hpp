#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mcdet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array with an optional gradient buffer of the same shape.
///
/// Activations travel between kernels as plain tensors; parameters carry a
/// gradient buffer that backward passes accumulate into.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{});
  Tensor(Shape shape, std::vector<T> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // NCHW accessors; valid only on rank-4 tensors.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on);

  bool has_grad() const noexcept { return grad_.has_value(); }
  std::span<T> grad();
  std::span<const T> grad() const;
  /// Allocates the gradient buffer if absent and sets it to zero.
  void zero_grad();
  void drop_grad() noexcept { grad_.reset(); }

  /// Same data viewed with a different shape of equal element count.
  Tensor reshaped(Shape shape) const;
  void reshape(Shape shape);

  void fill(T value);

  /// Throws NumericError naming `context` if any value (or gradient) is not finite.
  void check_finite(std::string_view context) const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
  std::optional<std::vector<T>> grad_;
  bool requires_grad_ = false;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mcdet
