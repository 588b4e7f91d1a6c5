#pragma once

// Forward and backward kernels for every layer kind of the detector network.
// All kernels are pure functions of their arguments; layers own the state
// they need to replay a backward pass.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mcdet/geometry.hpp"
#include "mcdet/layer_spec.hpp"
#include "mcdet/tensor.hpp"

namespace mcdet {

/// floor((in + 2*pad - kernel) / stride) + 1, or 0 when the window does not fit.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

// conv (cross-correlation, no kernel flip). weight: O x C x kh x kw, bias: O.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                         const LayerSpec& spec);

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& output_grad, const Tensor<T>& saved_input,
                             const Tensor<T>& weight, const LayerSpec& spec);

// Local response normalisation across channels:
// y = x / (k + alpha/n * sum of squares over n neighbouring channels)^beta
template <typename T>
Tensor<T> lrn_forward(const Tensor<T>& input, const LrnParams& params);

template <typename T>
Tensor<T> lrn_backward(const Tensor<T>& output_grad, const Tensor<T>& saved_input, const LrnParams& params);

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;  ///< flat input index per output element
};

template <typename T>
MaxPoolResult<T> maxpool_forward(const Tensor<T>& input, const LayerSpec& spec);

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& output_grad, std::span<const std::size_t> argmax,
                           const Shape& input_shape);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);

/// Gradient routed through positions where the forward output was positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output_grad, const Tensor<T>& saved_output);

// Fully connected. input: R x D (trailing dims flattened), weight: out x D, bias: out.
template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                     const LayerSpec& spec);

template <typename T>
struct FcGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
FcGrads<T> fc_backward(const Tensor<T>& output_grad, const Tensor<T>& saved_input, const Tensor<T>& weight);

template <typename T>
struct DropoutResult {
  Tensor<T> output;
  std::vector<T> mask;  ///< 0 or 1/(1-rate) per element
};

/// Inverted dropout; call only in training.
template <typename T>
DropoutResult<T> dropout_forward(const Tensor<T>& input, double rate, std::mt19937_64& rng);

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& output_grad, std::span<const T> mask);

/// Row-wise softmax of an R x K tensor with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& input);

template <typename T>
struct RoiPoolResult {
  Tensor<T> output;                    ///< R x C x bins_h x bins_w
  std::vector<std::int64_t> argmax;    ///< flat feature index per output element, -1 for empty bins
};

/// Max-pools each ROI (input-image coordinates) into a fixed grid on a
/// 1 x C x H x W feature map. An empty ROI list yields a tensor with zero rows.
template <typename T>
RoiPoolResult<T> roi_pool_forward(const Tensor<T>& feature_map, std::span<const BBox> rois,
                                  const RoiPoolSpec& spec);

template <typename T>
Tensor<T> roi_pool_backward(const Tensor<T>& output_grad, std::span<const std::int64_t> argmax,
                            const Shape& feature_shape);

}  // namespace mcdet
