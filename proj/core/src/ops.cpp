#include "mcdet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "mcdet/error.hpp"

namespace mcdet {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require_rank4(const Shape& shape, const LayerSpec& spec) {
  if (shape.size() != 4) {
    throw ConfigError("layer '" + spec.name + "' expects an NCHW input, got " + shape_string(shape));
  }
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t out_h, out_w;
  std::size_t kh, kw, stride, pad;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Shape& input, const LayerSpec& spec) {
  require_rank4(input, spec);
  if (input[1] != spec.in_channels) {
    throw ConfigError("layer '" + spec.name + "' expects " + std::to_string(spec.in_channels) +
                      " input channels, got " + std::to_string(input[1]));
  }
  if (spec.stride == 0 || spec.kernel_h == 0 || spec.kernel_w == 0) {
    throw ConfigError("layer '" + spec.name + "' has a zero kernel or stride");
  }
  ConvGeometry g{input[1], input[2], input[3], 0, 0, spec.kernel_h, spec.kernel_w, spec.stride, spec.pad};
  g.out_h = conv_output_size(g.height, g.kh, g.stride, g.pad);
  g.out_w = conv_output_size(g.width, g.kw, g.stride, g.pad);
  if (g.out_h == 0 || g.out_w == 0) {
    throw ConfigError("layer '" + spec.name + "': input " + shape_string(input) + " is smaller than its " +
                      std::to_string(g.kh) + "x" + std::to_string(g.kw) + " kernel after padding");
  }
  return g;
}

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const auto h_in = static_cast<std::ptrdiff_t>(g.height);
  const auto w_in = static_cast<std::ptrdiff_t>(g.width);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.positions();
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * stride + static_cast<std::ptrdiff_t>(ki) - pad;
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= h_in) {
            std::fill(dst, dst + g.out_w, T{});
            continue;
          }
          const T* src = plane + ih * w_in;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * stride + static_cast<std::ptrdiff_t>(kj) - pad;
            dst[ow] = (iw < 0 || iw >= w_in) ? T{} : src[iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* image) {
  const auto h_in = static_cast<std::ptrdiff_t>(g.height);
  const auto w_in = static_cast<std::ptrdiff_t>(g.width);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.positions();
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * stride + static_cast<std::ptrdiff_t>(ki) - pad;
          if (ih < 0 || ih >= h_in) continue;
          const T* src = row + oh * g.out_w;
          T* dst = plane + ih * w_in;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * stride + static_cast<std::ptrdiff_t>(kj) - pad;
            if (iw >= 0 && iw < w_in) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

std::size_t lrn_pre_pad(const LrnParams& p) { return (p.local_size - 1) / 2; }

template <typename T>
Tensor<T> lrn_scale(const Tensor<T>& input, const LrnParams& p) {
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  const auto pre = static_cast<std::ptrdiff_t>(lrn_pre_pad(p));
  const T alpha_over_n = static_cast<T>(p.alpha / static_cast<double>(p.local_size));
  Tensor<T> scale(input.shape(), static_cast<T>(p.k));
  for (std::size_t b = 0; b < n; ++b) {
    const T* x = input.data().data() + b * c * plane;
    T* s = scale.data().data() + b * c * plane;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(ch) - pre);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(c) - 1,
                                                         static_cast<std::ptrdiff_t>(ch) - pre +
                                                             static_cast<std::ptrdiff_t>(p.local_size) - 1);
      T* sc = s + ch * plane;
      for (std::ptrdiff_t j = lo; j <= hi; ++j) {
        const T* xj = x + j * plane;
        for (std::size_t i = 0; i < plane; ++i) sc[i] += alpha_over_n * xj[i] * xj[i];
      }
    }
  }
  return scale;
}

void validate_lrn(const LrnParams& p) {
  if (p.local_size < 1) throw ConfigError("LRN local_size must be at least 1");
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0 || in + 2 * pad < kernel) return 0;
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                         const LayerSpec& spec) {
  const ConvGeometry g = conv_geometry(input.shape(), spec);
  const std::size_t out_c = spec.out_channels;
  if (weight.shape() != Shape{out_c, g.channels, g.kh, g.kw} || bias.numel() != out_c) {
    throw ConfigError("layer '" + spec.name + "' weight shape " + shape_string(weight.shape()) +
                      " does not match its specification");
  }
  const std::size_t batch = input.dim(0);
  Tensor<T> output({batch, out_c, g.out_h, g.out_w});
  std::vector<T> col(g.patch() * g.positions());
  ConstMatMap<T> w(weight.data().data(), out_c, g.patch());
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(input.data().data() + n * g.channels * g.height * g.width, g, col.data());
    ConstMatMap<T> cols(col.data(), g.patch(), g.positions());
    MatMap<T> out(output.data().data() + n * out_c * g.positions(), out_c, g.positions());
    out.noalias() = w * cols;
    for (std::size_t o = 0; o < out_c; ++o) out.row(o).array() += bias[o];
  }
  return output;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& output_grad, const Tensor<T>& saved_input, const Tensor<T>& weight,
                             const LayerSpec& spec) {
  if (saved_input.empty()) throw InternalError("layer '" + spec.name + "': backward without saved forward input");
  const ConvGeometry g = conv_geometry(saved_input.shape(), spec);
  const std::size_t out_c = spec.out_channels;
  const std::size_t batch = saved_input.dim(0);
  if (output_grad.shape() != Shape{batch, out_c, g.out_h, g.out_w}) {
    throw InternalError("layer '" + spec.name + "': output gradient shape " + shape_string(output_grad.shape()) +
                        " does not match forward output");
  }
  ConvGrads<T> grads{Tensor<T>(saved_input.shape()), Tensor<T>(weight.shape()), Tensor<T>({out_c})};
  std::vector<T> col(g.patch() * g.positions());
  std::vector<T> dcol(g.patch() * g.positions());
  ConstMatMap<T> w(weight.data().data(), out_c, g.patch());
  MatMap<T> dw(grads.weight.data().data(), out_c, g.patch());
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(saved_input.data().data() + n * g.channels * g.height * g.width, g, col.data());
    ConstMatMap<T> cols(col.data(), g.patch(), g.positions());
    ConstMatMap<T> dout(output_grad.data().data() + n * out_c * g.positions(), out_c, g.positions());
    dw.noalias() += dout * cols.transpose();
    for (std::size_t o = 0; o < out_c; ++o) grads.bias[o] += dout.row(o).sum();
    MatMap<T> dcols(dcol.data(), g.patch(), g.positions());
    dcols.noalias() = w.transpose() * dout;
    col2im(dcol.data(), g, grads.input.data().data() + n * g.channels * g.height * g.width);
  }
  return grads;
}

template <typename T>
Tensor<T> lrn_forward(const Tensor<T>& input, const LrnParams& params) {
  validate_lrn(params);
  if (input.rank() != 4) throw ConfigError("LRN expects an NCHW input, got " + shape_string(input.shape()));
  Tensor<T> scale = lrn_scale(input, params);
  Tensor<T> out(input.shape());
  const T neg_beta = static_cast<T>(-params.beta);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = input[i] * std::pow(scale[i], neg_beta);
  return out;
}

template <typename T>
Tensor<T> lrn_backward(const Tensor<T>& output_grad, const Tensor<T>& saved_input, const LrnParams& params) {
  validate_lrn(params);
  if (saved_input.empty()) throw InternalError("LRN backward without saved forward input");
  const Tensor<T> scale = lrn_scale(saved_input, params);
  const std::size_t n = saved_input.dim(0), c = saved_input.dim(1);
  const std::size_t plane = saved_input.dim(2) * saved_input.dim(3);
  const T neg_beta = static_cast<T>(-params.beta);
  const T coeff = static_cast<T>(2.0 * params.alpha * params.beta / static_cast<double>(params.local_size));
  const auto pre = static_cast<std::ptrdiff_t>(lrn_pre_pad(params));
  const auto size = static_cast<std::ptrdiff_t>(params.local_size);

  // ratio = dy * y / scale, summed over the windows that include each channel.
  Tensor<T> ratio(saved_input.shape());
  Tensor<T> grad(saved_input.shape());
  for (std::size_t i = 0; i < grad.numel(); ++i) {
    const T s_pow = std::pow(scale[i], neg_beta);
    const T y = saved_input[i] * s_pow;
    grad[i] = output_grad[i] * s_pow;
    ratio[i] = output_grad[i] * y / scale[i];
  }
  for (std::size_t b = 0; b < n; ++b) {
    const T* x = saved_input.data().data() + b * c * plane;
    const T* r = ratio.data().data() + b * c * plane;
    T* dx = grad.data().data() + b * c * plane;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const auto chi = static_cast<std::ptrdiff_t>(ch);
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, chi - size + 1 + pre);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(c) - 1, chi + pre);
      T* d = dx + ch * plane;
      const T* xc = x + ch * plane;
      for (std::ptrdiff_t j = lo; j <= hi; ++j) {
        const T* rj = r + j * plane;
        for (std::size_t i = 0; i < plane; ++i) d[i] -= coeff * xc[i] * rj[i];
      }
    }
  }
  return grad;
}

template <typename T>
MaxPoolResult<T> maxpool_forward(const Tensor<T>& input, const LayerSpec& spec) {
  require_rank4(input.shape(), spec);
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = conv_output_size(h, spec.kernel_h, spec.stride, 0);
  const std::size_t ow = conv_output_size(w, spec.kernel_w, spec.stride, 0);
  if (spec.kernel_h == 0 || spec.kernel_w == 0 || oh == 0 || ow == 0) {
    throw ConfigError("layer '" + spec.name + "': pooling window exceeds input " + shape_string(input.shape()));
  }
  MaxPoolResult<T> result{Tensor<T>({n, c, oh, ow}), std::vector<std::size_t>(n * c * oh * ow)};
  std::size_t out_idx = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++out_idx) {
        std::size_t best = base + (y * spec.stride) * w + x * spec.stride;
        T best_val = input[best];
        for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
          for (std::size_t kx = 0; kx < spec.kernel_w; ++kx) {
            const std::size_t idx = base + (y * spec.stride + ky) * w + x * spec.stride + kx;
            if (input[idx] > best_val) {
              best_val = input[idx];
              best = idx;
            }
          }
        }
        result.output[out_idx] = best_val;
        result.argmax[out_idx] = best;
      }
    }
  }
  return result;
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& output_grad, std::span<const std::size_t> argmax,
                           const Shape& input_shape) {
  if (argmax.size() != output_grad.numel()) throw InternalError("max-pool backward: argmax size mismatch");
  Tensor<T> grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad[argmax[i]] += output_grad[i];
  return grad;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = input[i] > T{} ? input[i] : T{};
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output_grad, const Tensor<T>& saved_output) {
  if (saved_output.numel() != output_grad.numel()) throw InternalError("ReLU backward: shape mismatch");
  Tensor<T> grad(output_grad.shape());
  for (std::size_t i = 0; i < grad.numel(); ++i) grad[i] = saved_output[i] > T{} ? output_grad[i] : T{};
  return grad;
}

template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, const LayerSpec& spec) {
  if (input.rank() < 1) throw ConfigError("layer '" + spec.name + "': empty input");
  const std::size_t rows = input.dim(0);
  const std::size_t d = rows == 0 ? spec.in_channels : input.numel() / rows;
  if (d != spec.in_channels) {
    throw ConfigError("layer '" + spec.name + "' expects " + std::to_string(spec.in_channels) +
                      " input features, got " + std::to_string(d));
  }
  if (weight.shape() != Shape{spec.out_channels, spec.in_channels} || bias.numel() != spec.out_channels) {
    throw ConfigError("layer '" + spec.name + "' weight shape " + shape_string(weight.shape()) +
                      " does not match its specification");
  }
  Tensor<T> output({rows, spec.out_channels});
  if (rows == 0) return output;
  ConstMatMap<T> x(input.data().data(), rows, d);
  ConstMatMap<T> w(weight.data().data(), spec.out_channels, d);
  MatMap<T> y(output.data().data(), rows, spec.out_channels);
  y.noalias() = x * w.transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data().data(), spec.out_channels);
  y.rowwise() += b;
  return output;
}

template <typename T>
FcGrads<T> fc_backward(const Tensor<T>& output_grad, const Tensor<T>& saved_input, const Tensor<T>& weight) {
  const std::size_t rows = output_grad.dim(0);
  const std::size_t out = weight.dim(0), d = weight.dim(1);
  if (output_grad.numel() != rows * out || saved_input.numel() != rows * d) {
    throw InternalError("FC backward: gradient shape " + shape_string(output_grad.shape()) +
                        " inconsistent with saved input " + shape_string(saved_input.shape()));
  }
  FcGrads<T> grads{Tensor<T>(saved_input.shape()), Tensor<T>(weight.shape()), Tensor<T>({out})};
  if (rows == 0) return grads;
  ConstMatMap<T> dy(output_grad.data().data(), rows, out);
  ConstMatMap<T> x(saved_input.data().data(), rows, d);
  ConstMatMap<T> w(weight.data().data(), out, d);
  MatMap<T>(grads.input.data().data(), rows, d).noalias() = dy * w;
  MatMap<T>(grads.weight.data().data(), out, d).noalias() = dy.transpose() * x;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grads.bias.data().data(), out) = dy.colwise().sum();
  return grads;
}

template <typename T>
DropoutResult<T> dropout_forward(const Tensor<T>& input, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  DropoutResult<T> result{Tensor<T>(input.shape()), std::vector<T>(input.numel())};
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::bernoulli_distribution keep(1.0 - rate);
  for (std::size_t i = 0; i < input.numel(); ++i) {
    result.mask[i] = keep(rng) ? keep_scale : T{};
    result.output[i] = input[i] * result.mask[i];
  }
  return result;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& output_grad, std::span<const T> mask) {
  if (mask.size() != output_grad.numel()) throw InternalError("dropout backward: mask size mismatch");
  Tensor<T> grad(output_grad.shape());
  for (std::size_t i = 0; i < grad.numel(); ++i) grad[i] = output_grad[i] * mask[i];
  return grad;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& input) {
  if (input.rank() != 2 || input.dim(1) < 2) {
    throw ConfigError("softmax expects an R x K input with K >= 2, got " + shape_string(input.shape()));
  }
  const std::size_t rows = input.dim(0), k = input.dim(1);
  Tensor<T> out(input.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = input.data().data() + r * k;
    T* y = out.data().data() + r * k;
    const T mx = *std::max_element(x, x + k);
    T sum{};
    for (std::size_t j = 0; j < k; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (std::size_t j = 0; j < k; ++j) y[j] /= sum;
  }
  return out;
}

template <typename T>
RoiPoolResult<T> roi_pool_forward(const Tensor<T>& feature_map, std::span<const BBox> rois, const RoiPoolSpec& spec) {
  if (spec.bins_h == 0 || spec.bins_w == 0) throw ConfigError("ROI pooling grid must be positive");
  if (!(spec.spatial_scale > 0.0 && spec.spatial_scale <= 1.0)) {
    throw ConfigError("ROI pooling spatial_scale must lie in (0, 1]");
  }
  if (feature_map.rank() != 4 || feature_map.dim(0) != 1) {
    throw ConfigError("ROI pooling expects a 1 x C x H x W feature map, got " + shape_string(feature_map.shape()));
  }
  const std::size_t c = feature_map.dim(1), h = feature_map.dim(2), w = feature_map.dim(3);
  const std::size_t bins = spec.bins_h * spec.bins_w;
  RoiPoolResult<T> result{Tensor<T>({rois.size(), c, spec.bins_h, spec.bins_w}),
                          std::vector<std::int64_t>(rois.size() * c * bins, -1)};
  const auto max_x = static_cast<long>(w) - 1;
  const auto max_y = static_cast<long>(h) - 1;
  for (std::size_t r = 0; r < rois.size(); ++r) {
    const BBox& roi = rois[r];
    // Inclusive pixel corners, scaled to the feature map and clamped.
    const long x1 = std::clamp(std::lround(roi.x * spec.spatial_scale), 0L, max_x);
    const long y1 = std::clamp(std::lround(roi.y * spec.spatial_scale), 0L, max_y);
    const long x2 = std::clamp(std::lround((roi.right() - 1.0) * spec.spatial_scale), 0L, max_x);
    const long y2 = std::clamp(std::lround((roi.bottom() - 1.0) * spec.spatial_scale), 0L, max_y);
    const double roi_w = static_cast<double>(std::max(x2 - x1 + 1, 1L));
    const double roi_h = static_cast<double>(std::max(y2 - y1 + 1, 1L));
    const double bin_h = roi_h / static_cast<double>(spec.bins_h);
    const double bin_w = roi_w / static_cast<double>(spec.bins_w);
    for (std::size_t ph = 0; ph < spec.bins_h; ++ph) {
      long hs = static_cast<long>(std::floor(static_cast<double>(ph) * bin_h)) + y1;
      long he = static_cast<long>(std::ceil(static_cast<double>(ph + 1) * bin_h)) + y1;
      hs = std::clamp(hs, 0L, static_cast<long>(h));
      he = std::clamp(he, 0L, static_cast<long>(h));
      for (std::size_t pw = 0; pw < spec.bins_w; ++pw) {
        long ws = static_cast<long>(std::floor(static_cast<double>(pw) * bin_w)) + x1;
        long we = static_cast<long>(std::ceil(static_cast<double>(pw + 1) * bin_w)) + x1;
        ws = std::clamp(ws, 0L, static_cast<long>(w));
        we = std::clamp(we, 0L, static_cast<long>(w));
        const bool empty = he <= hs || we <= ws;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t out_idx = ((r * c + ch) * spec.bins_h + ph) * spec.bins_w + pw;
          if (empty) {
            result.output[out_idx] = T{};
            continue;
          }
          const std::size_t base = ch * h * w;
          std::int64_t best = -1;
          T best_val = -std::numeric_limits<T>::infinity();
          for (long yy = hs; yy < he; ++yy) {
            for (long xx = ws; xx < we; ++xx) {
              const std::size_t idx = base + static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx);
              if (feature_map[idx] > best_val) {
                best_val = feature_map[idx];
                best = static_cast<std::int64_t>(idx);
              }
            }
          }
          result.output[out_idx] = best_val;
          result.argmax[out_idx] = best;
        }
      }
    }
  }
  return result;
}

template <typename T>
Tensor<T> roi_pool_backward(const Tensor<T>& output_grad, std::span<const std::int64_t> argmax,
                            const Shape& feature_shape) {
  if (argmax.size() != output_grad.numel()) throw InternalError("ROI pool backward: argmax size mismatch");
  Tensor<T> grad(feature_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= 0) grad[static_cast<std::size_t>(argmax[i])] += output_grad[i];
  }
  return grad;
}

#define MCDET_INSTANTIATE_OPS(T)                                                                           \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LayerSpec&); \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LayerSpec&); \
  template Tensor<T> lrn_forward(const Tensor<T>&, const LrnParams&);                                       \
  template Tensor<T> lrn_backward(const Tensor<T>&, const Tensor<T>&, const LrnParams&);                    \
  template MaxPoolResult<T> maxpool_forward(const Tensor<T>&, const LayerSpec&);                            \
  template Tensor<T> maxpool_backward(const Tensor<T>&, std::span<const std::size_t>, const Shape&);        \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                        \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> fc_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LayerSpec&);     \
  template FcGrads<T> fc_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                    \
  template DropoutResult<T> dropout_forward(const Tensor<T>&, double, std::mt19937_64&);                    \
  template Tensor<T> dropout_backward(const Tensor<T>&, std::span<const T>);                                \
  template Tensor<T> softmax(const Tensor<T>&);                                                             \
  template RoiPoolResult<T> roi_pool_forward(const Tensor<T>&, std::span<const BBox>, const RoiPoolSpec&);  \
  template Tensor<T> roi_pool_backward(const Tensor<T>&, std::span<const std::int64_t>, const Shape&);

MCDET_INSTANTIATE_OPS(float)
MCDET_INSTANTIATE_OPS(double)

#undef MCDET_INSTANTIATE_OPS

}  // namespace mcdet
