#include "mcdet/network.hpp"

#include <cmath>
#include <sstream>

#include "mcdet/error.hpp"
#include "mcdet/ops.hpp"

namespace mcdet {

template <typename T>
class Layer {
 public:
  Layer(LayerSpec spec, std::string row) : spec_(std::move(spec)), row_(std::move(row)) {}
  virtual ~Layer() = default;

  virtual Tensor<T> forward(const Tensor<T>& input, Phase phase, std::mt19937_64& rng) = 0;
  virtual Tensor<T> backward(const Tensor<T>& output_grad) = 0;
  virtual void collect(std::vector<NamedParam<T>>&) {}
  virtual void collect(std::vector<ConstNamedParam<T>>&) const {}
  virtual std::unique_ptr<Layer> clone() const = 0;

  const LayerSpec& spec() const noexcept { return spec_; }
  /// Table row this layer was expanded from.
  const std::string& row() const noexcept { return row_; }

 protected:
  LayerSpec spec_;
  std::string row_;
};

namespace {

template <typename T>
class ParamLayer : public Layer<T> {
 public:
  ParamLayer(LayerSpec spec, Shape weight_shape, std::size_t fan_in, const InitConfig& init, double stddev_override,
             std::mt19937_64& rng)
      : Layer<T>(std::move(spec), {}), weight_(std::move(weight_shape)), bias_({this->spec_.out_channels}) {
    this->row_ = this->spec_.name;
    double stddev = init.stddev;
    if (stddev_override > 0.0) {
      stddev = stddev_override;
    } else if (init.scheme == InitConfig::Scheme::msra) {
      stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    }
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& w : weight_.data()) w = static_cast<T>(dist(rng));
    weight_.set_requires_grad(true);
    bias_.set_requires_grad(true);
  }

  void collect(std::vector<NamedParam<T>>& out) override {
    out.push_back({this->row_ + ".weight", &weight_});
    out.push_back({this->row_ + ".bias", &bias_});
  }
  void collect(std::vector<ConstNamedParam<T>>& out) const override {
    out.push_back({this->row_ + ".weight", &weight_});
    out.push_back({this->row_ + ".bias", &bias_});
  }

 protected:
  void accumulate(Tensor<T>& param, const Tensor<T>& grad) {
    if (!param.has_grad()) param.zero_grad();
    auto g = param.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad[i];
  }

  Tensor<T> weight_;
  Tensor<T> bias_;
  Tensor<T> saved_input_;
};

template <typename T>
class ConvLayer final : public ParamLayer<T> {
 public:
  ConvLayer(const LayerSpec& spec, const InitConfig& init, std::mt19937_64& rng)
      : ParamLayer<T>(spec, {spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w},
                      spec.in_channels * spec.kernel_h * spec.kernel_w, init, 0.0, rng) {}

  Tensor<T> forward(const Tensor<T>& input, Phase, std::mt19937_64&) override {
    this->saved_input_ = input;
    return conv2d_forward(input, this->weight_, this->bias_, this->spec_);
  }
  Tensor<T> backward(const Tensor<T>& output_grad) override {
    auto grads = conv2d_backward(output_grad, this->saved_input_, this->weight_, this->spec_);
    this->accumulate(this->weight_, grads.weight);
    this->accumulate(this->bias_, grads.bias);
    return std::move(grads.input);
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ConvLayer>(*this); }
};

template <typename T>
class FcLayer final : public ParamLayer<T> {
 public:
  FcLayer(const LayerSpec& spec, const InitConfig& init, double stddev_override, std::mt19937_64& rng)
      : ParamLayer<T>(spec, {spec.out_channels, spec.in_channels}, spec.in_channels, init, stddev_override, rng) {}

  Tensor<T> forward(const Tensor<T>& input, Phase, std::mt19937_64&) override {
    this->saved_input_ = input;
    return fc_forward(input, this->weight_, this->bias_, this->spec_);
  }
  Tensor<T> backward(const Tensor<T>& output_grad) override {
    auto grads = fc_backward(output_grad, this->saved_input_, this->weight_);
    this->accumulate(this->weight_, grads.weight);
    this->accumulate(this->bias_, grads.bias);
    return std::move(grads.input);
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<FcLayer>(*this); }
};

template <typename T>
class LrnLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& input, Phase, std::mt19937_64&) override {
    saved_input_ = input;
    return lrn_forward(input, this->spec_.lrn);
  }
  Tensor<T> backward(const Tensor<T>& output_grad) override {
    return lrn_backward(output_grad, saved_input_, this->spec_.lrn);
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<LrnLayer>(*this); }

 private:
  Tensor<T> saved_input_;
};

template <typename T>
class MaxPoolLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& input, Phase, std::mt19937_64&) override {
    input_shape_ = input.shape();
    auto result = maxpool_forward(input, this->spec_);
    argmax_ = std::move(result.argmax);
    return std::move(result.output);
  }
  Tensor<T> backward(const Tensor<T>& output_grad) override {
    return maxpool_backward(output_grad, argmax_, input_shape_);
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPoolLayer>(*this); }

 private:
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class ReluLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& input, Phase, std::mt19937_64&) override {
    saved_output_ = relu_forward(input);
    return saved_output_;
  }
  Tensor<T> backward(const Tensor<T>& output_grad) override { return relu_backward(output_grad, saved_output_); }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReluLayer>(*this); }

 private:
  Tensor<T> saved_output_;
};

template <typename T>
class DropoutLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& input, Phase phase, std::mt19937_64& rng) override {
    if (phase == Phase::test || this->spec_.dropout_rate == 0.0) {
      mask_.assign(input.numel(), T{1});
      return input;
    }
    auto result = dropout_forward(input, this->spec_.dropout_rate, rng);
    mask_ = std::move(result.mask);
    return std::move(result.output);
  }
  Tensor<T> backward(const Tensor<T>& output_grad) override { return dropout_backward(output_grad, std::span<const T>(mask_)); }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<DropoutLayer>(*this); }

 private:
  std::vector<T> mask_;
};

LayerSpec sublayer(const LayerSpec& parent, LayerKind kind, const char* suffix) {
  LayerSpec s = parent;
  s.kind = kind;
  s.name = parent.name + suffix;
  s.in_channels = s.out_channels = parent.out_channels;
  return s;
}

std::string chain_error(const LayerSpec& prev, const LayerSpec& cur, const std::string& detail) {
  return "inconsistent layer chain at ('" + prev.name + "', '" + cur.name + "'): " + detail;
}

template <typename T>
void append_activation(std::vector<std::unique_ptr<Layer<T>>>& out, const LayerSpec& spec) {
  if (spec.activation == Activation::relu) {
    out.push_back(std::make_unique<ReluLayer<T>>(sublayer(spec, LayerKind::relu, ".relu"), spec.name));
  }
  if (spec.dropout_rate > 0.0) {
    out.push_back(std::make_unique<DropoutLayer<T>>(sublayer(spec, LayerKind::dropout, ".dropout"), spec.name));
  }
}

template <typename T>
std::vector<std::unique_ptr<Layer<T>>> clone_all(const std::vector<std::unique_ptr<Layer<T>>>& layers) {
  std::vector<std::unique_ptr<Layer<T>>> out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back(l->clone());
  return out;
}

}  // namespace

template <typename T>
Network<T>::Network() = default;
template <typename T>
Network<T>::Network(Network&&) noexcept = default;
template <typename T>
Network<T>& Network<T>::operator=(Network&&) noexcept = default;
template <typename T>
Network<T>::~Network() = default;

template <typename T>
Network<T>::Network(const Network& other)
    : table_(other.table_),
      features_(clone_all(other.features_)),
      hidden_(clone_all(other.hidden_)),
      cls_(other.cls_ ? other.cls_->clone() : nullptr),
      bbox_(other.bbox_ ? other.bbox_->clone() : nullptr),
      roi_spec_(other.roi_spec_),
      feature_channels_(other.feature_channels_),
      input_channels_(other.input_channels_),
      rng_(other.rng_),
      feature_shape_(other.feature_shape_),
      roi_argmax_(other.roi_argmax_),
      pooled_shape_(other.pooled_shape_) {}

template <typename T>
Network<T>& Network<T>::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

template <typename T>
Network<T> Network<T>::build(std::vector<LayerSpec> table, const InitConfig& init) {
  if (table.empty()) throw ConfigError("cannot build a network from an empty layer table");

  Network net;
  net.rng_.seed(init.seed);
  std::mt19937_64 init_rng(init.seed);

  std::size_t roi_row = table.size();
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].kind == LayerKind::roipool) {
      if (roi_row != table.size()) throw ConfigError("layer table has more than one roipool row");
      roi_row = i;
    }
  }
  if (roi_row == table.size()) throw ConfigError("layer table has no roipool row");
  if (roi_row == 0) throw ConfigError("layer table has no feature layers before '" + table[0].name + "'");

  // Feature extractor.
  const LayerSpec* prev = nullptr;
  std::size_t channels = 0;
  double stride_product = 1.0;
  for (std::size_t i = 0; i < roi_row; ++i) {
    LayerSpec& s = table[i];
    if (prev == nullptr) {
      if (s.kind != LayerKind::conv) throw ConfigError("first layer '" + s.name + "' must be a conv layer");
      net.input_channels_ = s.in_channels;
    } else if (s.in_channels != 0 && s.in_channels != channels) {
      throw ConfigError(chain_error(*prev, s, "'" + prev->name + "' produces " + std::to_string(channels) +
                                                  " channels but '" + s.name + "' expects " +
                                                  std::to_string(s.in_channels)));
    }
    switch (s.kind) {
      case LayerKind::conv:
        if (s.out_channels == 0 || s.kernel_h == 0 || s.kernel_w == 0 || s.stride == 0) {
          throw ConfigError("conv layer '" + s.name + "' needs output channels, kernel and stride");
        }
        if (s.in_channels == 0) s.in_channels = channels;
        net.features_.push_back(std::make_unique<ConvLayer<T>>(s, init, init_rng));
        channels = s.out_channels;
        stride_product *= static_cast<double>(s.stride);
        break;
      case LayerKind::lrn:
        if (s.lrn.local_size < 1) throw ConfigError("LRN layer '" + s.name + "' needs local_size >= 1");
        net.features_.push_back(std::make_unique<LrnLayer<T>>(s, s.name));
        break;
      case LayerKind::maxpool:
        if (s.kernel_h == 0 || s.kernel_w == 0 || s.stride == 0) {
          throw ConfigError("max-pool layer '" + s.name + "' needs a kernel and stride");
        }
        net.features_.push_back(std::make_unique<MaxPoolLayer<T>>(s, s.name));
        stride_product *= static_cast<double>(s.stride);
        break;
      case LayerKind::relu:
        net.features_.push_back(std::make_unique<ReluLayer<T>>(s, s.name));
        break;
      case LayerKind::dropout:
        net.features_.push_back(std::make_unique<DropoutLayer<T>>(s, s.name));
        break;
      default:
        throw ConfigError("layer '" + s.name + "' of kind " + std::string(to_string(s.kind)) +
                          " cannot appear before ROI pooling");
    }
    if (s.kind != LayerKind::conv && s.out_channels != 0 && s.out_channels != channels) {
      throw ConfigError("layer '" + s.name + "' cannot change the channel count");
    }
    if (s.kind != LayerKind::relu && s.kind != LayerKind::dropout) append_activation(net.features_, s);
    prev = &s;
  }
  net.feature_channels_ = channels;

  // ROI pooling.
  LayerSpec& roi = table[roi_row];
  if (roi.in_channels != 0 && roi.in_channels != channels) {
    throw ConfigError(chain_error(*prev, roi, "'" + prev->name + "' produces " + std::to_string(channels) +
                                                  " channels but '" + roi.name + "' expects " +
                                                  std::to_string(roi.in_channels)));
  }
  net.roi_spec_.bins_h = roi.kernel_h == 0 ? 6 : roi.kernel_h;
  net.roi_spec_.bins_w = roi.kernel_w == 0 ? 6 : roi.kernel_w;
  net.roi_spec_.spatial_scale = 1.0 / stride_product;
  const std::size_t bins = net.roi_spec_.bins_h * net.roi_spec_.bins_w;
  if (roi.out_channels != 0 && roi.out_channels != bins) {
    throw ConfigError("roipool layer '" + roi.name + "' lists " + std::to_string(roi.out_channels) +
                      " outputs but its grid has " + std::to_string(bins) + " bins");
  }
  prev = &roi;

  // Heads: every fc row after ROI pooling; the last two fc rows are the
  // parallel classification and box-regression outputs.
  std::vector<std::size_t> fc_rows;
  for (std::size_t i = roi_row + 1; i < table.size(); ++i) {
    switch (table[i].kind) {
      case LayerKind::fc: fc_rows.push_back(i); break;
      case LayerKind::relu:
      case LayerKind::dropout:
      case LayerKind::softmax: break;
      default:
        throw ConfigError("layer '" + table[i].name + "' of kind " + std::string(to_string(table[i].kind)) +
                          " cannot appear after ROI pooling");
    }
  }
  if (fc_rows.size() < 2) throw ConfigError("layer table needs classification and bbox fc rows after ROI pooling");
  const std::size_t cls_row = fc_rows[fc_rows.size() - 2];
  const std::size_t bbox_row = fc_rows.back();

  std::size_t width = channels * bins;
  for (std::size_t i = roi_row + 1; i < cls_row; ++i) {
    LayerSpec& s = table[i];
    if (s.kind == LayerKind::fc) {
      // A flattened-input count equal to the bin count means "channels x bins".
      if (prev == &roi && s.in_channels == bins && width != bins) s.in_channels = width;
      if (s.in_channels != width) {
        throw ConfigError(chain_error(*prev, s, "'" + prev->name + "' produces " + std::to_string(width) +
                                                    " features but '" + s.name + "' expects " +
                                                    std::to_string(s.in_channels)));
      }
      if (s.out_channels == 0) throw ConfigError("fc layer '" + s.name + "' needs output channels");
      net.hidden_.push_back(std::make_unique<FcLayer<T>>(s, init, 0.0, init_rng));
      append_activation(net.hidden_, s);
      width = s.out_channels;
    } else if (s.kind == LayerKind::relu) {
      s.in_channels = s.out_channels = width;
      net.hidden_.push_back(std::make_unique<ReluLayer<T>>(s, s.name));
    } else if (s.kind == LayerKind::dropout) {
      s.in_channels = s.out_channels = width;
      net.hidden_.push_back(std::make_unique<DropoutLayer<T>>(s, s.name));
    }
    prev = &s;
  }
  LayerSpec& cls = table[cls_row];
  LayerSpec& bbox = table[bbox_row];
  for (LayerSpec* head : {&cls, &bbox}) {
    if (prev == &roi && head->in_channels == bins && width != bins) head->in_channels = width;
    if (head->in_channels != width) {
      throw ConfigError(chain_error(*prev, *head, "'" + prev->name + "' produces " + std::to_string(width) +
                                                      " features but '" + head->name + "' expects " +
                                                      std::to_string(head->in_channels)));
    }
  }
  if (cls.out_channels != 2) throw ConfigError("classification head '" + cls.name + "' must have 2 outputs");
  if (bbox.out_channels != 4 * cls.out_channels) {
    throw ConfigError("bbox head '" + bbox.name + "' must have 4 outputs per class");
  }
  const bool gaussian = init.scheme == InitConfig::Scheme::gaussian;
  net.cls_ = std::make_unique<FcLayer<T>>(cls, init, gaussian ? 0.0 : 0.01, init_rng);
  net.bbox_ = std::make_unique<FcLayer<T>>(bbox, init, gaussian ? 0.0 : 0.001, init_rng);

  net.table_ = std::move(table);
  return net;
}

template <typename T>
Tensor<T> Network<T>::feature_extractor(const Tensor<T>& image, Phase phase) {
  if (image.rank() != 4 || image.dim(1) != input_channels_) {
    throw ConfigError("network expects an N x " + std::to_string(input_channels_) + " x H x W image, got " +
                      shape_string(image.shape()));
  }
  Tensor<T> x = features_.front()->forward(image, phase, rng_);
  for (std::size_t i = 1; i < features_.size(); ++i) x = features_[i]->forward(x, phase, rng_);
  return x;
}

template <typename T>
Tensor<T> Network<T>::features_until(const Tensor<T>& image, std::string_view row_name) {
  std::size_t last = features_.size();
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i]->row() == row_name) last = i;
  }
  if (last == features_.size()) {
    throw ConfigError("unknown feature layer '" + std::string(row_name) + "'");
  }
  if (image.rank() != 4 || image.dim(1) != input_channels_) {
    throw ConfigError("network expects an N x " + std::to_string(input_channels_) + " x H x W image, got " +
                      shape_string(image.shape()));
  }
  Tensor<T> x = image;
  for (std::size_t i = 0; i <= last; ++i) x = features_[i]->forward(x, Phase::test, rng_);
  return x;
}

template <typename T>
HeadOutput<T> Network<T>::heads(const Tensor<T>& pooled, Phase phase) {
  const std::size_t rows = pooled.rank() == 0 ? 0 : pooled.dim(0);
  Tensor<T> x = pooled.reshaped({rows, rows == 0 ? feature_channels_ * roi_spec_.bins_h * roi_spec_.bins_w
                                                 : pooled.numel() / rows});
  for (auto& layer : hidden_) x = layer->forward(x, phase, rng_);
  HeadOutput<T> out;
  out.cls_scores = cls_->forward(x, phase, rng_);
  out.bbox_deltas = bbox_->forward(x, phase, rng_);
  return out;
}

template <typename T>
HeadOutput<T> Network<T>::forward(const Tensor<T>& image, std::span<const BBox> rois, Phase phase) {
  Tensor<T> features = feature_extractor(image, phase);
  feature_shape_ = features.shape();
  auto pooled = roi_pool_forward(features, rois, roi_spec_);
  roi_argmax_ = std::move(pooled.argmax);
  pooled_shape_ = pooled.output.shape();
  return heads(pooled.output, phase);
}

template <typename T>
void Network<T>::backward(const Tensor<T>& cls_grad, const Tensor<T>& bbox_grad) {
  if (pooled_shape_.empty()) throw InternalError("network backward called before forward");
  Tensor<T> grad = cls_->backward(cls_grad);
  const Tensor<T> from_bbox = bbox_->backward(bbox_grad);
  for (std::size_t i = 0; i < grad.numel(); ++i) grad[i] += from_bbox[i];
  for (auto it = hidden_.rbegin(); it != hidden_.rend(); ++it) grad = (*it)->backward(grad);
  grad.reshape(pooled_shape_);
  grad = roi_pool_backward(grad, roi_argmax_, feature_shape_);
  for (auto it = features_.rbegin(); it != features_.rend(); ++it) grad = (*it)->backward(grad);
}

template <typename T>
std::vector<NamedParam<T>> Network<T>::parameters() {
  std::vector<NamedParam<T>> out;
  for (auto& l : features_) l->collect(out);
  for (auto& l : hidden_) l->collect(out);
  cls_->collect(out);
  bbox_->collect(out);
  return out;
}

template <typename T>
std::vector<ConstNamedParam<T>> Network<T>::parameters() const {
  std::vector<ConstNamedParam<T>> out;
  for (const auto& l : features_) std::as_const(*l).collect(out);
  for (const auto& l : hidden_) std::as_const(*l).collect(out);
  std::as_const(*cls_).collect(out);
  std::as_const(*bbox_).collect(out);
  return out;
}

template <typename T>
std::vector<NamedParam<T>> Network<T>::row_parameters(std::string_view row) {
  std::vector<NamedParam<T>> out;
  for (auto& p : parameters()) {
    if (p.name.size() > row.size() && p.name.compare(0, row.size(), row) == 0 && p.name[row.size()] == '.') {
      out.push_back(p);
    }
  }
  return out;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

template <typename T>
const std::string& Network<T>::cls_row() const noexcept {
  return cls_->row();
}

template <typename T>
const std::string& Network<T>::bbox_row() const noexcept {
  return bbox_->row();
}

template class Network<float>;
template class Network<double>;

}  // namespace mcdet
