#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcdet/geometry.hpp"
#include "mcdet/layer_spec.hpp"
#include "mcdet/tensor.hpp"

namespace mcdet {

enum class Phase { train, test };

struct InitConfig {
  enum class Scheme { gaussian, msra };
  Scheme scheme = Scheme::gaussian;
  double stddev = 0.01;  ///< used by the gaussian scheme
  std::uint64_t seed = 0;
};

template <typename T>
struct HeadOutput {
  Tensor<T> cls_scores;   ///< R x 2 logits (background, target)
  Tensor<T> bbox_deltas;  ///< R x 8, four offsets per class
};

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
struct ConstNamedParam {
  std::string name;
  const Tensor<T>* tensor;
};

template <typename T>
class Layer;

/// Two-stage detector network built from a layer table: a convolutional
/// feature extractor followed by ROI pooling, hidden FC layers and the
/// classification / box-regression heads.
///
/// Forward calls record the state needed by backward(); a network instance
/// must not be shared between concurrent callers. Copies are deep.
template <typename T>
class Network {
 public:
  /// Throws ConfigError on an empty or shape-inconsistent table, naming the
  /// first offending pair of rows.
  static Network build(std::vector<LayerSpec> table, const InitConfig& init = {});

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;
  ~Network();

  const std::vector<LayerSpec>& table() const noexcept { return table_; }
  const RoiPoolSpec& roi_spec() const noexcept { return roi_spec_; }
  std::size_t feature_channels() const noexcept { return feature_channels_; }
  std::size_t input_channels() const noexcept { return input_channels_; }

  /// 1 x 3 x H x W image to the last conv feature map.
  Tensor<T> feature_extractor(const Tensor<T>& image, Phase phase = Phase::test);

  /// Runs the feature extractor up to and including the named row (with its
  /// activation). Throws ConfigError for rows that are not feature layers.
  Tensor<T> features_until(const Tensor<T>& image, std::string_view row_name);

  /// Pooled R x C x bins_h x bins_w features to class logits and box deltas.
  HeadOutput<T> heads(const Tensor<T>& pooled, Phase phase = Phase::test);

  HeadOutput<T> forward(const Tensor<T>& image, std::span<const BBox> rois, Phase phase);

  /// Backpropagates through the most recent forward() and accumulates into
  /// parameter gradients.
  void backward(const Tensor<T>& cls_grad, const Tensor<T>& bbox_grad);

  std::vector<NamedParam<T>> parameters();
  std::vector<ConstNamedParam<T>> parameters() const;
  /// Parameters of one table row, e.g. "bbox".
  std::vector<NamedParam<T>> row_parameters(std::string_view row);

  void zero_grad();
  void reseed(std::uint64_t seed) { rng_.seed(seed); }

  const std::string& cls_row() const noexcept;
  const std::string& bbox_row() const noexcept;

 private:
  Network();

  std::vector<LayerSpec> table_;
  std::vector<std::unique_ptr<Layer<T>>> features_;
  std::vector<std::unique_ptr<Layer<T>>> hidden_;
  std::unique_ptr<Layer<T>> cls_;
  std::unique_ptr<Layer<T>> bbox_;
  RoiPoolSpec roi_spec_;
  std::size_t feature_channels_ = 0;
  std::size_t input_channels_ = 3;
  std::mt19937_64 rng_;

  // saved by forward()
  Shape feature_shape_;
  std::vector<std::int64_t> roi_argmax_;
  Shape pooled_shape_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace mcdet
