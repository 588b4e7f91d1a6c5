#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mcdet/config_file.hpp"
#include "mcdet/dataset.hpp"
#include "mcdet/fusion.hpp"
#include "mcdet/geometry.hpp"
#include "mcdet/network.hpp"
#include "mcdet/proposals.hpp"
#include "mcdet/sgd.hpp"

namespace mcdet {

// ---- losses -------------------------------------------------------------

double smooth_l1(double d) noexcept;
double smooth_l1_grad(double d) noexcept;

/// -log p_u, with p_u clamped at 1e-12.
double classification_loss(std::span<const double> probs, int u);
double bbox_loss(const BBoxDelta& t, const BBoxDelta& v) noexcept;
/// L_cls + lambda * [u = 1] * L_bbox.
double joint_loss(std::span<const double> probs, int u, const BBoxDelta& t, const BBoxDelta& v, double lambda);

struct RoiSample {
  BBox roi;
  int label = 0;                           ///< 0 background, 1 target
  std::optional<BBoxDelta> target_delta;   ///< present iff label == 1
};

template <typename T>
struct BatchLoss {
  double l_cls = 0.0;
  double l_bbox = 0.0;  ///< before lambda
  Tensor<T> cls_grad;   ///< d(total)/d(logits), R x 2
  Tensor<T> bbox_grad;  ///< d(total)/d(bbox outputs), R x 8; zero on background rows
  std::size_t foreground = 0;
};

/// Softmax-NLL over the class logits plus lambda-weighted smooth-L1 on the
/// target-class quadruple of foreground rows. Both terms are summed over
/// rows and divided by `normalizer` (the number of ROIs in the minibatch).
template <typename T>
BatchLoss<T> detection_loss(const HeadOutput<T>& out, std::span<const RoiSample> samples, double lambda,
                            double normalizer);

// ---- ROI sampling -------------------------------------------------------

struct RoiSamplingConfig {
  std::size_t rois_per_image = 64;
  double fg_fraction = 0.25;
  double fg_iou_threshold = 0.5;
  double bg_iou_low = 0.1;
  double bg_iou_high = 0.5;

  void validate() const;
};

/// Labels candidates (ground-truth boxes first, then proposals) by their best
/// IoU with any ground truth and draws a fixed-size minibatch: up to
/// round(fg_fraction * R) foreground samples, the rest background. When
/// too few candidates exist the minibatch is padded by duplication.
std::vector<RoiSample> sample_rois(std::span<const BBox> proposals, std::span<const GroundTruthBox> gts,
                                   const RoiSamplingConfig& config, std::mt19937_64& rng);

// ---- input preparation -------------------------------------------------

struct InputConfig {
  std::size_t short_side = 600;  ///< target length of the shorter image side
  std::size_t max_side = 1000;   ///< cap on the longer side after scaling
  double pixel_mean = 128.0;
  double pixel_scale = 1.0;      ///< applied after mean subtraction
};

template <typename T>
struct PreparedInput {
  Tensor<T> image;  ///< 1 x 3 x H x W
  double scale = 1.0;
};

/// Bilinear rescale to the configured size, then (v - mean) * pixel_scale.
template <typename T>
PreparedInput<T> prepare_input(const FusedImage& image, const InputConfig& config);

// ---- bbox target normalisation -----------------------------------------

struct TargetStats {
  std::array<double, 4> mean{0.0, 0.0, 0.0, 0.0};
  std::array<double, 4> stddev{1.0, 1.0, 1.0, 1.0};
};

BBoxDelta normalize_delta(const BBoxDelta& d, const TargetStats& stats) noexcept;

/// Folds normalisation into the bbox head so that raw outputs decode
/// directly: W <- W * std, b <- b * std + mean, per coordinate.
template <typename T>
void fold_target_stats(Network<T>& network, const TargetStats& stats);

// ---- training -----------------------------------------------------------

struct TrainConfig {
  std::size_t iterations = 40000;
  SgdConfig sgd{};
  double lambda = 1.0;
  std::size_t images_per_batch = 2;
  RoiSamplingConfig sampling{};
  std::uint64_t seed = 0;
  std::size_t checkpoint_interval = 0;  ///< 0 disables checkpoints
  std::string checkpoint_dir;
  InputConfig input{};
  InitConfig init{};
  bool normalize_targets = true;
  std::string arch = "vggm";  ///< "vggm", "desk", or a layer-table path
  SelectiveSearchConfig proposals{};
  std::size_t log_interval = 100;

  void validate() const;
  /// Reads known keys; unknown keys raise ConfigError.
  static TrainConfig from_config(const KeyValueConfig& kv);
  static TrainConfig load(const std::string& path);
  KeyValueConfig to_config() const;
};

std::vector<LayerSpec> resolve_arch(const std::string& arch);

struct TrainingImage {
  std::string image_id;
  FusedImage image;
  std::vector<BBox> proposals;
  std::vector<GroundTruthBox> gts;
};

struct TrainLogEntry {
  std::size_t iteration = 0;
  double l_cls = 0.0;
  double l_bbox = 0.0;
  double lr = 0.0;
  std::size_t foreground = 0;
};

template <typename T>
struct TrainResult {
  Network<T> network;  ///< normalisation folded into the bbox head
  std::vector<TrainLogEntry> log;
  TargetStats stats;
};

/// Fuses each sample for `mode` and runs selective search on it, spreading
/// images over up to `threads` workers. Output order follows `samples`.
std::vector<TrainingImage> make_training_images(std::span<const Sample> samples, FusionMode mode,
                                                const SelectiveSearchConfig& proposals, std::size_t threads = 1);

TargetStats compute_target_stats(std::span<const TrainingImage> images, const RoiSamplingConfig& config);

/// Called after every iteration; returning false stops training early.
using TrainCallback = std::function<bool(const TrainLogEntry&)>;

/// Single-threaded minibatch SGD. When a minibatch contains no foreground
/// ROI (or lambda is 0) the bbox head is left out of the update entirely.
/// Throws NumericError on a non-finite loss with per-layer weight norms.
template <typename T>
TrainResult<T> train(std::span<const TrainingImage> images, const TrainConfig& config,
                     std::optional<Network<T>> initial = std::nullopt, const TrainCallback& callback = {});

void write_train_log(const std::string& path, std::span<const TrainLogEntry> log);

// ---- inference ----------------------------------------------------------

struct Detection {
  BBox box;
  double score = 0.0;
  int class_id = 1;
  std::string image_id;
};

struct DetectConfig {
  double score_threshold = 0.05;  ///< kept when score > threshold
  double nms_iou = 0.3;
  InputConfig input{};
};

struct DetectTiming {
  double network_seconds = 0.0;
};

/// proposals -> features -> heads -> decode -> clip -> score filter -> NMS,
/// sorted by descending score.
template <typename T>
std::vector<Detection> detect(Network<T>& network, const FusedImage& image, std::span<const BBox> proposals,
                              const DetectConfig& config, const std::string& image_id = {},
                              DetectTiming* timing = nullptr);

struct DetectJob {
  const FusedImage* image = nullptr;
  const std::vector<BBox>* proposals = nullptr;
  std::string image_id;
};

/// Runs detect() over many images with up to `threads` network clones.
/// Output order follows `jobs`.
template <typename T>
std::vector<std::vector<Detection>> detect_batch(const Network<T>& network, std::span<const DetectJob> jobs,
                                                 const DetectConfig& config, std::size_t threads = 1,
                                                 std::vector<DetectTiming>* timings = nullptr);

void write_detections_csv(const std::string& path, std::span<const Detection> dets);
std::vector<Detection> read_detections_csv(const std::string& path);

extern template BatchLoss<float> detection_loss(const HeadOutput<float>&, std::span<const RoiSample>, double, double);
extern template BatchLoss<double> detection_loss(const HeadOutput<double>&, std::span<const RoiSample>, double,
                                                 double);

}  // namespace mcdet
