#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcdet/dataset.hpp"
#include "mcdet/detector.hpp"
#include "mcdet/fusion.hpp"
#include "mcdet/network.hpp"
#include "mcdet/proposals.hpp"

namespace mcdet {

// ---- metrics ------------------------------------------------------------

struct MatchResult {
  Detection detection;
  std::optional<std::size_t> matched_gt;  ///< index into the gt list
  double iou = 0.0;                       ///< best overlap with any gt of the same image
  bool is_true_positive = false;
};

/// Greedy matching in descending score order (stable for ties). Each
/// detection is compared with the gts of its own image; it is a true
/// positive when its best-overlapping gt has IoU >= threshold and has not
/// been claimed by a higher-scored detection.
std::vector<MatchResult> match_detections(std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
                                          double iou_threshold = 0.5);

enum class ApInterpolation { all_points, eleven_point };

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;  ///< one point per distinct score, recall non-decreasing
  double ap = 0.0;
};

/// Area under the precision-recall curve. Detections with equal scores are
/// admitted together, so the curve has one point per distinct score.
/// Throws InputError when gt_count is zero.
PRCurve average_precision(std::span<const MatchResult> matches, std::size_t gt_count,
                          ApInterpolation interpolation = ApInterpolation::all_points);

/// Fraction of images whose highest-scored detection overlaps the image's
/// single gt with IoU >= threshold. Images without detections are misses.
/// Throws InputError if an image has other than exactly one gt.
double top1_precision(std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
                      double iou_threshold = 0.5);

// ---- decision-level fusion ---------------------------------------------

struct DecisionFusionConfig {
  double merge_iou = 0.5;
  double nms_iou = 0.3;
};

/// Pools detections from independent detectors per image. Starting from the
/// highest-scored unclaimed box, every unclaimed box with IoU >= merge_iou
/// against it joins its cluster; a cluster becomes one box with
/// score-weighted mean coordinates and the maximum score. NMS follows.
std::vector<Detection> decision_fuse(std::span<const std::vector<Detection>> lists,
                                     const DecisionFusionConfig& config = {});

// ---- reports ------------------------------------------------------------

struct EvalReport {
  FusionMode mode = FusionMode::three_channel;
  double ap = 0.0;
  double top1 = 0.0;               ///< NaN when some image lacks exactly one gt
  double proposal_seconds = 0.0;   ///< median per image
  double network_seconds = 0.0;    ///< median per image
  double overall_seconds = 0.0;    ///< median per image
  std::size_t images = 0;
  PRCurve curve;
};

void write_report_csv(const std::string& path, std::span<const EvalReport> reports);
/// Human-readable comparison table, one row per report.
std::string format_report_table(std::span<const EvalReport> reports);
void write_pr_csv(const std::string& path, const PRCurve& curve);
void write_pr_svg(const std::string& path, std::span<const PRCurve> curves, std::span<const std::string> labels);

/// Draws detections as green rectangles over the image.
RgbImage render_overlay(const FusedImage& image, std::span<const Detection> dets);
void write_overlay(const std::string& path, const FusedImage& image, std::span<const Detection> dets);

enum class FeatureProjection { channel_max, channel_mean };

/// Projects a feature layer's activations (at input scale) across channels
/// and min-max normalises to 0..255. A constant map becomes all zeros.
template <typename T>
ImagePlane feature_map_image(Network<T>& network, const FusedImage& image, const std::string& layer,
                             const InputConfig& input, FeatureProjection projection = FeatureProjection::channel_max);

template <typename T>
void dump_feature_map(Network<T>& network, const FusedImage& image, const std::string& layer,
                      const std::string& out_path, const InputConfig& input,
                      FeatureProjection projection = FeatureProjection::channel_max);

// ---- benchmark ----------------------------------------------------------

struct BenchmarkConfig {
  SelectiveSearchConfig proposals{};
  DetectConfig detect{};
  DecisionFusionConfig fusion{};
  ApInterpolation interpolation = ApInterpolation::all_points;
  double iou_threshold = 0.5;
  std::size_t threads = 1;
};

struct BenchmarkResult {
  std::vector<EvalReport> reports;                        ///< in requested order
  std::map<FusionMode, std::vector<Detection>> detections;
};

/// Modes that must have a network for `mode` to run.
std::vector<FusionMode> required_networks(FusionMode mode);

/// Evaluates every requested mode on `samples`. decision_level runs the
/// three single-modality networks and fuses their outputs. Throws
/// ConfigError naming every missing network before doing any work.
BenchmarkResult run_benchmark(std::span<const Sample> samples, std::span<const FusionMode> modes,
                              const std::map<FusionMode, const Network<float>*>& networks,
                              const BenchmarkConfig& config = {});

}  // namespace mcdet
