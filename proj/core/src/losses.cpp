#include <algorithm>
#include <cmath>
#include <string>

#include "mcdet/detector.hpp"
#include "mcdet/error.hpp"
#include "mcdet/ops.hpp"

namespace mcdet {

double smooth_l1(double d) noexcept {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

double smooth_l1_grad(double d) noexcept {
  if (d >= 1.0) return 1.0;
  if (d <= -1.0) return -1.0;
  return d;
}

double classification_loss(std::span<const double> probs, int u) {
  if (u < 0 || static_cast<std::size_t>(u) >= probs.size()) {
    throw InputError("label " + std::to_string(u) + " outside a " + std::to_string(probs.size()) + "-class distribution");
  }
  return -std::log(std::max(probs[static_cast<std::size_t>(u)], 1e-12));
}

double bbox_loss(const BBoxDelta& t, const BBoxDelta& v) noexcept {
  return smooth_l1(t.tx - v.tx) + smooth_l1(t.ty - v.ty) + smooth_l1(t.tw - v.tw) + smooth_l1(t.th - v.th);
}

double joint_loss(std::span<const double> probs, int u, const BBoxDelta& t, const BBoxDelta& v, double lambda) {
  const double cls = classification_loss(probs, u);
  if (u != 1) return cls;
  return cls + lambda * bbox_loss(t, v);
}

template <typename T>
BatchLoss<T> detection_loss(const HeadOutput<T>& out, std::span<const RoiSample> samples, double lambda,
                            double normalizer) {
  const std::size_t r = samples.size();
  if (out.cls_scores.rank() != 2 || out.cls_scores.dim(0) != r || out.cls_scores.dim(1) != 2) {
    throw InternalError("class scores " + shape_string(out.cls_scores.shape()) + " do not match " +
                        std::to_string(r) + " samples");
  }
  if (out.bbox_deltas.rank() != 2 || out.bbox_deltas.dim(0) != r || out.bbox_deltas.dim(1) != 8) {
    throw InternalError("bbox outputs " + shape_string(out.bbox_deltas.shape()) + " do not match " +
                        std::to_string(r) + " samples");
  }
  if (!(normalizer > 0.0)) throw InternalError("loss normalizer must be positive");

  BatchLoss<T> loss;
  loss.cls_grad = Tensor<T>({r, 2});
  loss.bbox_grad = Tensor<T>({r, 8});
  const Tensor<T> probs = softmax(out.cls_scores);
  for (std::size_t i = 0; i < r; ++i) {
    const int u = samples[i].label;
    if (u != 0 && u != 1) throw InternalError("ROI label must be 0 or 1");
    const double p[2] = {static_cast<double>(probs[i * 2]), static_cast<double>(probs[i * 2 + 1])};
    loss.l_cls += classification_loss(p, u);
    for (std::size_t k = 0; k < 2; ++k) {
      loss.cls_grad[i * 2 + k] = static_cast<T>((p[k] - (static_cast<int>(k) == u ? 1.0 : 0.0)) / normalizer);
    }
    if (u != 1) continue;
    if (!samples[i].target_delta) throw InternalError("foreground ROI without a regression target");
    ++loss.foreground;
    const auto& v = *samples[i].target_delta;
    const double target[4] = {v.tx, v.ty, v.tw, v.th};
    for (std::size_t k = 0; k < 4; ++k) {
      const double d = static_cast<double>(out.bbox_deltas[i * 8 + 4 + k]) - target[k];
      loss.l_bbox += smooth_l1(d);
      loss.bbox_grad[i * 8 + 4 + k] = static_cast<T>(lambda * smooth_l1_grad(d) / normalizer);
    }
  }
  loss.l_cls /= normalizer;
  loss.l_bbox /= normalizer;
  return loss;
}

template BatchLoss<float> detection_loss(const HeadOutput<float>&, std::span<const RoiSample>, double, double);
template BatchLoss<double> detection_loss(const HeadOutput<double>&, std::span<const RoiSample>, double, double);

}  // namespace mcdet
