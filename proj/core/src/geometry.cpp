#include "mcdet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mcdet/error.hpp"

namespace mcdet {

double iou(const BBox& a, const BBox& b) noexcept {
  if (!a.valid() || !b.valid()) return 0.0;
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BBox box_union(const BBox& a, const BBox& b) noexcept {
  const double x0 = std::min(a.x, b.x);
  const double y0 = std::min(a.y, b.y);
  const double x1 = std::max(a.right(), b.right());
  const double y1 = std::max(a.bottom(), b.bottom());
  return {x0, y0, x1 - x0, y1 - y0};
}

BBoxDelta encode_delta(const BBox& proposal, const BBox& gt) {
  if (!proposal.valid() || !gt.valid()) throw InputError("encode_delta requires boxes with positive extents");
  return {(gt.cx() - proposal.cx()) / proposal.w, (gt.cy() - proposal.cy()) / proposal.h,
          std::log(gt.w / proposal.w), std::log(gt.h / proposal.h)};
}

DecodedBox decode_delta(const BBox& proposal, const BBoxDelta& delta) {
  const double cx = proposal.cx() + delta.tx * proposal.w;
  const double cy = proposal.cy() + delta.ty * proposal.h;
  double w = proposal.w * std::exp(delta.tw);
  double h = proposal.h * std::exp(delta.th);
  DecodedBox out;
  if (!(w >= 1.0) || !(h >= 1.0) || !std::isfinite(w) || !std::isfinite(h)) {
    out.clamped = true;
    if (!(w >= 1.0) || !std::isfinite(w)) w = 1.0;
    if (!(h >= 1.0) || !std::isfinite(h)) h = 1.0;
  }
  out.box = {cx - 0.5 * w, cy - 0.5 * h, w, h};
  return out;
}

BBox clip_box(const BBox& box, double width, double height) noexcept {
  double x0 = std::clamp(box.x, 0.0, width - 1.0);
  double y0 = std::clamp(box.y, 0.0, height - 1.0);
  double x1 = std::clamp(box.right(), x0 + 1.0, width);
  double y1 = std::clamp(box.bottom(), y0 + 1.0, height);
  return {x0, y0, x1 - x0, y1 - y0};
}

std::vector<std::size_t> nms(std::span<const ScoredBox> boxes, double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
  std::vector<std::size_t> keep;
  std::vector<bool> suppressed(boxes.size(), false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t idx = order[i];
    if (suppressed[idx]) continue;
    keep.push_back(idx);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const std::size_t other = order[j];
      if (!suppressed[other] && iou(boxes[idx].box, boxes[other].box) >= iou_threshold) {
        suppressed[other] = true;
      }
    }
  }
  return keep;
}

}  // namespace mcdet
