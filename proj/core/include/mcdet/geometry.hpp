#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mcdet {

/// Axis-aligned box: top-left corner plus extents, in pixels.
///
/// A box with integer fields covers exactly the pixels x..x+w-1, y..y+h-1,
/// so continuous areas coincide with pixel counts on the integer grid.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const noexcept { return w * h; }
  double cx() const noexcept { return x + 0.5 * w; }
  double cy() const noexcept { return y + 0.5 * h; }
  double right() const noexcept { return x + w; }
  double bottom() const noexcept { return y + h; }
  bool valid() const noexcept { return w > 0.0 && h > 0.0; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Regression offsets of a box relative to a proposal: centre shifts scaled by
/// the proposal extents and log-space size ratios.
struct BBoxDelta {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;

  friend bool operator==(const BBoxDelta&, const BBoxDelta&) = default;
};

/// Intersection over union in [0, 1]. Zero for degenerate boxes.
double iou(const BBox& a, const BBox& b) noexcept;

/// Smallest box containing both.
BBox box_union(const BBox& a, const BBox& b) noexcept;

BBoxDelta encode_delta(const BBox& proposal, const BBox& gt);

struct DecodedBox {
  BBox box;
  bool clamped = false;  ///< width or height fell below one pixel and was clamped
};

DecodedBox decode_delta(const BBox& proposal, const BBoxDelta& delta);

/// Clips to [0, width) x [0, height); keeps at least one pixel of extent.
BBox clip_box(const BBox& box, double width, double height) noexcept;

struct ScoredBox {
  BBox box;
  double score = 0.0;
};

/// Greedy non-maximum suppression. Returns indices into `boxes`, ordered by
/// descending score; every surviving pair has IoU strictly below `iou_threshold`.
std::vector<std::size_t> nms(std::span<const ScoredBox> boxes, double iou_threshold);

}  // namespace mcdet
