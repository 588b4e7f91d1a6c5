#include <algorithm>
#include <map>
#include <numeric>

#include "mcdet/error.hpp"
#include "mcdet/eval.hpp"

namespace mcdet {

std::vector<MatchResult> match_detections(std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
                                          double iou_threshold) {
  std::map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t g = 0; g < gts.size(); ++g) by_image[gts[g].image_id].push_back(g);

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<bool> claimed(gts.size(), false);
  std::vector<MatchResult> out;
  out.reserve(dets.size());
  for (std::size_t i : order) {
    MatchResult m;
    m.detection = dets[i];
    const auto it = by_image.find(dets[i].image_id);
    std::optional<std::size_t> best;
    if (it != by_image.end()) {
      for (std::size_t g : it->second) {
        const double o = iou(dets[i].box, gts[g].box);
        if (!best || o > m.iou) {
          m.iou = o;
          best = g;
        }
      }
    }
    if (best && m.iou >= iou_threshold && !claimed[*best]) {
      claimed[*best] = true;
      m.matched_gt = best;
      m.is_true_positive = true;
    }
    out.push_back(std::move(m));
  }
  return out;
}

PRCurve average_precision(std::span<const MatchResult> matches, std::size_t gt_count, ApInterpolation interpolation) {
  if (gt_count == 0) throw InputError("average precision needs at least one ground-truth box");
  std::vector<std::size_t> order(matches.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return matches[a].detection.score > matches[b].detection.score; });

  PRCurve curve;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& m = matches[order[k]];
    (m.is_true_positive ? tp : fp) += 1;
    const bool group_end = k + 1 == order.size() || matches[order[k + 1]].detection.score != m.detection.score;
    if (!group_end) continue;
    curve.points.push_back({static_cast<double>(tp) / static_cast<double>(gt_count),
                            static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }

  if (interpolation == ApInterpolation::eleven_point) {
    for (int t = 0; t <= 10; ++t) {
      const double r = t / 10.0;
      double p = 0.0;
      for (const auto& pt : curve.points) {
        if (pt.recall >= r) p = std::max(p, pt.precision);
      }
      curve.ap += p / 11.0;
    }
    return curve;
  }

  std::vector<double> mrec{0.0}, mpre{0.0};
  for (const auto& pt : curve.points) {
    mrec.push_back(pt.recall);
    mpre.push_back(pt.precision);
  }
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  for (std::size_t i = 0; i + 1 < mrec.size(); ++i) {
    if (mrec[i + 1] != mrec[i]) curve.ap += (mrec[i + 1] - mrec[i]) * mpre[i + 1];
  }
  return curve;
}

double top1_precision(std::span<const Detection> dets, std::span<const GroundTruthBox> gts, double iou_threshold) {
  std::map<std::string, std::vector<const GroundTruthBox*>> images;
  for (const auto& g : gts) images[g.image_id].push_back(&g);
  for (const auto& [id, list] : images) {
    if (list.size() != 1) {
      throw InputError("top-1 precision needs exactly one gt per image; '" + id + "' has " +
                       std::to_string(list.size()));
    }
  }
  std::map<std::string, const Detection*> top;
  for (const auto& d : dets) {
    if (!images.count(d.image_id)) {
      throw InputError("top-1 precision needs exactly one gt per image; '" + d.image_id + "' has 0");
    }
    auto& slot = top[d.image_id];
    if (!slot || d.score > slot->score) slot = &d;
  }
  if (images.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& [id, det] : top) {
    if (iou(det->box, images[id].front()->box) >= iou_threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

}  // namespace mcdet
