#include <algorithm>
#include <map>

#include "mcdet/error.hpp"
#include "mcdet/eval.hpp"

namespace mcdet {

std::vector<Detection> decision_fuse(std::span<const std::vector<Detection>> lists, const DecisionFusionConfig& config) {
  if (!(config.merge_iou > 0.0 && config.merge_iou <= 1.0)) throw ConfigError("merge_iou must lie in (0, 1]");
  if (!(config.nms_iou > 0.0 && config.nms_iou <= 1.0)) throw ConfigError("nms_iou must lie in (0, 1]");
  std::map<std::string, std::vector<Detection>> pooled;
  for (const auto& list : lists) {
    for (const auto& d : list) pooled[d.image_id].push_back(d);
  }

  std::vector<Detection> out;
  for (auto& [id, dets] : pooled) {
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
    std::vector<bool> used(dets.size(), false);
    std::vector<ScoredBox> merged;
    for (std::size_t s = 0; s < dets.size(); ++s) {
      if (used[s]) continue;
      double wsum = 0.0, x = 0.0, y = 0.0, r = 0.0, b = 0.0;
      for (std::size_t j = s; j < dets.size(); ++j) {
        if (used[j] || (j != s && iou(dets[s].box, dets[j].box) < config.merge_iou)) continue;
        used[j] = true;
        const double w = dets[j].score;
        wsum += w;
        x += w * dets[j].box.x;
        y += w * dets[j].box.y;
        r += w * dets[j].box.right();
        b += w * dets[j].box.bottom();
      }
      BBox box = dets[s].box;
      if (wsum > 0.0) box = {x / wsum, y / wsum, (r - x) / wsum, (b - y) / wsum};
      merged.push_back({box, dets[s].score});
    }
    for (std::size_t k : nms(merged, config.nms_iou)) out.push_back({merged[k].box, merged[k].score, 1, id});
  }
  return out;
}

}  // namespace mcdet
