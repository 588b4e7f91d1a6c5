#include <algorithm>
#include <cmath>
#include <numeric>

#include "mcdet/detector.hpp"
#include "mcdet/error.hpp"
#include "mcdet/log.hpp"

namespace mcdet {

void RoiSamplingConfig::validate() const {
  if (rois_per_image == 0) throw ConfigError("rois_per_image must be positive");
  if (!(fg_fraction > 0.0 && fg_fraction < 1.0)) throw ConfigError("fg_fraction must lie in (0, 1)");
  for (double t : {fg_iou_threshold, bg_iou_low, bg_iou_high}) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("IoU thresholds must lie in [0, 1]");
  }
  if (bg_iou_low > bg_iou_high) throw ConfigError("background IoU range is empty");
}

std::vector<RoiSample> sample_rois(std::span<const BBox> proposals, std::span<const GroundTruthBox> gts,
                                   const RoiSamplingConfig& config, std::mt19937_64& rng) {
  config.validate();
  if (gts.empty()) throw InputError("ROI sampling needs at least one ground-truth box");

  std::vector<BBox> candidates;
  candidates.reserve(gts.size() + proposals.size());
  for (const auto& g : gts) candidates.push_back(g.box);
  for (const auto& p : proposals) {
    if (p.valid()) candidates.push_back(p);
  }

  std::vector<std::size_t> fg, bg;
  std::vector<std::size_t> best_gt(candidates.size(), 0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double best = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double o = iou(candidates[i], gts[g].box);
      if (o > best) {
        best = o;
        best_gt[i] = g;
      }
    }
    if (best >= config.fg_iou_threshold) {
      fg.push_back(i);
    } else if (best >= config.bg_iou_low && best < config.bg_iou_high) {
      bg.push_back(i);
    }
  }

  const std::size_t total = config.rois_per_image;
  const auto fg_quota = static_cast<std::size_t>(std::lround(config.fg_fraction * static_cast<double>(total)));
  std::shuffle(fg.begin(), fg.end(), rng);
  std::shuffle(bg.begin(), bg.end(), rng);
  fg.resize(std::min(fg.size(), fg_quota));
  bg.resize(std::min(bg.size(), total - fg.size()));

  std::vector<RoiSample> out;
  out.reserve(total);
  for (std::size_t i : fg) {
    out.push_back({candidates[i], 1, encode_delta(candidates[i], gts[best_gt[i]].box)});
  }
  for (std::size_t i : bg) out.push_back({candidates[i], 0, std::nullopt});

  if (out.size() < total) {
    if (bg.empty()) {
      log_warn("no background candidates for this image; padding the ROI minibatch by duplication");
    }
    // Duplicate background samples when there are any so the foreground
    // fraction stays within its quota.
    const std::size_t base = bg.empty() ? 0 : fg.size();
    const std::size_t pool = out.size() - base;
    for (std::size_t k = 0; out.size() < total; ++k) out.push_back(out[base + k % pool]);
  }
  return out;
}

}  // namespace mcdet
