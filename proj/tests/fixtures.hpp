#pragma once

// Small in-memory datasets for tests that need real frames.

#include <string>
#include <vector>

#include "mcdet/dataset.hpp"
#include "mcdet/detector.hpp"
#include "mcdet/synthdata.hpp"

namespace fixtures {

/// `count` consecutive samples of one generated sequence, with motion computed
/// from the previous frame exactly as ingestion does.
inline std::vector<mcdet::Sample> synthetic_samples(std::size_t count, std::uint64_t seed, std::size_t width = 160,
                                                    std::size_t height = 120, double visible_contrast = 0.35) {
  mcdet::SceneSpec s;
  s.width = width;
  s.height = height;
  s.min_target_size = 24;
  s.max_target_size = 40;
  s.frames = count + 1;
  s.seed = seed;
  s.visible_contrast = visible_contrast;
  const auto seq = mcdet::generate(s);
  const std::string name = "seq" + std::to_string(seed);
  std::vector<mcdet::Sample> out;
  for (std::size_t f = 1; f <= count; ++f) {
    mcdet::Sample sample;
    sample.sequence = name;
    sample.frame_index = f;
    sample.image_id = mcdet::make_image_id(name, f);
    sample.visible = seq.visible.frames[f];
    sample.mwir = seq.mwir.frames[f];
    sample.motion = mcdet::compute_motion(seq.visible.frames[f], seq.visible.frames[f - 1]).base;
    for (auto gt : seq.gt[f]) {
      gt.image_id = sample.image_id;
      sample.gts.push_back(gt);
    }
    out.push_back(std::move(sample));
  }
  return out;
}

/// Training settings sized for a few seconds of CPU time.
inline mcdet::TrainConfig quick_config(std::size_t iterations) {
  mcdet::TrainConfig c;
  c.arch = "desk";
  c.iterations = iterations;
  c.sgd.momentum = 0.9;
  c.sgd.weight_decay = 0.0005;
  c.sgd.schedule = {{0, 0.005}};
  c.sgd.learning_rate = 0.005;
  c.images_per_batch = 2;
  c.sampling.rois_per_image = 32;
  c.sampling.bg_iou_low = 0.0;
  c.input.short_side = 120;
  c.input.max_side = 160;
  c.input.pixel_scale = 1.0 / 128.0;
  c.init.scheme = mcdet::InitConfig::Scheme::msra;
  c.seed = 3;
  c.init.seed = 3;
  c.log_interval = 0;
  c.proposals.ks = {50.0, 100.0, 200.0};
  return c;
}

}  // namespace fixtures
