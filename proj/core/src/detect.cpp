#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "mcdet/detector.hpp"
#include "mcdet/error.hpp"
#include "mcdet/log.hpp"
#include "mcdet/ops.hpp"

namespace mcdet {
namespace {

double sample_bilinear(const ImagePlane& p, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(p.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(p.height - 1));
  const auto x0 = static_cast<std::size_t>(x), y0 = static_cast<std::size_t>(y);
  const std::size_t x1 = std::min(x0 + 1, p.width - 1), y1 = std::min(y0 + 1, p.height - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = (1.0 - fx) * p.at(x0, y0) + fx * p.at(x1, y0);
  const double bot = (1.0 - fx) * p.at(x0, y1) + fx * p.at(x1, y1);
  return (1.0 - fy) * top + fy * bot;
}

}  // namespace

template <typename T>
PreparedInput<T> prepare_input(const FusedImage& image, const InputConfig& config) {
  const std::size_t w = image.width(), h = image.height();
  if (w == 0 || h == 0) throw InputError("cannot prepare an empty image");
  if (config.short_side == 0 || config.max_side == 0) throw ConfigError("input sizes must be positive");
  double scale = static_cast<double>(config.short_side) / static_cast<double>(std::min(w, h));
  if (std::round(scale * static_cast<double>(std::max(w, h))) > static_cast<double>(config.max_side)) {
    scale = static_cast<double>(config.max_side) / static_cast<double>(std::max(w, h));
  }
  const auto ow = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scale * static_cast<double>(w))));
  const auto oh = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scale * static_cast<double>(h))));

  PreparedInput<T> out;
  out.scale = scale;
  out.image = Tensor<T>({1, 3, oh, ow});
  const double mean = config.pixel_mean, mul = config.pixel_scale;
  for (std::size_t c = 0; c < 3; ++c) {
    const ImagePlane& p = image.planes[c];
    if (ow == w && oh == h) {
      for (std::size_t i = 0; i < w * h; ++i) {
        out.image[c * w * h + i] = static_cast<T>((p.values[i] - mean) * mul);
      }
      continue;
    }
    const double sx = static_cast<double>(w) / static_cast<double>(ow);
    const double sy = static_cast<double>(h) / static_cast<double>(oh);
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const double v = sample_bilinear(p, (static_cast<double>(x) + 0.5) * sx - 0.5, (static_cast<double>(y) + 0.5) * sy - 0.5);
        out.image.at(0, c, y, x) = static_cast<T>((v - mean) * mul);
      }
    }
  }
  return out;
}

template <typename T>
std::vector<Detection> detect(Network<T>& network, const FusedImage& image, std::span<const BBox> proposals,
                              const DetectConfig& config, const std::string& image_id, DetectTiming* timing) {
  if (!(config.nms_iou > 0.0 && config.nms_iou <= 1.0)) throw ConfigError("nms_iou must lie in (0, 1]");
  if (timing) timing->network_seconds = 0.0;
  std::vector<BBox> rois;
  rois.reserve(proposals.size());
  for (const auto& p : proposals) {
    if (p.valid()) rois.push_back(p);
  }
  if (rois.empty()) return {};

  const auto start = std::chrono::steady_clock::now();
  const auto input = prepare_input<T>(image, config.input);
  std::vector<BBox> scaled(rois.size());
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const auto& b = rois[i];
    scaled[i] = {b.x * input.scale, b.y * input.scale, b.w * input.scale, b.h * input.scale};
  }
  const auto out = network.forward(input.image, scaled, Phase::test);
  const Tensor<T> probs = softmax(out.cls_scores);
  if (timing) {
    timing->network_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  std::vector<ScoredBox> kept;
  std::size_t clamped = 0;
  const auto W = static_cast<double>(image.width()), H = static_cast<double>(image.height());
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const double score = static_cast<double>(probs[i * 2 + 1]);
    if (!(score > config.score_threshold)) continue;
    const BBoxDelta d{static_cast<double>(out.bbox_deltas[i * 8 + 4]), static_cast<double>(out.bbox_deltas[i * 8 + 5]),
                      static_cast<double>(out.bbox_deltas[i * 8 + 6]), static_cast<double>(out.bbox_deltas[i * 8 + 7])};
    if (!std::isfinite(d.tx) || !std::isfinite(d.ty) || !std::isfinite(d.tw) || !std::isfinite(d.th)) {
      throw NumericError("non-finite box regression output for image '" + image_id + "'");
    }
    // exp() of large log-ratios overflows; cap at a 1000x size change
    const BBoxDelta capped{d.tx, d.ty, std::min(d.tw, std::log(1000.0)), std::min(d.th, std::log(1000.0))};
    auto decoded = decode_delta(rois[i], capped);
    clamped += decoded.clamped;
    BBox b = clip_box(decoded.box, W, H);
    if (!b.valid()) continue;
    kept.push_back({b, score});
  }
  if (clamped > 0) log_debug(std::to_string(clamped) + " decoded boxes clamped to one pixel");

  std::vector<Detection> dets;
  for (std::size_t idx : nms(kept, config.nms_iou)) {
    dets.push_back({kept[idx].box, kept[idx].score, 1, image_id});
  }
  return dets;
}

template <typename T>
std::vector<std::vector<Detection>> detect_batch(const Network<T>& network, std::span<const DetectJob> jobs,
                                                 const DetectConfig& config, std::size_t threads,
                                                 std::vector<DetectTiming>* timings) {
  std::vector<std::vector<Detection>> results(jobs.size());
  std::vector<DetectTiming> local(jobs.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, jobs.size()));
  std::vector<std::exception_ptr> errors(workers);
  auto run = [&](std::size_t w) {
    try {
      Network<T> net = network;
      for (std::size_t i = w; i < jobs.size(); i += workers) {
        const auto& job = jobs[i];
        if (!job.image || !job.proposals) throw InternalError("detect job without image or proposals");
        results[i] = detect(net, *job.image, *job.proposals, config, job.image_id, &local[i]);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (timings) *timings = std::move(local);
  return results;
}

void write_detections_csv(const std::string& path, std::span<const Detection> dets) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write detections to '" + path + "'");
  out << "image_id,x,y,w,h,score\n";
  out.precision(17);
  for (const auto& d : dets) {
    out << d.image_id << ',' << d.box.x << ',' << d.box.y << ',' << d.box.w << ',' << d.box.h << ',' << d.score << '\n';
  }
  if (!out) throw InputError("failed writing '" + path + "'");
}

std::vector<Detection> read_detections_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open detections file '" + path + "'");
  std::vector<Detection> dets;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("image_id", 0) == 0) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> cols;
    while (std::getline(ss, field, ',')) cols.push_back(field);
    if (cols.size() != 6) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 6 columns, got " + std::to_string(cols.size()));
    }
    try {
      Detection d;
      d.image_id = cols[0];
      d.box = {std::stod(cols[1]), std::stod(cols[2]), std::stod(cols[3]), std::stod(cols[4])};
      d.score = std::stod(cols[5]);
      dets.push_back(d);
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return dets;
}

#define MCDET_INSTANTIATE(T)                                                                                      \
  template PreparedInput<T> prepare_input<T>(const FusedImage&, const InputConfig&);                             \
  template std::vector<Detection> detect<T>(Network<T>&, const FusedImage&, std::span<const BBox>,              \
                                            const DetectConfig&, const std::string&, DetectTiming*);             \
  template std::vector<std::vector<Detection>> detect_batch<T>(const Network<T>&, std::span<const DetectJob>,   \
                                                               const DetectConfig&, std::size_t,                 \
                                                               std::vector<DetectTiming>*);

MCDET_INSTANTIATE(float)
MCDET_INSTANTIATE(double)
#undef MCDET_INSTANTIATE

}  // namespace mcdet
