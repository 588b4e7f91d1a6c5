#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "mcdet/detector.hpp"
#include "mcdet/error.hpp"
#include "mcdet/log.hpp"
#include "mcdet/weights_io.hpp"

namespace mcdet {
namespace {

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename T>
std::string weight_norms(const Network<T>& net) {
  std::ostringstream out;
  for (const auto& p : net.parameters()) {
    double s = 0.0;
    for (T v : p.tensor->data()) s += static_cast<double>(v) * static_cast<double>(v);
    out << "\n  " << p.name << " |w| = " << std::sqrt(s);
  }
  return out.str();
}

}  // namespace

void TrainConfig::validate() const {
  sgd.validate();
  sampling.validate();
  proposals.validate();
  if (iterations == 0) throw ConfigError("iterations must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be a non-negative number");
  if (images_per_batch == 0) throw ConfigError("images_per_batch must be positive");
  if (input.short_side == 0 || input.max_side == 0) throw ConfigError("input sizes must be positive");
  if (!(input.pixel_scale > 0.0)) throw ConfigError("pixel_scale must be positive");
  if (!(init.stddev > 0.0)) throw ConfigError("init_std must be positive");
  if (checkpoint_interval > 0 && checkpoint_dir.empty()) {
    throw ConfigError("checkpoint_interval is set but no checkpoint directory was given");
  }
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv) {
  TrainConfig c;
  c.iterations = kv.get_size("iterations", c.iterations);
  const double lr = kv.get_double("lr", c.sgd.learning_rate);
  c.sgd.learning_rate = lr;
  if (kv.has("lr")) c.sgd.schedule = {{0, lr}};
  const auto steps = kv.get_doubles("lr_schedule", {});
  if (!steps.empty()) {
    if (steps.size() % 2 != 0) throw ConfigError("lr_schedule expects pairs of 'iteration rate'");
    c.sgd.schedule.clear();
    for (std::size_t i = 0; i < steps.size(); i += 2) {
      if (steps[i] < 0 || steps[i] != std::floor(steps[i])) {
        throw ConfigError("lr_schedule iterations must be non-negative integers");
      }
      c.sgd.schedule.push_back({static_cast<std::size_t>(steps[i]), steps[i + 1]});
    }
    c.sgd.learning_rate = c.sgd.schedule.front().learning_rate;
  }
  c.sgd.momentum = kv.get_double("momentum", c.sgd.momentum);
  c.sgd.weight_decay = kv.get_double("weight_decay", c.sgd.weight_decay);
  c.lambda = kv.get_double("lambda", c.lambda);
  c.images_per_batch = kv.get_size("images_per_batch", c.images_per_batch);
  c.sampling.rois_per_image = kv.get_size("rois_per_image", c.sampling.rois_per_image);
  c.sampling.fg_fraction = kv.get_double("fg_fraction", c.sampling.fg_fraction);
  c.sampling.fg_iou_threshold = kv.get_double("fg_iou_threshold", c.sampling.fg_iou_threshold);
  c.sampling.bg_iou_low = kv.get_double("bg_iou_low", c.sampling.bg_iou_low);
  c.sampling.bg_iou_high = kv.get_double("bg_iou_high", c.sampling.bg_iou_high);
  c.seed = kv.get_size("seed", c.seed);
  c.checkpoint_interval = kv.get_size("checkpoint_interval", c.checkpoint_interval);
  c.checkpoint_dir = kv.get_string("checkpoint_dir", c.checkpoint_dir);
  c.input.short_side = kv.get_size("short_side", c.input.short_side);
  c.input.max_side = kv.get_size("max_side", c.input.max_side);
  c.input.pixel_mean = kv.get_double("pixel_mean", c.input.pixel_mean);
  c.input.pixel_scale = kv.get_double("pixel_scale", c.input.pixel_scale);
  const std::string init = kv.get_string("init", "gaussian");
  if (init == "gaussian") {
    c.init.scheme = InitConfig::Scheme::gaussian;
  } else if (init == "msra") {
    c.init.scheme = InitConfig::Scheme::msra;
  } else {
    throw ConfigError("init must be 'gaussian' or 'msra', got '" + init + "'");
  }
  c.init.stddev = kv.get_double("init_std", c.init.stddev);
  c.init.seed = kv.get_size("init_seed", c.seed);
  c.normalize_targets = kv.get_bool("normalize_targets", c.normalize_targets);
  c.arch = kv.get_string("arch", c.arch);
  c.proposals.ks = kv.get_doubles("ss_k", c.proposals.ks);
  c.proposals.min_size = kv.get_size("ss_min_size", c.proposals.min_size);
  c.proposals.sigma = kv.get_double("ss_sigma", c.proposals.sigma);
  c.log_interval = kv.get_size("log_interval", c.log_interval);
  kv.reject_unused();
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) { return from_config(KeyValueConfig::load(path)); }

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig kv;
  kv.set("iterations", std::to_string(iterations));
  std::string sched;
  for (const auto& s : sgd.schedule) {
    if (!sched.empty()) sched += ", ";
    sched += std::to_string(s.iteration) + " " + shortest(s.learning_rate);
  }
  kv.set("lr_schedule", sched);
  kv.set("momentum", shortest(sgd.momentum));
  kv.set("weight_decay", shortest(sgd.weight_decay));
  kv.set("lambda", shortest(lambda));
  kv.set("images_per_batch", std::to_string(images_per_batch));
  kv.set("rois_per_image", std::to_string(sampling.rois_per_image));
  kv.set("fg_fraction", shortest(sampling.fg_fraction));
  kv.set("fg_iou_threshold", shortest(sampling.fg_iou_threshold));
  kv.set("bg_iou_low", shortest(sampling.bg_iou_low));
  kv.set("bg_iou_high", shortest(sampling.bg_iou_high));
  kv.set("seed", std::to_string(seed));
  kv.set("checkpoint_interval", std::to_string(checkpoint_interval));
  if (!checkpoint_dir.empty()) kv.set("checkpoint_dir", checkpoint_dir);
  kv.set("short_side", std::to_string(input.short_side));
  kv.set("max_side", std::to_string(input.max_side));
  kv.set("pixel_mean", shortest(input.pixel_mean));
  kv.set("pixel_scale", shortest(input.pixel_scale));
  kv.set("init", init.scheme == InitConfig::Scheme::msra ? "msra" : "gaussian");
  kv.set("init_std", shortest(init.stddev));
  kv.set("init_seed", std::to_string(init.seed));
  kv.set("normalize_targets", normalize_targets ? "true" : "false");
  kv.set("arch", arch);
  std::string ks;
  for (double k : proposals.ks) ks += (ks.empty() ? "" : ", ") + shortest(k);
  kv.set("ss_k", ks);
  kv.set("ss_min_size", std::to_string(proposals.min_size));
  kv.set("ss_sigma", shortest(proposals.sigma));
  kv.set("log_interval", std::to_string(log_interval));
  return kv;
}

std::vector<LayerSpec> resolve_arch(const std::string& arch) {
  if (arch == "vggm") return vggm_table();
  if (arch == "desk") return desk_table();
  return load_layer_table(arch);
}

BBoxDelta normalize_delta(const BBoxDelta& d, const TargetStats& s) noexcept {
  return {(d.tx - s.mean[0]) / s.stddev[0], (d.ty - s.mean[1]) / s.stddev[1], (d.tw - s.mean[2]) / s.stddev[2],
          (d.th - s.mean[3]) / s.stddev[3]};
}

template <typename T>
void fold_target_stats(Network<T>& network, const TargetStats& stats) {
  Tensor<T>* weight = nullptr;
  Tensor<T>* bias = nullptr;
  for (auto& p : network.row_parameters(network.bbox_row())) {
    if (p.name.ends_with(".weight")) weight = p.tensor;
    if (p.name.ends_with(".bias")) bias = p.tensor;
  }
  if (!weight || !bias || bias->numel() != 8) throw InternalError("bbox head has an unexpected parameter layout");
  const std::size_t in = weight->numel() / 8;
  for (std::size_t r = 0; r < 8; ++r) {
    const double sd = stats.stddev[r % 4], mu = stats.mean[r % 4];
    for (std::size_t j = 0; j < in; ++j) (*weight)[r * in + j] = static_cast<T>((*weight)[r * in + j] * sd);
    (*bias)[r] = static_cast<T>((*bias)[r] * sd + mu);
  }
}

TargetStats compute_target_stats(std::span<const TrainingImage> images, const RoiSamplingConfig& config) {
  std::array<double, 4> sum{}, sq{};
  std::size_t n = 0;
  for (const auto& img : images) {
    auto visit = [&](const BBox& c) {
      if (!c.valid()) return;
      double best = -1.0;
      const GroundTruthBox* gt = nullptr;
      for (const auto& g : img.gts) {
        const double o = iou(c, g.box);
        if (o > best) {
          best = o;
          gt = &g;
        }
      }
      if (!gt || best < config.fg_iou_threshold) return;
      const auto d = encode_delta(c, gt->box);
      const double v[4] = {d.tx, d.ty, d.tw, d.th};
      for (std::size_t k = 0; k < 4; ++k) {
        sum[k] += v[k];
        sq[k] += v[k] * v[k];
      }
      ++n;
    };
    for (const auto& g : img.gts) visit(g.box);
    for (const auto& p : img.proposals) visit(p);
  }
  TargetStats s;
  if (n == 0) return s;
  for (std::size_t k = 0; k < 4; ++k) {
    s.mean[k] = sum[k] / static_cast<double>(n);
    const double var = std::max(0.0, sq[k] / static_cast<double>(n) - s.mean[k] * s.mean[k]);
    s.stddev[k] = std::max(std::sqrt(var), 1e-3);
  }
  return s;
}

std::vector<TrainingImage> make_training_images(std::span<const Sample> samples, FusionMode mode,
                                                const SelectiveSearchConfig& proposals, std::size_t threads) {
  proposals.validate();
  std::vector<TrainingImage> out(samples.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, samples.size()));
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < samples.size(); i += workers) {
        auto& t = out[i];
        t.image_id = samples[i].image_id;
        t.image = samples[i].input(mode);
        t.proposals = selective_search(t.image, proposals).boxes;
        t.gts = samples[i].gts;
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

template <typename T>
TrainResult<T> train(std::span<const TrainingImage> images, const TrainConfig& config,
                     std::optional<Network<T>> initial, const TrainCallback& callback) {
  config.validate();
  if (images.empty()) throw InputError("the training split is empty");
  for (const auto& img : images) {
    if (img.gts.empty()) throw InputError("training image '" + img.image_id + "' has no ground-truth box");
  }

  Network<T> net = initial ? std::move(*initial) : Network<T>::build(resolve_arch(config.arch), config.init);
  const TargetStats stats = config.normalize_targets ? compute_target_stats(images, config.sampling) : TargetStats{};
  {
    std::ostringstream msg;
    msg << "bbox target mean";
    for (double m : stats.mean) msg << ' ' << m;
    msg << ", std";
    for (double s : stats.stddev) msg << ' ' << s;
    log_info(msg.str());
  }

  std::mt19937_64 rng(config.seed);
  net.reseed(mix_seed(config.seed));
  SgdOptimizer<T> opt(config.sgd);

  const std::string bbox_prefix = net.bbox_row() + ".";
  const auto all_params = net.parameters();
  std::vector<NamedParam<T>> without_bbox;
  for (const auto& p : all_params) {
    if (!p.name.starts_with(bbox_prefix)) without_bbox.push_back(p);
  }

  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const double normalizer = static_cast<double>(config.images_per_batch * config.sampling.rois_per_image);

  std::vector<TrainLogEntry> log;
  log.reserve(config.iterations);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    net.zero_grad();
    TrainLogEntry entry{it, 0.0, 0.0, config.sgd.lr_at(it), 0};
    for (std::size_t b = 0; b < config.images_per_batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const TrainingImage& img = images[order[cursor++]];
      auto samples = sample_rois(img.proposals, img.gts, config.sampling, rng);
      if (config.normalize_targets) {
        for (auto& s : samples) {
          if (s.target_delta) s.target_delta = normalize_delta(*s.target_delta, stats);
        }
      }
      const auto input = prepare_input<T>(img.image, config.input);
      std::vector<BBox> rois(samples.size());
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& r = samples[i].roi;
        rois[i] = {r.x * input.scale, r.y * input.scale, r.w * input.scale, r.h * input.scale};
      }
      const auto out = net.forward(input.image, rois, Phase::train);
      const auto loss = detection_loss(out, std::span<const RoiSample>(samples), config.lambda, normalizer);
      net.backward(loss.cls_grad, loss.bbox_grad);
      entry.l_cls += loss.l_cls;
      entry.l_bbox += loss.l_bbox;
      entry.foreground += loss.foreground;
    }
    if (!std::isfinite(entry.l_cls) || !std::isfinite(entry.l_bbox)) {
      throw NumericError("non-finite loss at iteration " + std::to_string(it) + " (l_cls " + shortest(entry.l_cls) +
                         ", l_bbox " + shortest(entry.l_bbox) + ")" + weight_norms(net));
    }
    // The [u=1] gate: without foreground ROIs the bbox head takes no
    // step at all, so weight decay and momentum leave it untouched too.
    const bool gate_bbox = entry.foreground == 0 || config.lambda == 0.0;
    opt.step(gate_bbox ? std::span<const NamedParam<T>>(without_bbox) : std::span<const NamedParam<T>>(all_params), it);

    log.push_back(entry);
    if (config.log_interval > 0 && (it % config.log_interval == 0 || it + 1 == config.iterations)) {
      log_info("iter " + std::to_string(it) + "  l_cls " + shortest(entry.l_cls) + "  l_bbox " +
               shortest(entry.l_bbox) + "  lr " + shortest(entry.lr));
    }
    if (config.checkpoint_interval > 0 && (it + 1) % config.checkpoint_interval == 0) {
      std::filesystem::create_directories(config.checkpoint_dir);
      Network<T> snapshot = net;
      if (config.normalize_targets) fold_target_stats(snapshot, stats);
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06zu.bin", it + 1);
      save_weights(snapshot, (std::filesystem::path(config.checkpoint_dir) / name).string());
    }
    if (callback && !callback(entry)) break;
  }

  if (config.normalize_targets) fold_target_stats(net, stats);
  return TrainResult<T>{std::move(net), std::move(log), stats};
}

void write_train_log(const std::string& path, std::span<const TrainLogEntry> log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write training log '" + path + "'");
  out << "iteration,l_cls,l_bbox,lr\n";
  for (const auto& e : log) {
    out << e.iteration << ',' << shortest(e.l_cls) << ',' << shortest(e.l_bbox) << ',' << shortest(e.lr) << '\n';
  }
  if (!out) throw InputError("failed writing '" + path + "'");
}

#define MCDET_INSTANTIATE(T)                                                                                  \
  template void fold_target_stats<T>(Network<T>&, const TargetStats&);                                       \
  template TrainResult<T> train<T>(std::span<const TrainingImage>, const TrainConfig&, std::optional<Network<T>>, \
                                   const TrainCallback&);

MCDET_INSTANTIATE(float)
MCDET_INSTANTIATE(double)
#undef MCDET_INSTANTIATE

}  // namespace mcdet
