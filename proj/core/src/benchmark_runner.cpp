#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "mcdet/error.hpp"
#include "mcdet/eval.hpp"
#include "mcdet/log.hpp"

namespace mcdet {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct ModeRun {
  std::vector<std::vector<Detection>> dets;  // per sample
  std::vector<double> proposal, network, overall;
};

ModeRun run_pixel_mode(std::span<const Sample> samples, FusionMode mode, const Network<float>& network,
                       const BenchmarkConfig& config) {
  const std::size_t n = samples.size();
  ModeRun run;
  run.dets.resize(n);
  run.proposal.resize(n);
  run.network.resize(n);
  run.overall.resize(n);
  const std::size_t workers = std::max<std::size_t>(1, std::min(config.threads, n));
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      Network<float> net = network;
      for (std::size_t i = w; i < n; i += workers) {
        const FusedImage image = samples[i].input(mode);
        const auto start = Clock::now();
        const auto proposals = selective_search(image, config.proposals);
        run.proposal[i] = seconds_since(start);
        DetectTiming timing;
        run.dets[i] = detect(net, image, proposals.boxes, config.detect, samples[i].image_id, &timing);
        run.network[i] = timing.network_seconds;
        run.overall[i] = seconds_since(start);
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
  return run;
}

EvalReport summarise(FusionMode mode, const ModeRun& run, std::span<const GroundTruthBox> gts,
                     const BenchmarkConfig& config, std::vector<Detection>& all) {
  all.clear();
  for (const auto& d : run.dets) all.insert(all.end(), d.begin(), d.end());
  EvalReport r;
  r.mode = mode;
  r.images = run.dets.size();
  const auto matches = match_detections(all, gts, config.iou_threshold);
  r.curve = average_precision(matches, gts.size(), config.interpolation);
  r.ap = r.curve.ap;
  try {
    r.top1 = top1_precision(all, gts, config.iou_threshold);
  } catch (const InputError& e) {
    log_warn(std::string("top-1 precision not reported: ") + e.what());
    r.top1 = std::numeric_limits<double>::quiet_NaN();
  }
  r.proposal_seconds = median(run.proposal);
  r.network_seconds = median(run.network);
  r.overall_seconds = median(run.overall);
  return r;
}

}  // namespace

std::vector<FusionMode> required_networks(FusionMode mode) {
  if (mode == FusionMode::decision_level) {
    return {FusionMode::visible_only, FusionMode::mwir_only, FusionMode::motion_only};
  }
  return {mode};
}

BenchmarkResult run_benchmark(std::span<const Sample> samples, std::span<const FusionMode> modes,
                              const std::map<FusionMode, const Network<float>*>& networks,
                              const BenchmarkConfig& config) {
  if (modes.empty()) throw ConfigError("no fusion modes requested");
  std::vector<FusionMode> missing;
  for (FusionMode m : modes) {
    for (FusionMode need : required_networks(m)) {
      const auto it = networks.find(need);
      if ((it == networks.end() || !it->second) && std::find(missing.begin(), missing.end(), need) == missing.end()) {
        missing.push_back(need);
      }
    }
  }
  if (!missing.empty()) {
    std::string names;
    for (FusionMode m : missing) names += (names.empty() ? "" : ", ") + std::string(cli_name(m));
    throw ConfigError("missing trained network for: " + names);
  }
  if (samples.empty()) throw InputError("benchmark needs at least one test image");
  config.proposals.validate();

  std::vector<GroundTruthBox> gts;
  for (const auto& s : samples) gts.insert(gts.end(), s.gts.begin(), s.gts.end());

  std::map<FusionMode, ModeRun> runs;
  auto pixel_run = [&](FusionMode m) -> const ModeRun& {
    auto it = runs.find(m);
    if (it == runs.end()) {
      log_info("benchmark: running " + std::string(cli_name(m)) + " on " + std::to_string(samples.size()) + " images");
      it = runs.emplace(m, run_pixel_mode(samples, m, *networks.at(m), config)).first;
    }
    return it->second;
  };

  BenchmarkResult result;
  for (FusionMode m : modes) {
    if (result.detections.count(m)) {
      const auto same = std::find_if(result.reports.begin(), result.reports.end(),
                                     [&](const EvalReport& r) { return r.mode == m; });
      result.reports.push_back(*same);
      continue;
    }
    ModeRun run;
    if (m != FusionMode::decision_level) {
      run = pixel_run(m);
    } else {
      const ModeRun& a = pixel_run(FusionMode::visible_only);
      const ModeRun& b = pixel_run(FusionMode::mwir_only);
      const ModeRun& c = pixel_run(FusionMode::motion_only);
      const std::size_t n = samples.size();
      run.dets.resize(n);
      run.proposal.resize(n);
      run.network.resize(n);
      run.overall.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto start = Clock::now();
        const std::vector<Detection> lists[3] = {a.dets[i], b.dets[i], c.dets[i]};
        run.dets[i] = decision_fuse(lists, config.fusion);
        run.proposal[i] = a.proposal[i] + b.proposal[i] + c.proposal[i];
        run.network[i] = a.network[i] + b.network[i] + c.network[i];
        run.overall[i] = a.overall[i] + b.overall[i] + c.overall[i] + seconds_since(start);
      }
    }
    std::vector<Detection> all;
    result.reports.push_back(summarise(m, run, gts, config, all));
    result.detections[m] = std::move(all);
  }
  return result;
}

}  // namespace mcdet
