#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "mcdet/dataset.hpp"
#include "mcdet/detector.hpp"
#include "mcdet/error.hpp"
#include "mcdet/eval.hpp"
#include "mcdet/log.hpp"
#include "mcdet/proposals.hpp"
#include "mcdet/synthdata.hpp"
#include "mcdet/weights_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mcdet::cli {
namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
  // shared
  std::string data;
  std::string mode;
  std::string weights;
  std::string init_weights;
  std::string out_dir = ".";
  std::string config;
  std::string arch;
  std::string split = "test";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iters;
  std::size_t threads = 1;
  int verbosity = 0;
  bool quiet = false;
  // synth
  std::string profile;
  std::optional<std::size_t> sequences;
  std::optional<std::size_t> frames;
  // detect / evaluate / benchmark
  double score_threshold = 0.05;
  double nms_iou = 0.3;
  std::size_t overlays = 0;
  std::size_t limit = 0;
  std::string dets;
  std::string gt;
  std::string plot;
  bool eleven_point = false;
  std::vector<std::string> modes;
  // dump-features
  std::string layer;
  std::string image_id;
  std::string projection = "max";
};

fs::path under(const Options& o, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : fs::path(o.out_dir) / p;
}

void ensure_out_dir(const Options& o) {
  std::error_code ec;
  fs::create_directories(o.out_dir, ec);
  if (ec) throw InputError("cannot create output directory '" + o.out_dir + "': " + ec.message());
}

json kv_to_json(const KeyValueConfig& kv) {
  json j = json::object();
  for (const auto& [k, v] : kv.values()) j[k] = v;
  return j;
}

void write_manifest_json(const Options& o, const std::string& command, json resolved, const json& outputs) {
  json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["seed"] = o.seed ? json(*o.seed) : json(nullptr);
  j["threads"] = o.threads;
  j["config"] = std::move(resolved);
  j["outputs"] = outputs;
  std::ofstream out(under(o, "run.json"));
  if (!out) throw InputError("cannot write run manifest under '" + o.out_dir + "'");
  out << j.dump(2) << '\n';
}

TrainConfig load_train_config(const Options& o) {
  TrainConfig c = o.config.empty() ? TrainConfig{} : TrainConfig::load(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.init.seed = *o.seed;
  }
  if (o.iters) c.iterations = *o.iters;
  if (!o.arch.empty()) c.arch = o.arch;
  c.validate();
  return c;
}

std::optional<Split> parse_split_option(const std::string& s) {
  if (s == "all") return std::nullopt;
  return parse_split(s);
}

FusionMode pixel_mode(const Options& o) {
  const FusionMode m = parse_fusion_mode(o.mode);
  if (!is_pixel_mode(m)) {
    throw InputError("mode 'decision' fuses detector outputs and is only available to detect and benchmark");
  }
  return m;
}

std::vector<Sample> load_samples(const Options& o) {
  auto samples = ingest_dataset(o.data, parse_split_option(o.split));
  if (samples.empty()) throw InputError("no '" + o.split + "' images found under '" + o.data + "'");
  if (o.limit > 0 && samples.size() > o.limit) samples.resize(o.limit);
  return samples;
}

Network<float> load_network(const std::string& arch, const std::string& path) {
  auto net = Network<float>::build(resolve_arch(arch));
  load_weights(net, path, true);
  return net;
}

std::string weights_file(const std::string& dir, FusionMode m) {
  return (fs::path(dir) / (std::string(cli_name(m)) + ".bin")).string();
}

DetectConfig detect_config(const Options& o, const TrainConfig& tc) {
  DetectConfig d;
  d.score_threshold = o.score_threshold;
  d.nms_iou = o.nms_iou;
  d.input = tc.input;
  return d;
}

json detect_json(const DetectConfig& d) {
  return {{"score_threshold", d.score_threshold}, {"nms_iou", d.nms_iou}};
}

// ---- commands -----------------------------------------------------------

void cmd_synth(const Options& o) {
  SuiteProfile profile = fs::exists(o.profile) ? load_profile(o.profile) : builtin_profile(o.profile);
  if (o.sequences) profile.sequences = *o.sequences;
  if (o.frames) profile.frames = *o.frames;
  ensure_out_dir(o);
  const auto summary = generate_suite(profile, o.out_dir, o.seed.value_or(0));
  log_info("wrote " + std::to_string(summary.frames_written) + " frames to " + summary.root);
  write_manifest_json(o, "synth",
                      {{"profile", profile.name}, {"sequences", profile.sequences}, {"frames", profile.frames},
                       {"test_fraction", profile.test_fraction}},
                      {"manifest.txt", "profile.cfg"});
}

void cmd_propose(const Options& o) {
  const FusionMode mode = pixel_mode(o);
  const TrainConfig tc = load_train_config(o);
  const auto samples = load_samples(o);
  ensure_out_dir(o);
  const auto images = make_training_images(samples, mode, tc.proposals, o.threads);

  std::ofstream out(under(o, "proposals.csv"));
  if (!out) throw InputError("cannot write proposals under '" + o.out_dir + "'");
  out << "image_id,x,y,w,h\n";
  std::vector<std::size_t> counts;
  std::size_t gts = 0, covered = 0;
  for (const auto& img : images) {
    counts.push_back(img.proposals.size());
    for (const auto& b : img.proposals) out << img.image_id << ',' << b.x << ',' << b.y << ',' << b.w << ',' << b.h << '\n';
    for (const auto& g : img.gts) {
      ++gts;
      const bool hit = std::any_of(img.proposals.begin(), img.proposals.end(),
                                   [&](const BBox& b) { return iou(b, g.box) >= 0.5; });
      covered += hit;
    }
  }
  std::sort(counts.begin(), counts.end());
  const double recall = gts ? static_cast<double>(covered) / static_cast<double>(gts) : 0.0;
  std::cout << "images " << images.size() << "  proposals/image min " << counts.front() << " median "
            << counts[counts.size() / 2] << " max " << counts.back() << "  recall@0.5 " << recall << '\n';
  write_manifest_json(o, "propose",
                      {{"data", o.data}, {"mode", to_string(mode)}, {"split", o.split},
                       {"train_config", kv_to_json(tc.to_config())}},
                      {"proposals.csv"});
}

void cmd_train(const Options& o) {
  const FusionMode mode = pixel_mode(o);
  TrainConfig tc = load_train_config(o);
  if (tc.checkpoint_interval > 0 && tc.checkpoint_dir.empty()) tc.checkpoint_dir = under(o, "checkpoints").string();
  Options train_opts = o;
  train_opts.split = "train";
  const auto samples = load_samples(train_opts);
  ensure_out_dir(o);

  std::optional<Network<float>> initial;
  if (!o.init_weights.empty()) {
    initial = Network<float>::build(resolve_arch(tc.arch), tc.init);
    const auto report = load_weights(*initial, o.init_weights, false);
    log_info("imported " + std::to_string(report.loaded) + " tensors from " + o.init_weights + ", skipped " +
             std::to_string(report.skipped.size()));
  }

  log_info("computing proposals for " + std::to_string(samples.size()) + " training images");
  const auto images = make_training_images(samples, mode, tc.proposals, o.threads);
  const auto result = train<float>(images, tc, std::move(initial));

  save_weights(result.network, under(o, "weights.bin").string());
  write_train_log(under(o, "loss.csv").string(), result.log);
  {
    std::ofstream cfg(under(o, "train.cfg"));
    const auto kv = tc.to_config();
    for (const auto& [k, v] : kv.values()) cfg << k << " = " << v << '\n';
  }
  json resolved = kv_to_json(tc.to_config());
  resolved["data"] = o.data;
  resolved["mode"] = to_string(mode);
  resolved["init_weights"] = o.init_weights;
  resolved["target_mean"] = result.stats.mean;
  resolved["target_std"] = result.stats.stddev;
  write_manifest_json(o, "train", resolved, {"weights.bin", "loss.csv", "train.cfg"});
}

std::map<FusionMode, Network<float>> load_mode_networks(const std::string& dir, std::span<const FusionMode> modes,
                                                        const std::string& arch) {
  std::vector<FusionMode> needed;
  for (FusionMode m : modes) {
    for (FusionMode r : required_networks(m)) {
      if (std::find(needed.begin(), needed.end(), r) == needed.end()) needed.push_back(r);
    }
  }
  std::string missing;
  for (FusionMode m : needed) {
    if (!fs::exists(weights_file(dir, m))) {
      missing += (missing.empty() ? "" : ", ") + std::string(cli_name(m)) + " (" + weights_file(dir, m) + ")";
    }
  }
  if (!missing.empty()) throw ConfigError("missing weights for: " + missing);
  std::map<FusionMode, Network<float>> nets;
  for (FusionMode m : needed) nets.emplace(m, load_network(arch, weights_file(dir, m)));
  return nets;
}

void cmd_detect(const Options& o) {
  const FusionMode mode = parse_fusion_mode(o.mode);
  const TrainConfig tc = load_train_config(o);
  const DetectConfig dc = detect_config(o, tc);
  const auto samples = load_samples(o);

  std::vector<Detection> all;
  std::vector<std::vector<Detection>> per_image(samples.size());
  if (mode == FusionMode::decision_level) {
    const FusionMode one[] = {mode};
    auto nets = load_mode_networks(o.weights, one, tc.arch);
    std::map<FusionMode, const Network<float>*> ptrs;
    for (auto& [m, n] : nets) ptrs[m] = &n;
    BenchmarkConfig bc;
    bc.proposals = tc.proposals;
    bc.detect = dc;
    bc.threads = o.threads;
    auto result = run_benchmark(samples, one, ptrs, bc);
    all = std::move(result.detections[mode]);
  } else {
    const std::string path = fs::is_directory(o.weights) ? weights_file(o.weights, mode) : o.weights;
    const auto net = load_network(tc.arch, path);
    const auto images = make_training_images(samples, mode, tc.proposals, o.threads);
    std::vector<DetectJob> jobs;
    for (const auto& img : images) jobs.push_back({&img.image, &img.proposals, img.image_id});
    per_image = detect_batch(net, std::span<const DetectJob>(jobs), dc, o.threads);
    for (const auto& d : per_image) all.insert(all.end(), d.begin(), d.end());
  }
  ensure_out_dir(o);
  write_detections_csv(under(o, "dets.csv").string(), all);

  json outputs = {"dets.csv"};
  if (o.overlays > 0) {
    fs::create_directories(under(o, "overlays"));
    std::map<std::string, std::vector<Detection>> by_image;
    for (const auto& d : all) by_image[d.image_id].push_back(d);
    const FusionMode shown = is_pixel_mode(mode) ? mode : FusionMode::three_channel;
    for (std::size_t i = 0; i < std::min(o.overlays, samples.size()); ++i) {
      std::string name = samples[i].image_id;
      std::replace(name.begin(), name.end(), '/', '_');
      const auto path = under(o, "overlays/" + name + ".png");
      write_overlay(path.string(), samples[i].input(shown), by_image[samples[i].image_id]);
      outputs.push_back("overlays/" + name + ".png");
    }
  }
  std::cout << all.size() << " detections on " << samples.size() << " images\n";
  write_manifest_json(o, "detect",
                      {{"data", o.data}, {"mode", to_string(mode)}, {"weights", o.weights}, {"split", o.split},
                       {"detect", detect_json(dc)}, {"train_config", kv_to_json(tc.to_config())}},
                      outputs);
}

void cmd_evaluate(const Options& o) {
  const auto dets = read_detections_csv(o.dets);
  Options gt_opts = o;
  gt_opts.data = o.gt;
  const auto samples = load_samples(gt_opts);
  std::vector<GroundTruthBox> gts;
  for (const auto& s : samples) gts.insert(gts.end(), s.gts.begin(), s.gts.end());
  const auto interp = o.eleven_point ? ApInterpolation::eleven_point : ApInterpolation::all_points;

  EvalReport r;
  r.mode = o.mode.empty() ? FusionMode::three_channel : parse_fusion_mode(o.mode);
  r.images = samples.size();
  r.curve = average_precision(match_detections(dets, gts), gts.size(), interp);
  r.ap = r.curve.ap;
  try {
    r.top1 = top1_precision(dets, gts);
  } catch (const InputError& e) {
    log_warn(std::string("top-1 precision not reported: ") + e.what());
    r.top1 = std::nan("");
  }
  ensure_out_dir(o);
  const EvalReport reports[] = {r};
  write_report_csv(under(o, "report.csv").string(), reports);
  write_pr_csv(under(o, "pr.csv").string(), r.curve);
  const std::string table = format_report_table(reports);
  std::ofstream(under(o, "report.txt")) << table;
  json outputs = {"report.csv", "report.txt", "pr.csv"};
  if (!o.plot.empty()) {
    const PRCurve curves[] = {r.curve};
    const std::string labels[] = {std::string(display_name(r.mode))};
    write_pr_svg(under(o, o.plot).string(), curves, labels);
    outputs.push_back(o.plot);
  }
  std::cout << table;
  write_manifest_json(o, "evaluate",
                      {{"dets", o.dets}, {"gt", o.gt}, {"split", o.split},
                       {"interpolation", o.eleven_point ? "11-point" : "all-points"}},
                      outputs);
}

void cmd_benchmark(const Options& o) {
  std::vector<FusionMode> modes;
  if (o.modes.empty()) {
    modes.assign(all_fusion_modes().begin(), all_fusion_modes().end());
  } else {
    for (const auto& m : o.modes) modes.push_back(parse_fusion_mode(m));
  }
  const TrainConfig tc = load_train_config(o);
  auto nets = load_mode_networks(o.weights, modes, tc.arch);
  const auto samples = load_samples(o);
  std::map<FusionMode, const Network<float>*> ptrs;
  for (auto& [m, n] : nets) ptrs[m] = &n;

  BenchmarkConfig bc;
  bc.proposals = tc.proposals;
  bc.detect = detect_config(o, tc);
  bc.threads = o.threads;
  bc.interpolation = o.eleven_point ? ApInterpolation::eleven_point : ApInterpolation::all_points;
  const auto result = run_benchmark(samples, modes, ptrs, bc);

  ensure_out_dir(o);
  write_report_csv(under(o, "report.csv").string(), result.reports);
  const std::string table = format_report_table(result.reports);
  std::ofstream(under(o, "table.txt")) << table;
  std::vector<PRCurve> curves;
  std::vector<std::string> labels;
  json outputs = {"report.csv", "table.txt", "pr.svg"};
  for (const auto& r : result.reports) {
    curves.push_back(r.curve);
    labels.emplace_back(display_name(r.mode));
    const std::string name = "dets_" + std::string(to_string(r.mode)) + ".csv";
    write_detections_csv(under(o, name).string(), result.detections.at(r.mode));
    outputs.push_back(name);
  }
  write_pr_svg(under(o, "pr.svg").string(), curves, labels);
  std::cout << table;
  json mode_names = json::array();
  for (FusionMode m : modes) mode_names.push_back(to_string(m));
  write_manifest_json(o, "benchmark",
                      {{"data", o.data}, {"weights", o.weights}, {"modes", mode_names}, {"split", o.split},
                       {"detect", detect_json(bc.detect)}, {"train_config", kv_to_json(tc.to_config())}},
                      outputs);
}

void cmd_dump_features(const Options& o) {
  const FusionMode mode = pixel_mode(o);
  const TrainConfig tc = load_train_config(o);
  const std::string path = fs::is_directory(o.weights) ? weights_file(o.weights, mode) : o.weights;
  auto net = load_network(tc.arch, path);
  std::string layer = o.layer;
  if (layer.empty()) {
    for (const auto& row : net.table()) {
      if (row.kind == LayerKind::conv) layer = row.name;
    }
  }
  const auto samples = load_samples(o);
  const Sample* sample = &samples.front();
  if (!o.image_id.empty()) {
    const auto it = std::find_if(samples.begin(), samples.end(), [&](const Sample& s) { return s.image_id == o.image_id; });
    if (it == samples.end()) throw InputError("image '" + o.image_id + "' not found in the '" + o.split + "' split");
    sample = &*it;
  }
  FeatureProjection proj;
  if (o.projection == "max") {
    proj = FeatureProjection::channel_max;
  } else if (o.projection == "mean") {
    proj = FeatureProjection::channel_mean;
  } else {
    throw InputError("projection must be 'max' or 'mean'");
  }
  ensure_out_dir(o);
  std::string stem = sample->image_id;
  std::replace(stem.begin(), stem.end(), '/', '_');
  const std::string fm_name = "features_" + layer + "_" + stem + ".png";
  const std::string in_name = "input_" + stem + ".png";
  const FusedImage image = sample->input(mode);
  dump_feature_map(net, image, layer, under(o, fm_name).string(), tc.input, proj);
  write_png_rgb(under(o, in_name).string(), to_rgb(image));
  write_manifest_json(o, "dump-features",
                      {{"data", o.data}, {"mode", to_string(mode)}, {"weights", o.weights}, {"layer", layer},
                       {"image_id", sample->image_id}, {"projection", o.projection}},
                      {fm_name, in_name});
}

}  // namespace

int run(int argc, const char* const* argv) {
  Options o;
  CLI::App app{"Multi-channel image-fused object detection toolkit", "mcdet"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  app.add_flag("-v,--verbose", o.verbosity, "Increase log verbosity (repeatable)");
  app.add_flag("-q,--quiet", o.quiet, "Only report errors");

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Random seed"); };
  auto add_threads = [&](CLI::App* c) {
    c->add_option("--threads", o.threads, "Worker thread cap")->check(CLI::PositiveNumber);
  };
  auto add_out = [&](CLI::App* c) { c->add_option("--out-dir,--out", o.out_dir, "Output directory"); };
  auto add_cfg = [&](CLI::App* c) {
    c->add_option("--config", o.config, "Training config (key = value)")->check(CLI::ExistingFile);
    c->add_option("--arch", o.arch, "vggm, desk, or a layer-table file");
  };
  auto add_split = [&](CLI::App* c) {
    c->add_option("--split", o.split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
    c->add_option("--limit", o.limit, "Use at most N images");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic tri-modal dataset");
  synth->add_option("--profile", o.profile, "easy, camouflage, small-target, mixed, or a profile file")->required();
  synth->add_option("--sequences", o.sequences, "Override the number of sequences");
  synth->add_option("--frames", o.frames, "Override frames per sequence");
  synth->add_option("--out-dir,--out", o.out_dir, "Dataset root to create")->required();
  add_seed(synth);

  auto* propose = app.add_subcommand("propose", "Run selective search and report proposal statistics");
  propose->add_option("--data", o.data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  propose->add_option("--mode", o.mode, "Fusion mode")->required();
  add_cfg(propose);
  add_split(propose);
  add_out(propose);
  add_threads(propose);

  auto* trn = app.add_subcommand("train", "Train a detector for one fusion mode");
  trn->add_option("--data", o.data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  trn->add_option("--mode", o.mode, "Fusion mode")->required();
  trn->add_option("--iters", o.iters, "Override the iteration count")->check(CLI::PositiveNumber);
  trn->add_option("--init-weights", o.init_weights, "Import matching tensors before training")
      ->check(CLI::ExistingFile);
  add_cfg(trn);
  add_seed(trn);
  add_out(trn);
  add_threads(trn);

  auto* det = app.add_subcommand("detect", "Run a trained detector over a dataset split");
  det->add_option("--data", o.data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  det->add_option("--mode", o.mode, "Fusion mode")->required();
  det->add_option("--weights", o.weights, "Weights file, or a directory of <mode>.bin files")->required();
  det->add_option("--score-threshold", o.score_threshold, "Keep detections scoring above this");
  det->add_option("--nms-iou", o.nms_iou, "NMS overlap threshold");
  det->add_option("--overlays", o.overlays, "Write overlays for the first N images");
  add_cfg(det);
  add_split(det);
  add_out(det);
  add_threads(det);

  auto* ev = app.add_subcommand("evaluate", "Score a detections CSV against ground truth");
  ev->add_option("--dets", o.dets, "Detections CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", o.gt, "Dataset root holding the ground truth")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--plot", o.plot, "Write the PR curve as SVG");
  ev->add_option("--mode", o.mode, "Label for the report row");
  ev->add_flag("--eleven-point", o.eleven_point, "Use 11-point interpolated AP");
  add_split(ev);
  add_out(ev);

  auto* bench = app.add_subcommand("benchmark", "Compare fusion modes in one table");
  bench->add_option("--data", o.data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  bench->add_option("--weights", o.weights, "Directory of <mode>.bin files")->required();
  bench->add_option("--modes", o.modes, "Modes to compare (default: all six)");
  bench->add_option("--score-threshold", o.score_threshold, "Keep detections scoring above this");
  bench->add_option("--nms-iou", o.nms_iou, "NMS overlap threshold");
  bench->add_flag("--eleven-point", o.eleven_point, "Use 11-point interpolated AP");
  add_cfg(bench);
  add_split(bench);
  add_out(bench);
  add_threads(bench);

  auto* dump = app.add_subcommand("dump-features", "Write a feature-map projection as a grayscale PNG");
  dump->add_option("--data", o.data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  dump->add_option("--mode", o.mode, "Fusion mode")->required();
  dump->add_option("--weights", o.weights, "Weights file")->required();
  dump->add_option("--layer", o.layer, "Layer name (default: last conv layer)");
  dump->add_option("--image-id", o.image_id, "Image to visualise (default: first of the split)");
  dump->add_option("--projection", o.projection, "max or mean");
  add_cfg(dump);
  add_split(dump);
  add_out(dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  if (o.quiet) {
    set_log_level(LogLevel::quiet);
  } else {
    set_log_level(o.verbosity >= 2 ? LogLevel::debug : o.verbosity == 1 ? LogLevel::info : LogLevel::warn);
  }

  try {
    if (synth->parsed()) cmd_synth(o);
    if (propose->parsed()) cmd_propose(o);
    if (trn->parsed()) cmd_train(o);
    if (det->parsed()) cmd_detect(o);
    if (ev->parsed()) cmd_evaluate(o);
    if (bench->parsed()) cmd_benchmark(o);
    if (dump->parsed()) cmd_dump_features(o);
  } catch (const InternalError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"mcdet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace mcdet::cli
