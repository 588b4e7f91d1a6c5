#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "mcdet/detector.hpp"
#include "mcdet/error.hpp"
#include "oracles.hpp"

using namespace mcdet;

namespace {

std::vector<float> snapshot(Network<float>& net, const std::string& row) {
  std::vector<float> out;
  for (const auto& p : net.row_parameters(row)) out.insert(out.end(), p.tensor->data().begin(), p.tensor->data().end());
  return out;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

const std::vector<TrainingImage>& smoke_images() {
  static const auto images = [] {
    const auto samples = fixtures::synthetic_samples(20, 42);
    return make_training_images(samples, FusionMode::three_channel, fixtures::quick_config(1).proposals);
  }();
  return images;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("classification loss closed forms") {
    const double half[2] = {0.5, 0.5};
    const double sure[2] = {0.0, 1.0};
    const double e2[2] = {1.0 - std::exp(-2.0), std::exp(-2.0)};
    CHECK(std::abs(classification_loss(sure, 1)) <= 1e-12);
    CHECK(std::abs(classification_loss(half, 1) - 0.6931471805599453) <= 1e-9);
    CHECK(std::abs(classification_loss(e2, 1) - 2.0) <= 1e-9);
    const double zero[2] = {1.0, 0.0};
    const double clamped = classification_loss(zero, 1);
    CHECK(std::isfinite(clamped));
    CHECK(std::abs(clamped + std::log(1e-12)) <= 1e-9);
  }

  TEST_CASE("smooth L1 and box loss closed forms") {
    CHECK(bbox_loss({}, {}) == 0.0);
    CHECK(std::abs(bbox_loss({0.5, 0, 0, 0}, {}) - 0.125) <= 1e-9);
    CHECK(std::abs(bbox_loss({0, 0, 2, 0}, {}) - 1.5) <= 1e-9);
    CHECK(std::abs(bbox_loss({0, -2, 0, 0}, {}) - 1.5) <= 1e-9);
    CHECK(smooth_l1(1.0) == 0.5);
  }

  TEST_CASE("joint loss gates the box term on the label") {
    const double half[2] = {0.5, 0.5};
    const BBoxDelta t{0.5, 0, 0, 0}, v{};
    CHECK(std::abs(joint_loss(half, 1, t, v, 1.0) - 0.818147180559945) <= 1e-9);
    CHECK(joint_loss(half, 0, t, v, 1.0) == classification_loss(half, 0));
    CHECK(joint_loss(half, 0, {9, 9, 9, 9}, v, 5.0) == classification_loss(half, 0));
    CHECK(joint_loss(half, 1, t, v, 0.0) == classification_loss(half, 1));
  }

  TEST_CASE("background rows get exactly zero box gradient") {
    std::mt19937_64 rng(4);
    HeadOutput<double> head{oracle::random_tensor({6, 2}, rng), oracle::random_tensor({6, 8}, rng)};
    std::vector<RoiSample> samples(6);
    samples[2].label = 1;
    samples[2].target_delta = BBoxDelta{0.3, -0.2, 0.1, 2.0};
    const auto l = detection_loss(head, std::span<const RoiSample>(samples), 1.0, 6.0);
    CHECK(l.foreground == 1);
    for (std::size_t r = 0; r < 6; ++r) {
      for (std::size_t k = 0; k < 8; ++k) {
        const bool live = r == 2 && k >= 4;
        if (!live) CHECK(l.bbox_grad[r * 8 + k] == 0.0);
      }
    }
    const auto none = detection_loss(head, std::span<const RoiSample>(samples), 0.0, 6.0);
    for (double g : none.bbox_grad.data()) CHECK(g == 0.0);
  }
}

TEST_SUITE("sampling") {
  const std::vector<GroundTruthBox> gts{{BBox{50, 40, 40, 30}, 1, "img"}};

  TEST_CASE("an exact proposal is a foreground sample with zero delta") {
    std::mt19937_64 rng(1);
    const std::vector<BBox> props{gts[0].box};
    const auto s = sample_rois(props, gts, RoiSamplingConfig{}, rng);
    CHECK(s.size() == 64);
    std::size_t fg = 0;
    for (const auto& r : s) {
      if (r.label != 1) continue;
      ++fg;
      REQUIRE(r.target_delta);
      CHECK(*r.target_delta == BBoxDelta{0, 0, 0, 0});
    }
    CHECK(fg >= 1);
  }

  TEST_CASE("quota and labels follow the thresholds") {
    std::mt19937_64 rng(2);
    std::vector<BBox> props;
    std::uniform_real_distribution<double> u(0.0, 200.0), e(10.0, 80.0);
    for (int i = 0; i < 300; ++i) props.push_back({u(rng), u(rng), e(rng), e(rng)});
    props.push_back({50 + 40 * 0.7 / 1.3, 40, 40, 30});  // IoU 0.3
    const RoiSamplingConfig cfg;
    const auto s = sample_rois(props, gts, cfg, rng);
    REQUIRE(s.size() == 64);
    std::size_t fg = 0;
    for (const auto& r : s) {
      double best = iou(r.roi, gts[0].box);
      if (r.label == 1) {
        ++fg;
        CHECK(best >= cfg.fg_iou_threshold);
        CHECK(r.target_delta.has_value());
      } else {
        CHECK(best < cfg.bg_iou_high);
        CHECK(best >= cfg.bg_iou_low);
        CHECK_FALSE(r.target_delta.has_value());
      }
    }
    CHECK(fg <= 16);
    CHECK(64 - fg >= 48);
  }

  TEST_CASE("a proposal at IoU 0.3 is background") {
    std::mt19937_64 rng(3);
    // horizontal shift d gives IoU (40-d)/(40+d); d = 40*0.7/1.3 yields 0.3
    const double d = 40.0 * 0.7 / 1.3;
    const std::vector<BBox> props{{50 + d, 40, 40, 30}};
    CHECK(iou(props[0], gts[0].box) == doctest::Approx(0.3));
    const auto s = sample_rois(props, gts, RoiSamplingConfig{}, rng);
    bool seen = false;
    for (const auto& r : s) {
      if (r.roi == props[0]) {
        seen = true;
        CHECK(r.label == 0);
      }
    }
    CHECK(seen);
  }

  TEST_CASE("sampling needs a ground-truth box") {
    std::mt19937_64 rng(3);
    const std::vector<BBox> props{{0, 0, 5, 5}};
    CHECK_THROWS_AS(sample_rois(props, std::span<const GroundTruthBox>(), RoiSamplingConfig{}, rng), InputError);
  }
}

TEST_SUITE("training") {
  TEST_CASE("prepare_input scales and normalises") {
    FusedImage img;
    img.planes = {ImagePlane(320, 240, 138), ImagePlane(320, 240, 128), ImagePlane(320, 240, 118)};
    const auto p = prepare_input<float>(img, InputConfig{});
    CHECK(p.scale == doctest::Approx(2.5));
    CHECK(p.image.shape() == Shape{1, 3, 600, 800});
    CHECK(p.image.at(0, 0, 10, 10) == doctest::Approx(10.0));
    CHECK(p.image.at(0, 2, 10, 10) == doctest::Approx(-10.0));
    InputConfig capped{600, 700, 128.0, 0.5};
    const auto q = prepare_input<float>(img, capped);
    CHECK(q.image.dim(3) <= 700);
    CHECK(q.image.at(0, 0, 3, 3) == doctest::Approx(5.0));
  }

  TEST_CASE("configuration file round trip and rejection") {
    std::istringstream in(
        "iterations = 120\nlr_schedule = 0 0.01, 100 0.001\nmomentum = 0.8\narch = desk\n"
        "rois_per_image = 32\nss_k = 50, 100\ninit = msra\n");
    const auto c = TrainConfig::from_config(KeyValueConfig::parse(in));
    CHECK(c.iterations == 120);
    CHECK(c.sgd.lr_at(99) == 0.01);
    CHECK(c.sgd.lr_at(100) == 0.001);
    CHECK(c.sgd.momentum == 0.8);
    CHECK(c.sampling.rois_per_image == 32);
    CHECK(c.proposals.ks == std::vector<double>{50, 100});
    CHECK(c.init.scheme == InitConfig::Scheme::msra);
    const auto back = TrainConfig::from_config(c.to_config());
    CHECK(back.iterations == c.iterations);
    CHECK(back.sgd.schedule.size() == 2);

    std::istringstream bad("iterations = 10\nlearning_rate = 0.1\n");
    CHECK_THROWS_WITH_AS(TrainConfig::from_config(KeyValueConfig::parse(bad)), doctest::Contains("learning_rate"),
                         ConfigError);
    std::istringstream odd("lr_schedule = 0\n");
    CHECK_THROWS_AS(TrainConfig::from_config(KeyValueConfig::parse(odd)), ConfigError);
  }

  TEST_CASE("folding target statistics is equivalent to de-normalising outputs") {
    InitConfig init;
    init.seed = 8;
    auto net = Network<float>::build(resolve_arch("desk"), init);
    auto folded = net;
    TargetStats stats{{0.1, -0.2, 0.05, 0.3}, {0.2, 0.5, 1.5, 0.7}};
    fold_target_stats(folded, stats);
    std::mt19937_64 rng(1);
    Tensor<float> img({1, 3, 64, 80});
    for (auto& v : img.storage()) v = std::normal_distribution<float>(0, 1)(rng);
    const std::vector<BBox> rois{{0, 0, 80, 64}, {10, 10, 30, 20}};
    const auto a = net.forward(img, rois, Phase::test);
    const auto b = folded.forward(img, rois, Phase::test);
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t k = 0; k < 8; ++k) {
        const double expect = a.bbox_deltas[r * 8 + k] * stats.stddev[k % 4] + stats.mean[k % 4];
        CHECK(b.bbox_deltas[r * 8 + k] == doctest::Approx(expect).epsilon(1e-4));
      }
    }
  }

  TEST_CASE("smoke run lowers the loss and finds the target") {
    auto cfg = fixtures::quick_config(200);
    const auto result = train<float>(smoke_images(), cfg);
    REQUIRE(result.log.size() == 200);
    auto mean_total = [&](std::size_t from, std::size_t to) {
      double s = 0.0;
      for (std::size_t i = from; i < to; ++i) s += result.log[i].l_cls + result.log[i].l_bbox;
      return s / double(to - from);
    };
    CHECK(mean_total(180, 200) < mean_total(0, 20));

    auto net = result.network;
    DetectConfig dc;
    dc.input = cfg.input;
    const auto& img = smoke_images()[5];
    const auto dets = detect(net, img.image, img.proposals, dc, img.image_id);
    REQUIRE_FALSE(dets.empty());
    CHECK(iou(dets[0].box, img.gts[0].box) >= 0.5);
    for (std::size_t i = 1; i < dets.size(); ++i) CHECK(dets[i - 1].score >= dets[i].score);

    dc.score_threshold = 1.0;
    CHECK(detect(net, img.image, img.proposals, dc).empty());
    dc.score_threshold = 0.05;
    CHECK(detect(net, img.image, std::span<const BBox>(), dc).empty());
  }

  TEST_CASE("equal seeds give bit-identical loss traces") {
    const auto cfg = fixtures::quick_config(15);
    const auto a = train<float>(smoke_images(), cfg);
    const auto b = train<float>(smoke_images(), cfg);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
      CHECK(std::memcmp(&a.log[i].l_cls, &b.log[i].l_cls, sizeof(double)) == 0);
      CHECK(std::memcmp(&a.log[i].l_bbox, &b.log[i].l_bbox, sizeof(double)) == 0);
    }
  }

  TEST_CASE("lambda zero leaves the box head untouched") {
    auto cfg = fixtures::quick_config(4);
    cfg.lambda = 0.0;
    cfg.normalize_targets = false;
    auto net = Network<float>::build(resolve_arch("desk"), cfg.init);
    const auto bbox_before = snapshot(net, "bbox");
    const auto fc6_before = snapshot(net, "fc6");
    auto result = train<float>(smoke_images(), cfg, net);
    CHECK(same_bits(snapshot(result.network, "bbox"), bbox_before));
    CHECK_FALSE(same_bits(snapshot(result.network, "fc6"), fc6_before));
  }

  TEST_CASE("background-only batches leave the box head untouched") {
    auto cfg = fixtures::quick_config(3);
    cfg.sampling.fg_fraction = 0.001;  // rounds to a zero foreground quota
    cfg.normalize_targets = false;
    auto net = Network<float>::build(resolve_arch("desk"), cfg.init);
    const auto bbox_before = snapshot(net, "bbox");
    const auto cls_before = snapshot(net, "cls");
    std::size_t fg = 0;
    auto result = train<float>(smoke_images(), cfg, net, [&](const TrainLogEntry& e) {
      fg += e.foreground;
      return true;
    });
    CHECK(fg == 0);
    CHECK(same_bits(snapshot(result.network, "bbox"), bbox_before));
    CHECK_FALSE(same_bits(snapshot(result.network, "cls"), cls_before));
  }

  TEST_CASE("training input errors") {
    const auto cfg = fixtures::quick_config(2);
    CHECK_THROWS_AS(train<float>(std::span<const TrainingImage>(), cfg), InputError);
    auto images = std::vector<TrainingImage>(smoke_images().begin(), smoke_images().begin() + 1);
    images[0].gts.clear();
    CHECK_THROWS_AS(train<float>(images, cfg), InputError);
  }

  TEST_CASE("checkpoints and the training log are written") {
    const auto dir = oracle::scratch_dir("ckpt");
    auto cfg = fixtures::quick_config(4);
    cfg.checkpoint_interval = 2;
    cfg.checkpoint_dir = dir.string();
    const auto result = train<float>(smoke_images(), cfg);
    CHECK(std::filesystem::exists(dir / "checkpoint_000002.bin"));
    CHECK(std::filesystem::exists(dir / "checkpoint_000004.bin"));
    write_train_log((dir / "loss.csv").string(), result.log);
    std::ifstream in(dir / "loss.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "iteration,l_cls,l_bbox,lr");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) rows += !line.empty();
    CHECK(rows == 4);
    std::filesystem::remove_all(dir);
  }
}

TEST_SUITE("detections") {
  TEST_CASE("detections CSV round trip and malformed rows") {
    const auto dir = oracle::scratch_dir("dets");
    const std::vector<Detection> dets{{{1.5, 2, 30, 40}, 0.875, 1, "seq/000001"}, {{0, 0, 5, 5}, 0.1, 1, "seq/000002"}};
    write_detections_csv((dir / "d.csv").string(), dets);
    const auto back = read_detections_csv((dir / "d.csv").string());
    REQUIRE(back.size() == 2);
    CHECK(back[0].box == dets[0].box);
    CHECK(back[0].score == dets[0].score);
    CHECK(back[1].image_id == "seq/000002");
    { std::ofstream(dir / "bad.csv") << "image_id,x,y,w,h,score\nseq/1,1,2,3\n"; }
    CHECK_THROWS_WITH_AS(read_detections_csv((dir / "bad.csv").string()), doctest::Contains("bad.csv:2"),
                         FormatError);
    std::filesystem::remove_all(dir);
  }
}
