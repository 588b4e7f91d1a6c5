#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "checks.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "mcdet/error.hpp"
#include "mcdet/eval.hpp"
#include "oracles.hpp"

using namespace mcdet;

namespace {

Detection det(BBox box, double score, const std::string& id = "a") { return {box, score, 1, id}; }
GroundTruthBox gt(BBox box, const std::string& id = "a") { return {box, 1, id}; }

std::vector<MatchResult> flags(std::initializer_list<std::pair<double, bool>> items) {
  std::vector<MatchResult> out;
  for (const auto& [s, tp] : items) {
    MatchResult m;
    m.detection.score = s;
    m.is_true_positive = tp;
    out.push_back(m);
  }
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("matching examples") {
    const std::vector<GroundTruthBox> gts{gt({0, 0, 10, 10})};
    const std::vector<Detection> one{det({0, 0, 10, 10}, 0.9)};
    const auto m1 = match_detections(one, gts);
    REQUIRE(m1.size() == 1);
    CHECK(m1[0].is_true_positive);
    CHECK(m1[0].matched_gt == 0);

    const std::vector<Detection> two{det({1, 0, 10, 10}, 0.6), det({0, 0, 10, 10}, 0.9)};
    const auto m2 = match_detections(two, gts);
    REQUIRE(m2.size() == 2);
    CHECK(m2[0].detection.score == 0.9);
    CHECK(m2[0].is_true_positive);
    CHECK_FALSE(m2[1].is_true_positive);

    // width 10 vs a 10x10 gt shifted so that IoU falls just either side of 0.5
    const double just_below = 10.0 * (1.0 - 0.49) / (1.0 + 0.49);
    const std::vector<Detection> low{det({just_below, 0, 10, 10}, 0.9)};
    CHECK(match_detections(low, gts)[0].iou == doctest::Approx(0.49));
    CHECK_FALSE(match_detections(low, gts)[0].is_true_positive);
    const std::vector<Detection> half{det({0, 0, 20, 10}, 0.9)};
    CHECK(iou(half[0].box, gts[0].box) == 0.5);
    CHECK(match_detections(half, gts)[0].is_true_positive);

    const std::vector<Detection> other{det({0, 0, 10, 10}, 0.9, "b")};
    CHECK_FALSE(match_detections(other, gts)[0].is_true_positive);
  }

  TEST_CASE("no ground-truth box is claimed twice") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 40.0), e(5.0, 20.0), s(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<GroundTruthBox> gts;
      std::vector<Detection> dets;
      for (int i = 0; i < 4; ++i) gts.push_back(gt({u(rng), u(rng), e(rng), e(rng)}, i % 2 ? "a" : "b"));
      for (int i = 0; i < 15; ++i) dets.push_back(det({u(rng), u(rng), e(rng), e(rng)}, s(rng), i % 2 ? "a" : "b"));
      const auto m = match_detections(dets, gts);
      std::set<std::size_t> claimed;
      for (const auto& r : m) {
        if (!r.is_true_positive) continue;
        REQUIRE(r.matched_gt);
        CHECK(claimed.insert(*r.matched_gt).second);
        CHECK(r.iou >= 0.5);
        CHECK(gts[*r.matched_gt].image_id == r.detection.image_id);
      }
    }
  }

  TEST_CASE("average precision examples") {
    CHECK(average_precision(flags({{0.9, true}, {0.8, true}}), 2).ap == 1.0);
    CHECK(average_precision(flags({{0.9, false}, {0.8, true}}), 1).ap == doctest::Approx(0.5));
    CHECK(average_precision(flags({}), 3).ap == 0.0);
    CHECK_THROWS_AS(average_precision(flags({{0.5, false}}), 0), InputError);
    CHECK(average_precision(flags({{0.9, false}, {0.8, true}}), 1, ApInterpolation::eleven_point).ap ==
          doctest::Approx(0.5));
    // a tie between a hit and a miss is admitted together
    const auto tied = average_precision(flags({{0.7, true}, {0.7, false}}), 1);
    CHECK(tied.ap == doctest::Approx(0.5));
    CHECK(tied.points.size() == 1);
  }

  TEST_CASE("average precision equals threshold enumeration on 200 instances") {
    const auto s = checks::check_ap_oracle(200, 99);
    CHECK(s.cases == 200);
    CHECK(s.failures == 0);
  }

  TEST_CASE("curve recall is non-decreasing and AP lies in [0,1]") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<MatchResult> m;
      std::size_t tp = 0;
      for (int i = 0; i < 25; ++i) {
        MatchResult r;
        r.detection.score = std::uniform_real_distribution<double>(0, 1)(rng);
        r.is_true_positive = rng() % 2;
        tp += r.is_true_positive;
        m.push_back(r);
      }
      const auto c = average_precision(m, tp + 2);
      CHECK(c.ap >= 0.0);
      CHECK(c.ap <= 1.0);
      for (std::size_t i = 1; i < c.points.size(); ++i) CHECK(c.points[i].recall >= c.points[i - 1].recall);
    }
  }

  TEST_CASE("top-1 precision examples") {
    std::vector<GroundTruthBox> gts;
    std::vector<Detection> dets;
    for (int i = 0; i < 5; ++i) {
      const std::string id = "img" + std::to_string(i);
      gts.push_back(gt({10, 10, 20, 20}, id));
      dets.push_back(det({10, 10, 20, 20}, 0.9, id));
      dets.push_back(det({60, 60, 20, 20}, 0.5, id));
    }
    CHECK(top1_precision(dets, gts) == 1.0);
    CHECK(top1_precision(std::span<const Detection>(), gts) == 0.0);
    // a confident miss on one image
    dets.push_back(det({60, 60, 20, 20}, 0.95, "img3"));
    CHECK(top1_precision(dets, gts) == doctest::Approx(0.8));
    gts.push_back(gt({0, 0, 5, 5}, "img1"));
    CHECK_THROWS_AS(top1_precision(dets, gts), InputError);
  }

  TEST_CASE("top-1 on 2812 images with 16 misses") {
    std::vector<GroundTruthBox> gts;
    std::vector<Detection> dets;
    for (int i = 0; i < 2812; ++i) {
      const std::string id = std::to_string(i);
      gts.push_back(gt({0, 0, 10, 10}, id));
      dets.push_back(det(i < 16 ? BBox{50, 50, 10, 10} : BBox{0, 0, 10, 10}, 0.8, id));
    }
    CHECK(top1_precision(dets, gts) == doctest::Approx(2796.0 / 2812.0));
    CHECK(top1_precision(dets, gts) == doctest::Approx(0.99431).epsilon(1e-5));
  }

  TEST_CASE("top-1 is invariant under monotone score rescaling") {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> u(0.0, 30.0), s(0.01, 1.0);
    std::vector<GroundTruthBox> gts;
    std::vector<Detection> dets;
    for (int i = 0; i < 30; ++i) {
      const std::string id = std::to_string(i);
      gts.push_back(gt({u(rng), u(rng), 15, 15}, id));
      for (int k = 0; k < 4; ++k) dets.push_back(det({u(rng), u(rng), 15, 15}, s(rng), id));
    }
    const double base = top1_precision(dets, gts);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
    auto warped = dets;
    for (auto& d : warped) d.score = std::pow(d.score, 3.0) * 0.5 + 0.1;
    CHECK(top1_precision(warped, gts) == base);
  }
}

TEST_SUITE("decision_fusion") {
  TEST_CASE("single detector passes through") {
    const std::vector<std::vector<Detection>> lists{{det({0, 0, 10, 10}, 0.8), det({50, 50, 10, 10}, 0.4)}, {}, {}};
    const auto out = decision_fuse(lists);
    REQUIRE(out.size() == 2);
    CHECK(out[0].box == BBox{0, 0, 10, 10});
    CHECK(out[0].score == 0.8);
    CHECK(out[1].box == BBox{50, 50, 10, 10});
  }

  TEST_CASE("identical boxes merge to the maximum score") {
    const std::vector<std::vector<Detection>> lists{
        {det({5, 5, 20, 20}, 0.9)}, {det({5, 5, 20, 20}, 0.8)}, {det({5, 5, 20, 20}, 0.7)}};
    const auto out = decision_fuse(lists);
    REQUIRE(out.size() == 1);
    CHECK(out[0].score == 0.9);
    CHECK(out[0].box.x == doctest::Approx(5.0));
    CHECK(out[0].box.w == doctest::Approx(20.0));
  }

  TEST_CASE("overlapping boxes average by score") {
    const std::vector<std::vector<Detection>> lists{{det({0, 0, 20, 20}, 0.75)}, {det({2, 0, 20, 20}, 0.25)}, {}};
    const auto out = decision_fuse(lists);
    REQUIRE(out.size() == 1);
    CHECK(out[0].box.x == doctest::Approx(0.5));
  }

  TEST_CASE("disjoint boxes stay separate and output never grows") {
    const std::vector<std::vector<Detection>> lists{
        {det({0, 0, 10, 10}, 0.9)}, {det({30, 0, 10, 10}, 0.8)}, {det({60, 0, 10, 10}, 0.7)}};
    CHECK(decision_fuse(lists).size() == 3);

    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> u(0.0, 50.0), e(5.0, 25.0), s(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::vector<Detection>> l(3);
      std::size_t total = 0;
      for (auto& list : l) {
        const int n = static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) list.push_back(det({u(rng), u(rng), e(rng), e(rng)}, s(rng), i % 2 ? "a" : "b"));
        total += list.size();
      }
      CHECK(decision_fuse(l).size() <= total);
    }
  }
}

TEST_SUITE("reports") {
  TEST_CASE("comparison table has one row per report") {
    std::vector<EvalReport> reports;
    for (auto mode : all_fusion_modes()) {
      EvalReport r;
      r.mode = mode;
      r.ap = 0.5;
      r.top1 = 0.75;
      r.proposal_seconds = 0.1;
      r.network_seconds = 0.2;
      r.overall_seconds = 0.31;
      reports.push_back(r);
    }
    const auto table = format_report_table(reports);
    std::istringstream in(table);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    REQUIRE(lines.size() == 8);
    CHECK(lines[0].find("AP(%)") != std::string::npos);
    CHECK(lines[0].find("Top1(%)") != std::string::npos);
    CHECK(lines[0].find("Overall(s)") != std::string::npos);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(lines[i + 2].rfind(std::string(display_name(all_fusion_modes()[i])), 0) == 0);
    }

    const auto dir = oracle::scratch_dir("report");
    write_report_csv((dir / "r.csv").string(), reports);
    std::ifstream csv(dir / "r.csv");
    std::size_t rows = 0;
    for (std::string l; std::getline(csv, l);) rows += !l.empty();
    CHECK(rows == 7);
    PRCurve curve{{{0.5, 1.0}, {1.0, 0.5}}, 0.75};
    write_pr_csv((dir / "pr.csv").string(), curve);
    const std::vector<PRCurve> curves{curve};
    const std::vector<std::string> labels{"three"};
    write_pr_svg((dir / "pr.svg").string(), curves, labels);
    std::ifstream svg(dir / "pr.svg");
    std::string content((std::istreambuf_iterator<char>(svg)), {});
    CHECK(content.find("<svg") != std::string::npos);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("overlays draw green boxes") {
    FusedImage img;
    img.planes = {ImagePlane(40, 30, 0), ImagePlane(40, 30, 0), ImagePlane(40, 30, 0)};
    const std::vector<Detection> dets{det({5, 5, 10, 10}, 0.9)};
    const auto rgb = render_overlay(img, dets);
    const auto* p = &rgb.rgb[(5 * 40 + 5) * 3];
    CHECK(p[1] > p[0]);
    CHECK(p[1] > p[2]);
  }

  TEST_CASE("feature dumps match the feature map and are deterministic") {
    InitConfig init;
    init.seed = 2;
    auto net = Network<float>::build(desk_table(), init);
    const auto samples = fixtures::synthetic_samples(1, 3);
    const auto img = samples[0].input(FusionMode::three_channel);
    InputConfig in;
    in.short_side = 120;
    in.max_side = 160;
    const auto prepared = prepare_input<float>(img, in);
    const auto fm = net.features_until(prepared.image, "conv5");
    const auto a = feature_map_image(net, img, "conv5", in);
    CHECK(a.width == fm.dim(3));
    CHECK(a.height == fm.dim(2));
    CHECK(feature_map_image(net, img, "conv5", in) == a);
    CHECK_THROWS_AS(feature_map_image(net, img, "fc7", in), ConfigError);

    const auto dir = oracle::scratch_dir("dump");
    dump_feature_map(net, img, "conv5", (dir / "a.png").string(), in);
    dump_feature_map(net, img, "conv5", (dir / "b.png").string(), in, FeatureProjection::channel_max);
    std::ifstream fa(dir / "a.png", std::ios::binary), fb(dir / "b.png", std::ios::binary);
    const std::string ca((std::istreambuf_iterator<char>(fa)), {}), cb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(ca == cb);
    std::filesystem::remove_all(dir);

    for (auto& p : net.parameters()) p.tensor->fill(0.0f);
    const auto black = feature_map_image(net, img, "conv5", in);
    for (auto v : black.values) CHECK(v == 0);
  }
}

TEST_SUITE("benchmark") {
  TEST_CASE("dependencies of each mode") {
    CHECK(required_networks(FusionMode::three_channel) == std::vector<FusionMode>{FusionMode::three_channel});
    const auto deps = required_networks(FusionMode::decision_level);
    CHECK(deps.size() == 3);
  }

  TEST_CASE("missing networks are named before any work starts") {
    const std::vector<Sample> none;
    const std::vector<FusionMode> modes{FusionMode::decision_level, FusionMode::visible_mwir};
    try {
      run_benchmark(none, modes, {});
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("visible") != std::string::npos);
      CHECK(msg.find("mwir") != std::string::npos);
      CHECK(msg.find("motion") != std::string::npos);
    }
  }

  TEST_CASE("a two-mode run yields a two-row report with consistent timings") {
    InitConfig init;
    init.seed = 6;
    const auto net = Network<float>::build(desk_table(), init);
    const auto samples = fixtures::synthetic_samples(2, 8);
    BenchmarkConfig cfg;
    cfg.detect.input.short_side = 120;
    cfg.detect.input.max_side = 160;
    cfg.detect.score_threshold = 0.0;
    const std::vector<FusionMode> modes{FusionMode::visible_only, FusionMode::three_channel};
    const auto result = run_benchmark(samples, modes,
                                      {{FusionMode::visible_only, &net}, {FusionMode::three_channel, &net}}, cfg);
    REQUIRE(result.reports.size() == 2);
    CHECK(result.reports[0].mode == FusionMode::visible_only);
    for (const auto& r : result.reports) {
      CHECK(r.images == 2);
      CHECK(r.proposal_seconds > 0.0);
      CHECK(r.network_seconds > 0.0);
      CHECK(r.overall_seconds >= 0.9 * (r.proposal_seconds + r.network_seconds));
      CHECK(r.ap >= 0.0);
      CHECK(r.ap <= 1.0);
    }
  }
}
