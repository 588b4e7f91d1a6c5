#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mcdet/error.hpp"
#include "mcdet/network.hpp"
#include "mcdet/ops.hpp"
#include "mcdet/sgd.hpp"
#include "mcdet/weights_io.hpp"
#include "oracles.hpp"

using namespace mcdet;

namespace {

Tensor<float> small_image(std::uint64_t seed, std::size_t h = 96, std::size_t w = 128) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor<float> t({1, 3, h, w});
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

const std::vector<BBox> kRois{{0, 0, 128, 96}, {10, 20, 40, 30}, {60, 5, 50, 70}};

bool bit_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("reference table shapes") {
    const auto table = vggm_table();
    REQUIRE(table.size() == 14);
    auto find = [&](const std::string& name) {
      for (const auto& s : table) {
        if (s.name == name) return s;
      }
      FAIL("missing row " << name);
      return LayerSpec{};
    };
    CHECK(find("conv5").out_channels == 512);
    CHECK(find("fc6").out_channels == 4096);
    CHECK(find("fc7").out_channels == 1024);
    CHECK(find("cls").out_channels == 2);
    CHECK(find("bbox").out_channels == 8);
  }

  TEST_CASE("desk network forward shapes") {
    auto net = Network<float>::build(desk_table());
    CHECK(net.feature_channels() == 64);
    auto out = net.forward(small_image(1), kRois, Phase::test);
    CHECK(out.cls_scores.shape() == Shape{3, 2});
    CHECK(out.bbox_deltas.shape() == Shape{3, 8});
    const auto features = net.feature_extractor(small_image(1));
    CHECK(features.dim(1) == 64);
    auto empty = net.forward(small_image(1), std::span<const BBox>(), Phase::test);
    CHECK(empty.cls_scores.dim(0) == 0);
  }

  TEST_CASE("empty or inconsistent tables are configuration errors") {
    CHECK_THROWS_AS(Network<float>::build({}), ConfigError);
    auto table = desk_table();
    table[3].in_channels = 7;  // conv2 no longer matches conv1
    CHECK_THROWS_WITH_AS(Network<float>::build(table), doctest::Contains("conv2"), ConfigError);
    table = desk_table();
    table.back().out_channels = 6;
    CHECK_THROWS_AS(Network<float>::build(table), ConfigError);
  }

  TEST_CASE("features_until stops at the named row and rejects others") {
    auto net = Network<float>::build(desk_table());
    const auto c1 = net.features_until(small_image(2), "conv1");
    CHECK(c1.dim(1) == 16);
    CHECK(c1.dim(2) == conv_output_size(96, 7, 2, 0));
    CHECK_THROWS_AS(net.features_until(small_image(2), "fc6"), ConfigError);
    CHECK_THROWS_AS(net.features_until(small_image(2), "nope"), ConfigError);
  }

  TEST_CASE("inference is deterministic and copies are deep") {
    InitConfig init;
    init.seed = 9;
    auto a = Network<float>::build(desk_table(), init);
    auto b = Network<float>::build(desk_table(), init);
    const auto img = small_image(3);
    const auto oa = a.forward(img, kRois, Phase::test);
    const auto ob = b.forward(img, kRois, Phase::test);
    CHECK(bit_equal(oa.cls_scores, ob.cls_scores));
    CHECK(bit_equal(oa.bbox_deltas, ob.bbox_deltas));
    CHECK(bit_equal(oa.cls_scores, a.forward(img, kRois, Phase::test).cls_scores));

    Network<float> copy = a;
    copy.parameters()[0].tensor->storage()[0] += 1.0f;
    CHECK(a.parameters()[0].tensor->storage()[0] != copy.parameters()[0].tensor->storage()[0]);
  }

  TEST_CASE("layer table text round trip") {
    std::stringstream ss;
    write_layer_table(ss, vggm_table());
    const auto parsed = parse_layer_table(ss);
    const auto ref = vggm_table();
    REQUIRE(parsed.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(parsed[i].name == ref[i].name);
      CHECK(parsed[i].kind == ref[i].kind);
      CHECK(parsed[i].out_channels == ref[i].out_channels);
      CHECK(parsed[i].kernel_h == ref[i].kernel_h);
      CHECK(parsed[i].stride == ref[i].stride);
      CHECK(parsed[i].pad == ref[i].pad);
    }
    std::istringstream bad("conv1 conv 3 x 7 2 0\n");
    CHECK_THROWS_WITH_AS(parse_layer_table(bad), doctest::Contains("line 1"), ConfigError);
  }
}

TEST_SUITE("weights") {
  TEST_CASE("save then load reproduces every tensor bit for bit") {
    const auto dir = oracle::scratch_dir("weights");
    InitConfig init;
    init.seed = 4;
    auto net = Network<float>::build(desk_table(), init);
    save_weights(net, (dir / "w.bin").string());
    init.seed = 5;
    auto other = Network<float>::build(desk_table(), init);
    const auto report = load_weights(other, (dir / "w.bin").string(), true);
    CHECK(report.skipped.empty());
    const auto pa = net.parameters();
    const auto pb = other.parameters();
    REQUIRE(pa.size() == pb.size());
    CHECK(report.loaded == pa.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(bit_equal(*pa[i].tensor, *pb[i].tensor));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("partial conv-only file loads non-strictly and leaves the heads alone") {
    const auto dir = oracle::scratch_dir("partial");
    InitConfig init;
    init.seed = 6;
    auto src = Network<float>::build(desk_table(), init);
    std::vector<WeightRecord> records;
    for (const auto& p : src.parameters()) {
      if (p.name.rfind("conv", 0) == 0) records.push_back({p.name, *p.tensor});
    }
    REQUIRE(records.size() == 10);
    write_weights_file((dir / "convs.bin").string(), records);

    init.seed = 7;
    auto dst = Network<float>::build(desk_table(), init);
    const auto before = Network<float>(dst);
    const auto report = load_weights(dst, (dir / "convs.bin").string(), false);
    CHECK(report.loaded == 10);
    const auto pd = dst.parameters();
    const auto pb = before.parameters();
    const auto ps = src.parameters();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const bool conv = pd[i].name.rfind("conv", 0) == 0;
      CHECK(bit_equal(*pd[i].tensor, conv ? *ps[i].tensor : *pb[i].tensor));
    }
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("strict load rejects a shape mismatch by name and keeps the network") {
    const auto dir = oracle::scratch_dir("strict");
    std::vector<WeightRecord> records{{"conv1.weight", Tensor<float>({1, 1, 1, 1}, 1.0f)}};
    write_weights_file((dir / "bad.bin").string(), records);
    auto net = Network<float>::build(desk_table());
    const auto before = Network<float>(net);
    CHECK_THROWS_WITH_AS(load_weights(net, (dir / "bad.bin").string(), true), doctest::Contains("conv1.weight"),
                         ConfigError);
    CHECK(bit_equal(*net.parameters()[0].tensor, *before.parameters()[0].tensor));
    const auto lax = load_weights(net, (dir / "bad.bin").string(), false);
    CHECK(lax.loaded == 0);
    CHECK(lax.skipped.size() == 1);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("truncated or foreign files are format errors and leave the network untouched") {
    const auto dir = oracle::scratch_dir("trunc");
    auto net = Network<float>::build(desk_table());
    const auto path = (dir / "w.bin").string();
    save_weights(net, path);
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 9);
    InitConfig init;
    init.seed = 99;
    auto target = Network<float>::build(desk_table(), init);
    const auto before = Network<float>(target);
    CHECK_THROWS_AS(load_weights(target, path, true), FormatError);
    const auto pt = target.parameters();
    const auto pb = before.parameters();
    for (std::size_t i = 0; i < pt.size(); ++i) CHECK(bit_equal(*pt[i].tensor, *pb[i].tensor));

    {
      std::ofstream out(dir / "foreign.bin", std::ios::binary);
      out << "NOTAWEIGHTSFILE";
    }
    CHECK_THROWS_AS(read_weights_file((dir / "foreign.bin").string()), FormatError);
    std::filesystem::remove_all(dir);
  }
}

TEST_SUITE("sgd") {
  TEST_CASE("closed-form single steps") {
    SgdConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    cfg.schedule = {{0, 0.1}};
    SgdOptimizer<double> opt(cfg);
    Tensor<double> p({1}, 1.0);
    p.set_requires_grad(true);
    p.zero_grad();
    p.grad()[0] = 1.0;
    std::vector<NamedParam<double>> params{{"p", &p}};
    opt.step(params, 0);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-15));

    Tensor<double> q({3}, 2.0);
    q.set_requires_grad(true);
    q.zero_grad();
    std::vector<NamedParam<double>> qs{{"q", &q}};
    opt.step(qs, 1);
    for (double v : q.data()) CHECK(v == 2.0);
  }

  TEST_CASE("momentum and weight decay follow the update rule") {
    SgdConfig cfg;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0005;
    cfg.schedule = {{0, 0.01}};
    SgdOptimizer<double> opt(cfg);
    Tensor<double> p({1}, 2.0);
    p.set_requires_grad(true);
    p.zero_grad();
    std::vector<NamedParam<double>> params{{"p", &p}};
    double v = 0.0, x = 2.0;
    for (std::size_t it = 0; it < 5; ++it) {
      const double g = 0.3 * static_cast<double>(it) - 0.2;
      p.grad()[0] = g;
      opt.step(params, it);
      v = 0.9 * v - 0.01 * (g + 0.0005 * x);
      x += v;
      CHECK(p[0] == doctest::Approx(x).epsilon(1e-14));
    }
  }

  TEST_CASE("learning-rate schedule boundaries") {
    SgdConfig cfg;
    CHECK(cfg.lr_at(29999) == 0.001);
    CHECK(cfg.lr_at(30000) == 0.0001);
    cfg.schedule = {{0, 0.1}, {0, 0.01}};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("missing gradient names the tensor") {
    SgdOptimizer<double> opt(SgdConfig{});
    Tensor<double> p({2}, 1.0);
    std::vector<NamedParam<double>> params{{"fc6.weight", &p}};
    CHECK_THROWS_WITH_AS(opt.step(params, 0), doctest::Contains("fc6.weight"), InternalError);
  }
}
