#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "mcdet/detector.hpp"
#include "mcdet/layer_spec.hpp"
#include "mcdet/synthdata.hpp"
#include "doctest.h"
#include "oracles.hpp"

namespace fs = std::filesystem;
using mcdet::cli::run;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("argument errors exit with status 1") {
    CHECK(run({"-q", "train", "--bogus"}) == 1);
    CHECK(run({"-q"}) == 1);
    const auto dir = oracle::scratch_dir("cli_args");
    fs::create_directories(dir);
    CHECK(run({"-q", "train", "--data", dir.string(), "--mode", "decision", "--out-dir", (dir / "o").string()}) == 1);
    CHECK(run({"-q", "train", "--data", dir.string(), "--mode", "infrared", "--out-dir", (dir / "o").string()}) == 1);
    fs::remove_all(dir);
  }

  TEST_CASE("synth, train, detect, evaluate and benchmark on a tiny suite") {
    const auto root = oracle::scratch_dir("cli_flow");
    fs::create_directories(root);
    const auto data = root / "data";
    {
      std::ofstream p(root / "tiny.profile");
      p << "name = tiny\nbase = easy\nsequences = 3\nframes = 4\ntest_fraction = 0.34\n"
           "width = 80\nheight = 60\nmin_target_size = 14\nmax_target_size = 20\n";
      std::ofstream c(root / "train.cfg");
      c << "arch = desk\niterations = 3\nlr = 0.001\nrois_per_image = 16\nbg_iou_low = 0\n"
           "short_side = 60\nmax_side = 80\npixel_scale = 0.0078125\ninit = msra\nss_k = 100\n"
           "log_interval = 0\n";
    }
    REQUIRE(run({"-q", "synth", "--profile", (root / "tiny.profile").string(), "--out-dir", data.string(), "--seed",
                 "5"}) == 0);
    CHECK(fs::exists(data / "manifest.txt"));
    CHECK(fs::exists(data / "run.json"));

    const auto cfg = (root / "train.cfg").string();
    const auto trained = root / "train";
    REQUIRE(run({"-q", "train", "--data", data.string(), "--mode", "three-channel", "--config", cfg, "--out-dir",
                 trained.string()}) == 0);
    CHECK(fs::exists(trained / "weights.bin"));
    CHECK(fs::exists(trained / "loss.csv"));
    CHECK(slurp(trained / "run.json").find("\"train\"") != std::string::npos);

    const auto det = root / "det";
    REQUIRE(run({"-q", "detect", "--data", data.string(), "--mode", "three-channel", "--config", cfg, "--weights",
                 (trained / "weights.bin").string(), "--split", "test", "--score-threshold", "0", "--overlays", "1",
                 "--out-dir", det.string()}) == 0);
    CHECK(fs::exists(det / "dets.csv"));
    CHECK(fs::is_directory(det / "overlays"));

    const auto ev = root / "eval";
    REQUIRE(run({"-q", "evaluate", "--dets", (det / "dets.csv").string(), "--gt", data.string(), "--split", "test",
                 "--plot", "pr.svg", "--out-dir", ev.string()}) == 0);
    CHECK(slurp(ev / "report.txt").find("AP(%)") != std::string::npos);
    CHECK(fs::exists(ev / "pr.svg"));

    // benchmark names every network it cannot find
    const auto weights = root / "weights";
    fs::create_directories(weights);
    fs::copy_file(trained / "weights.bin", weights / "three-channel.bin");
    CHECK(run({"-q", "benchmark", "--data", data.string(), "--weights", weights.string(), "--config", cfg,
               "--modes", "three-channel", "decision", "--out-dir", (root / "b0").string()}) == 1);
    CHECK_FALSE(fs::exists(root / "b0" / "table.txt"));
    REQUIRE(run({"-q", "benchmark", "--data", data.string(), "--weights", weights.string(), "--config", cfg,
                 "--modes", "three-channel", "--split", "test", "--out-dir", (root / "b1").string()}) == 0);
    CHECK(fs::exists(root / "b1" / "table.txt"));

    CHECK(run({"-q", "dump-features", "--data", data.string(), "--mode", "three-channel", "--config", cfg,
               "--weights", (trained / "weights.bin").string(), "--out-dir", (root / "f").string()}) == 0);
    fs::remove_all(root);
  }
}

TEST_SUITE("cli") {
  TEST_CASE("shipped configuration files parse") {
    const fs::path configs = fs::path(MCDET_SOURCE_DIR) / "configs";
    std::size_t seen = 0;
    for (const auto& entry : fs::directory_iterator(configs)) {
      const auto path = entry.path().string();
      const auto ext = entry.path().extension();
      INFO(path);
      if (ext == ".cfg") {
        CHECK_NOTHROW(mcdet::TrainConfig::load(path).validate());
      } else if (ext == ".table") {
        CHECK_NOTHROW(mcdet::Network<float>::build(mcdet::load_layer_table(path)));
      } else if (ext == ".profile") {
        CHECK_NOTHROW(mcdet::load_profile(path));
      } else {
        continue;
      }
      ++seen;
    }
    CHECK(seen >= 6);
    const auto shipped = mcdet::load_layer_table((configs / "desk.table").string());
    const auto built = mcdet::desk_table();
    REQUIRE(shipped.size() == built.size());
    for (std::size_t i = 0; i < built.size(); ++i) CHECK(shipped[i].out_channels == built[i].out_channels);
  }
}
