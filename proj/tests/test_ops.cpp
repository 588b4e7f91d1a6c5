#include <cmath>
#include <map>
#include <random>

#include "checks.hpp"
#include "doctest.h"
#include "mcdet/error.hpp"
#include "mcdet/ops.hpp"
#include "oracles.hpp"

using namespace mcdet;

namespace {

LayerSpec conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride = 1, std::size_t pad = 0) {
  LayerSpec s;
  s.name = "convX";
  s.kind = LayerKind::conv;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = s.kernel_w = k;
  s.stride = stride;
  s.pad = pad;
  return s;
}

LayerSpec pool(std::size_t k, std::size_t stride) {
  LayerSpec s;
  s.name = "poolX";
  s.kind = LayerKind::maxpool;
  s.kernel_h = s.kernel_w = k;
  s.stride = stride;
  return s;
}

LayerSpec fc(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.name = "fcX";
  s.kind = LayerKind::fc;
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

// number of window placements, counted one by one
std::size_t placements(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  std::size_t n = 0;
  for (std::size_t start = 0; start + k <= in + 2 * pad; start += stride) ++n;
  return n;
}

}  // namespace

TEST_SUITE("ops") {
  TEST_CASE("conv all-ones correlation gives 9 plus bias") {
    Tensor<double> x({1, 1, 3, 3}, 1.0), w({1, 1, 3, 3}, 1.0), b({1}, 0.5);
    const auto y = conv2d_forward(x, w, b, conv(1, 1, 3));
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == doctest::Approx(9.5));
  }

  TEST_CASE("conv1 of the reference table maps 224 to 109") {
    Tensor<float> x({1, 3, 224, 224}, 0.0f), w({96, 3, 7, 7}, 0.0f), b({96}, 0.0f);
    CHECK(conv2d_forward(x, w, b, conv(3, 96, 7, 2, 0)).shape() == Shape{1, 96, 109, 109});
  }

  TEST_CASE("identity kernel reproduces the input") {
    std::mt19937_64 rng(3);
    const auto x = oracle::random_tensor({1, 1, 5, 4}, rng);
    Tensor<double> w({1, 1, 3, 3}, 0.0), b({1}, 0.0);
    w[4] = 1.0;
    const auto y = conv2d_forward(x, w, b, conv(1, 1, 3, 1, 1));
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
  }

  TEST_CASE("conv backward examples") {
    Tensor<double> x({1, 1, 3, 3}, 1.0), w({1, 1, 3, 3}, 1.0);
    const auto spec = conv(1, 1, 3);
    const auto zero = conv2d_backward(Tensor<double>({1, 1, 1, 1}, 0.0), x, w, spec);
    for (double v : zero.input.data()) CHECK(v == 0.0);
    for (double v : zero.weight.data()) CHECK(v == 0.0);
    CHECK(zero.bias[0] == 0.0);
    // each weight sees exactly one input pixel of value 1
    const auto g = conv2d_backward(Tensor<double>({1, 1, 1, 1}, 1.0), x, w, spec);
    for (double v : g.weight.data()) CHECK(v == 1.0);
    CHECK(g.bias[0] == 1.0);
  }

  TEST_CASE("conv rejects a channel mismatch naming the layer") {
    Tensor<double> x({1, 2, 4, 4}), w({1, 3, 3, 3}), b({1});
    CHECK_THROWS_WITH_AS(conv2d_forward(x, w, b, conv(3, 1, 3)), doctest::Contains("convX"), ConfigError);
  }

  TEST_CASE("conv backward without saved input is an internal error") {
    Tensor<double> w({1, 1, 3, 3}, 1.0);
    CHECK_THROWS_AS(conv2d_backward(Tensor<double>({1, 1, 1, 1}, 1.0), Tensor<double>(), w, conv(1, 1, 3)),
                    InternalError);
  }

  TEST_CASE("output size formula matches window enumeration") {
    for (std::size_t in = 1; in <= 30; ++in) {
      for (std::size_t k = 1; k <= 7; ++k) {
        for (std::size_t s = 1; s <= 3; ++s) {
          for (std::size_t p = 0; p <= 2; ++p) {
            CHECK(conv_output_size(in, k, s, p) == placements(in, k, s, p));
          }
        }
      }
    }
  }

  TEST_CASE("lrn examples") {
    LrnParams p{1, 1e-4, 0.75, 2.0};
    const auto zero = lrn_forward(Tensor<double>({1, 3, 2, 2}, 0.0), LrnParams{});
    for (double v : zero.data()) CHECK(v == 0.0);
    const auto one = lrn_forward(Tensor<double>({1, 1, 1, 1}, 1.0), p);
    CHECK(one[0] == doctest::Approx(1.0 / std::pow(2.0 + 1e-4, 0.75)).epsilon(1e-12));
    p.local_size = 0;
    CHECK_THROWS_AS(lrn_forward(Tensor<double>({1, 1, 1, 1}, 1.0), p), ConfigError);
  }

  TEST_CASE("maxpool examples") {
    Tensor<double> x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    const auto r = maxpool_forward(x, pool(2, 2));
    REQUIRE(r.output.numel() == 1);
    CHECK(r.output[0] == 4.0);
    CHECK(r.argmax[0] == 3);
    const auto c = maxpool_forward(Tensor<double>({1, 2, 5, 5}, 7.0), pool(3, 2));
    for (double v : c.output.data()) CHECK(v == 7.0);
    CHECK_THROWS_AS(maxpool_forward(Tensor<double>({1, 1, 2, 2}), pool(3, 1)), ConfigError);
  }

  TEST_CASE("maxpool backward routes only to argmax positions") {
    Tensor<double> x({1, 1, 2, 2}, std::vector<double>{1, 5, 3, 4});
    const auto r = maxpool_forward(x, pool(2, 2));
    const auto g = maxpool_backward(Tensor<double>({1, 1, 1, 1}, 2.0), std::span<const std::size_t>(r.argmax), x.shape());
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 2.0);
    CHECK(g[2] == 0.0);
    CHECK(g[3] == 0.0);
  }

  TEST_CASE("fc examples") {
    Tensor<double> x({1, 2}, std::vector<double>{1, 2});
    Tensor<double> w({2, 2}, std::vector<double>{1, 1, -1, 1});
    Tensor<double> b({2}, std::vector<double>{0, 1});
    const auto y = fc_forward(x, w, b, fc(2, 2));
    CHECK(y[0] == 3.0);
    CHECK(y[1] == 2.0);
    Tensor<double> eye({2, 2}, std::vector<double>{1, 0, 0, 1});
    const auto id = fc_forward(x, eye, Tensor<double>({2}, 0.0), fc(2, 2));
    CHECK(id[0] == 1.0);
    CHECK(id[1] == 2.0);
    CHECK_THROWS_WITH_AS(fc_forward(x, w, b, fc(3, 2)), doctest::Contains("fcX"), ConfigError);
  }

  TEST_CASE("softmax examples and properties") {
    const auto a = softmax(Tensor<double>({1, 2}, std::vector<double>{0, 0}));
    CHECK(a[0] == doctest::Approx(0.5));
    const auto b = softmax(Tensor<double>({1, 2}, std::vector<double>{1000, 1000}));
    CHECK(b[0] == doctest::Approx(0.5));
    CHECK(b[1] == doctest::Approx(0.5));
    const auto c = softmax(Tensor<double>({1, 2}, std::vector<double>{0, std::log(3.0)}));
    CHECK(c[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(c[1] == doctest::Approx(0.75).epsilon(1e-12));

    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      auto x = oracle::random_tensor({4, 3}, rng, 20.0);
      const auto p = softmax(x);
      for (std::size_t i = 0; i < x.numel(); ++i) x[i] += 17.0 * static_cast<double>(i / 3);
      const auto q = softmax(x);
      for (std::size_t r = 0; r < 4; ++r) {
        double sum = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
          CHECK(p[r * 3 + k] >= 0.0);
          CHECK(q[r * 3 + k] == doctest::Approx(p[r * 3 + k]).epsilon(1e-9));
          sum += p[r * 3 + k];
        }
        CHECK(std::abs(sum - 1.0) <= 1e-6);
      }
    }
  }

  TEST_CASE("roi pool examples") {
    const RoiPoolSpec spec{6, 6, 1.0};
    const std::vector<BBox> whole{{0, 0, 12, 12}};
    const auto c = roi_pool_forward(Tensor<double>({1, 1, 12, 12}, 3.5), std::span<const BBox>(whole), spec);
    for (double v : c.output.data()) CHECK(v == 3.5);

    std::mt19937_64 rng(5);
    const auto map = oracle::random_tensor({1, 1, 12, 12}, rng);
    const auto r = roi_pool_forward(map, std::span<const BBox>(whole), spec);
    for (std::size_t by = 0; by < 6; ++by) {
      for (std::size_t bx = 0; bx < 6; ++bx) {
        double m = -1e300;
        for (std::size_t y = 2 * by; y < 2 * by + 2; ++y) {
          for (std::size_t x = 2 * bx; x < 2 * bx + 2; ++x) m = std::max(m, map.at(0, 0, y, x));
        }
        CHECK(r.output.at(0, 0, by, bx) == m);
      }
    }

    const auto empty = roi_pool_forward(map, std::span<const BBox>(), spec);
    CHECK(empty.output.dim(0) == 0);
  }

  TEST_CASE("roi pool equals a per-bin brute-force max on random maps") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t h = 4 + rng() % 10, w = 4 + rng() % 10, c = 1 + rng() % 3;
      const std::size_t bh = 1 + rng() % 6, bw = 1 + rng() % 6;
      const auto map = oracle::random_tensor({1, c, h, w}, rng);
      const std::size_t x1 = rng() % w, y1 = rng() % h;
      const std::size_t rw = 1 + rng() % (w - x1), rh = 1 + rng() % (h - y1);
      const std::vector<BBox> rois{{double(x1), double(y1), double(rw), double(rh)}};
      const auto r = roi_pool_forward(map, std::span<const BBox>(rois), RoiPoolSpec{bh, bw, 1.0});
      // a cell i (relative) belongs to bin b when [i, i+1) meets [b*size/n, (b+1)*size/n)
      auto in_bin = [](std::size_t i, std::size_t b, std::size_t size, std::size_t n) {
        const double lo = double(b) * double(size) / double(n), hi = double(b + 1) * double(size) / double(n);
        return double(i) < hi && double(i + 1) > lo;
      };
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t py = 0; py < bh; ++py) {
          for (std::size_t px = 0; px < bw; ++px) {
            double m = -1e300;
            bool any = false;
            for (std::size_t y = 0; y < rh; ++y) {
              for (std::size_t x = 0; x < rw; ++x) {
                if (in_bin(y, py, rh, bh) && in_bin(x, px, rw, bw)) {
                  m = std::max(m, map.at(0, ch, y1 + y, x1 + x));
                  any = true;
                }
              }
            }
            CHECK(r.output.at(0, ch, py, px) == (any ? m : 0.0));
          }
        }
      }
    }
  }

  TEST_CASE("every differentiable op passes the finite-difference check") {
    const auto results = checks::run_gradient_checks(2024);
    std::map<std::string, int> shapes;
    for (const auto& r : results) {
      INFO(r.op << " " << r.shape << " rel " << r.rel_error);
      CHECK(r.rel_error < 1e-3);
      ++shapes[r.op];
    }
    for (const auto& [op, n] : shapes) {
      INFO(op);
      if (op.rfind("network", 0) != 0) CHECK(n >= 3);
    }
  }
}
