#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "mcdet/error.hpp"
#include "mcdet/proposals.hpp"

namespace mcdet {
namespace {

struct Edge {
  float weight;
  std::uint32_t a;
  std::uint32_t b;
};

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), size_(n, 1), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), 0u);
  }

  std::uint32_t find(std::uint32_t x) {
    std::uint32_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
      const std::uint32_t next = parent_[x];
      parent_[x] = root;
      x = next;
    }
    return root;
  }

  std::uint32_t join(std::uint32_t a, std::uint32_t b) {
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    if (rank_[a] == rank_[b]) ++rank_[a];
    return a;
  }

  std::size_t size(std::uint32_t root) const { return size_[root]; }

 private:
  std::vector<std::uint32_t> parent_;
  std::vector<std::size_t> size_;
  std::vector<std::uint8_t> rank_;
};

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<float> k(static_cast<std::size_t>(radius) + 1);
  double sum = 0.0;
  for (int i = 0; i <= radius; ++i) {
    k[static_cast<std::size_t>(i)] = static_cast<float>(std::exp(-0.5 * (i / sigma) * (i / sigma)));
    sum += (i == 0 ? 1.0 : 2.0) * k[static_cast<std::size_t>(i)];
  }
  for (auto& v : k) v = static_cast<float>(v / sum);
  return k;
}

}  // namespace

std::vector<float> smooth_plane(const ImagePlane& plane, double sigma) {
  const std::size_t w = plane.width, h = plane.height;
  std::vector<float> src(plane.values.begin(), plane.values.end());
  if (sigma <= 0.0) return src;
  const auto k = gaussian_kernel(sigma);
  const long r = static_cast<long>(k.size()) - 1;
  std::vector<float> tmp(src.size()), out(src.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      float s = k[0] * src[y * w + x];
      for (long i = 1; i <= r; ++i) {
        const long xl = std::max(0L, static_cast<long>(x) - i);
        const long xr = std::min(static_cast<long>(w) - 1, static_cast<long>(x) + i);
        s += k[static_cast<std::size_t>(i)] * (src[y * w + static_cast<std::size_t>(xl)] + src[y * w + static_cast<std::size_t>(xr)]);
      }
      tmp[y * w + x] = s;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      float s = k[0] * tmp[y * w + x];
      for (long i = 1; i <= r; ++i) {
        const long yu = std::max(0L, static_cast<long>(y) - i);
        const long yd = std::min(static_cast<long>(h) - 1, static_cast<long>(y) + i);
        s += k[static_cast<std::size_t>(i)] * (tmp[static_cast<std::size_t>(yu) * w + x] + tmp[static_cast<std::size_t>(yd) * w + x]);
      }
      out[y * w + x] = s;
    }
  }
  return out;
}

LabelMap felzenszwalb_labels(const FusedImage& image, double k, std::size_t min_size, double sigma) {
  if (image.width() == 0 || image.height() == 0) throw InputError("cannot segment an empty image");
  if (!(k > 0.0)) throw InputError("segmentation k must be positive");
  if (min_size < 1) throw InputError("segmentation min_size must be at least 1");
  if (sigma < 0.0) throw InputError("segmentation sigma must be non-negative");

  const std::size_t w = image.width(), h = image.height(), n = w * h;
  std::array<std::vector<float>, 3> ch;
  for (std::size_t c = 0; c < 3; ++c) ch[c] = smooth_plane(image.planes[c], sigma);

  auto dist = [&](std::size_t a, std::size_t b) {
    float s = 0.f;
    for (const auto& p : ch) {
      const float d = p[a] - p[b];
      s += d * d;
    }
    return std::sqrt(s);
  };

  std::vector<Edge> edges;
  edges.reserve(n * 4);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto i = static_cast<std::uint32_t>(y * w + x);
      if (x + 1 < w) edges.push_back({dist(i, i + 1), i, i + 1});
      if (y + 1 < h) edges.push_back({dist(i, i + w), i, static_cast<std::uint32_t>(i + w)});
      if (x + 1 < w && y + 1 < h) edges.push_back({dist(i, i + w + 1), i, static_cast<std::uint32_t>(i + w + 1)});
      if (x + 1 < w && y > 0) edges.push_back({dist(i, i - w + 1), i, static_cast<std::uint32_t>(i - w + 1)});
    }
  }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.weight < b.weight; });

  DisjointSet sets(n);
  std::vector<double> threshold(n, k);
  for (const auto& e : edges) {
    std::uint32_t a = sets.find(e.a), b = sets.find(e.b);
    if (a == b) continue;
    if (e.weight <= threshold[a] && e.weight <= threshold[b]) {
      a = sets.join(a, b);
      threshold[a] = e.weight + k / static_cast<double>(sets.size(a));
    }
  }
  for (const auto& e : edges) {
    const std::uint32_t a = sets.find(e.a), b = sets.find(e.b);
    if (a != b && (sets.size(a) < min_size || sets.size(b) < min_size)) sets.join(a, b);
  }

  LabelMap out{w, h, std::vector<int>(n, -1), 0};
  std::vector<int> compact(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t root = sets.find(static_cast<std::uint32_t>(i));
    if (compact[root] < 0) compact[root] = static_cast<int>(out.count++);
    out.labels[i] = compact[root];
  }
  return out;
}

std::vector<Segment> felzenszwalb_segment(const FusedImage& image, double k, std::size_t min_size, double sigma) {
  return describe_segments(image, felzenszwalb_labels(image, k, min_size, sigma));
}

std::vector<Segment> describe_segments(const FusedImage& image, const LabelMap& labels) {
  const std::size_t w = image.width(), h = image.height();
  if (labels.width != w || labels.height != h) throw InternalError("label map does not match image size");
  std::vector<Segment> segs(labels.count);
  std::vector<std::array<std::size_t, 4>> extent(labels.count, {w, h, 0, 0});
  for (std::size_t i = 0; i < labels.count; ++i) {
    segs[i].id = static_cast<int>(i);
    segs[i].color_histogram.assign(3 * kColorBins, 0.0);
    segs[i].texture_histogram.assign(3 * kTextureOrientations * kTextureBins, 0.0);
  }

  // Oriented Gaussian-derivative responses (sigma 1), half-wave rectified,
  // binned against the per-channel maximum response.
  std::vector<std::vector<float>> responses;
  std::array<float, 3> max_resp{};
  for (std::size_t c = 0; c < 3; ++c) {
    const auto s = smooth_plane(image.planes[c], 1.0);
    std::vector<float> gx(w * h), gy(w * h);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t xl = x > 0 ? x - 1 : x, xr = x + 1 < w ? x + 1 : x;
        const std::size_t yu = y > 0 ? y - 1 : y, yd = y + 1 < h ? y + 1 : y;
        gx[y * w + x] = 0.5f * (s[y * w + xr] - s[y * w + xl]);
        gy[y * w + x] = 0.5f * (s[yd * w + x] - s[yu * w + x]);
      }
    }
    for (std::size_t o = 0; o < kTextureOrientations; ++o) {
      const double theta = static_cast<double>(o) * 2.0 * 3.14159265358979323846 / kTextureOrientations;
      const auto cs = static_cast<float>(std::cos(theta)), sn = static_cast<float>(std::sin(theta));
      std::vector<float> r(w * h);
      for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = std::max(0.f, cs * gx[i] + sn * gy[i]);
        max_resp[c] = std::max(max_resp[c], r[i]);
      }
      responses.push_back(std::move(r));
    }
  }

  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      auto& seg = segs[static_cast<std::size_t>(labels.labels[i])];
      auto& ext = extent[static_cast<std::size_t>(labels.labels[i])];
      ++seg.pixel_count;
      ext = {std::min(ext[0], x), std::min(ext[1], y), std::max(ext[2], x), std::max(ext[3], y)};
      for (std::size_t c = 0; c < 3; ++c) {
        seg.color_histogram[c * kColorBins + image.planes[c].values[i] * kColorBins / 256] += 1.0;
        for (std::size_t o = 0; o < kTextureOrientations; ++o) {
          const float r = responses[c * kTextureOrientations + o][i];
          std::size_t bin = 0;
          if (max_resp[c] > 0.f) {
            bin = std::min(kTextureBins - 1, static_cast<std::size_t>(r / max_resp[c] * kTextureBins));
          }
          seg.texture_histogram[(c * kTextureOrientations + o) * kTextureBins + bin] += 1.0;
        }
      }
    }
  }
  for (std::size_t i = 0; i < labels.count; ++i) {
    auto& seg = segs[i];
    const auto& ext = extent[i];
    seg.bounding_box = {static_cast<double>(ext[0]), static_cast<double>(ext[1]),
                        static_cast<double>(ext[2] - ext[0] + 1), static_cast<double>(ext[3] - ext[1] + 1)};
    const double cn = 3.0 * static_cast<double>(seg.pixel_count);
    const double tn = 3.0 * kTextureOrientations * static_cast<double>(seg.pixel_count);
    for (auto& v : seg.color_histogram) v /= cn;
    for (auto& v : seg.texture_histogram) v /= tn;
  }
  return segs;
}

}  // namespace mcdet
