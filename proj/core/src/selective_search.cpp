#include <algorithm>
#include <cmath>
#include <string>

#include "mcdet/error.hpp"
#include "mcdet/proposals.hpp"

namespace mcdet {
namespace {

double intersection(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::min(a[i], b[i]);
  return s;
}

std::vector<std::pair<int, int>> adjacency_of(const LabelMap& labels) {
  std::set<std::pair<int, int>> pairs;
  const std::size_t w = labels.width, h = labels.height;
  auto add = [&](int a, int b) {
    if (a != b) pairs.emplace(std::min(a, b), std::max(a, b));
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const int l = labels.labels[y * w + x];
      if (x + 1 < w) add(l, labels.labels[y * w + x + 1]);
      if (y + 1 < h) add(l, labels.labels[(y + 1) * w + x]);
    }
  }
  return {pairs.begin(), pairs.end()};
}

}  // namespace

SimilarityTerms similarity_terms(const Segment& a, const Segment& b, std::size_t image_size,
                                 const SimilarityWeights& weights) {
  if (image_size == 0) throw InputError("similarity needs a non-empty image");
  const double im = static_cast<double>(image_size);
  const double sa = static_cast<double>(a.pixel_count), sb = static_cast<double>(b.pixel_count);
  SimilarityTerms t;
  t.color = intersection(a.color_histogram, b.color_histogram);
  t.texture = intersection(a.texture_histogram, b.texture_histogram);
  t.size = 1.0 - (sa + sb) / im;
  t.fill = 1.0 - (box_union(a.bounding_box, b.bounding_box).area() - sa - sb) / im;
  t.total = weights.color * t.color + weights.texture * t.texture + weights.size * t.size + weights.fill * t.fill;
  return t;
}

double similarity(const Segment& a, const Segment& b, std::size_t image_size, const SimilarityWeights& weights) {
  return similarity_terms(a, b, image_size, weights).total;
}

Segment merge_segments(const Segment& a, const Segment& b, int new_id) {
  Segment m;
  m.id = new_id;
  m.pixel_count = a.pixel_count + b.pixel_count;
  m.bounding_box = box_union(a.bounding_box, b.bounding_box);
  const double wa = static_cast<double>(a.pixel_count), wb = static_cast<double>(b.pixel_count);
  const double n = wa + wb;
  auto mix = [&](const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (wa * x[i] + wb * y[i]) / n;
    return out;
  };
  m.color_histogram = mix(a.color_histogram, b.color_histogram);
  m.texture_histogram = mix(a.texture_histogram, b.texture_histogram);
  return m;
}

RegionHierarchy::RegionHierarchy(std::vector<Segment> segments, const std::vector<std::pair<int, int>>& adjacency,
                                 std::size_t image_size, SimilarityWeights weights)
    : regions_(std::move(segments)), image_size_(image_size), weights_(weights) {
  for (std::size_t i = 0; i < regions_.size(); ++i) {
    if (regions_[i].id != static_cast<int>(i)) throw InternalError("segment ids must match their index");
  }
  active_.assign(regions_.size(), true);
  active_count_ = regions_.size();
  neighbours_.resize(regions_.size());
  for (const auto& [a, b] : adjacency) {
    if (a == b) continue;
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= regions_.size() ||
        static_cast<std::size_t>(b) >= regions_.size()) {
      throw InternalError("adjacency refers to an unknown segment");
    }
    add_pair(a, b);
  }
}

RegionHierarchy RegionHierarchy::from_labels(const FusedImage& image, const LabelMap& labels,
                                             SimilarityWeights weights) {
  return RegionHierarchy(describe_segments(image, labels), adjacency_of(labels), labels.width * labels.height,
                         weights);
}

void RegionHierarchy::add_pair(int a, int b) {
  const Key key{std::min(a, b), std::max(a, b)};
  if (scores_.count(key)) return;
  const double s = similarity(regions_[static_cast<std::size_t>(key.first)],
                              regions_[static_cast<std::size_t>(key.second)], image_size_, weights_);
  scores_.emplace(key, s);
  queue_.emplace(-s, key.first, key.second);
  neighbours_[static_cast<std::size_t>(a)].insert(b);
  neighbours_[static_cast<std::size_t>(b)].insert(a);
}

void RegionHierarchy::remove_pair(int a, int b) {
  const Key key{std::min(a, b), std::max(a, b)};
  const auto it = scores_.find(key);
  if (it == scores_.end()) return;
  queue_.erase({-it->second, key.first, key.second});
  scores_.erase(it);
  neighbours_[static_cast<std::size_t>(a)].erase(b);
  neighbours_[static_cast<std::size_t>(b)].erase(a);
}

void RegionHierarchy::merge_step() {
  if (done()) return;
  if (queue_.empty()) {
    throw InternalError(std::to_string(active_count_) + " regions remain but none are adjacent");
  }
  const auto [neg, a, b] = *queue_.begin();
  const int id = static_cast<int>(regions_.size());
  regions_.push_back(merge_segments(regions_[static_cast<std::size_t>(a)], regions_[static_cast<std::size_t>(b)], id));
  active_.push_back(true);
  neighbours_.emplace_back();
  log_.push_back({a, b, id, -neg});

  std::set<int> joined;
  for (int r : {a, b}) {
    const auto ns = neighbours_[static_cast<std::size_t>(r)];
    for (int n : ns) {
      remove_pair(r, n);
      if (n != a && n != b) joined.insert(n);
    }
    active_[static_cast<std::size_t>(r)] = false;
  }
  for (int n : joined) add_pair(id, n);
  --active_count_;
}

void RegionHierarchy::merge_all() {
  while (!done()) merge_step();
}

void SelectiveSearchConfig::validate() const {
  if (ks.empty()) throw ConfigError("selective search needs at least one k value");
  for (double k : ks) {
    if (!(k > 0.0)) throw ConfigError("selective search k values must be positive");
  }
  if (min_size < 1) throw ConfigError("selective search min_size must be at least 1");
  if (sigma < 0.0) throw ConfigError("selective search sigma must be non-negative");
}

ProposalSet selective_search(const FusedImage& image, const SelectiveSearchConfig& config) {
  if (image.width() == 0 || image.height() == 0) throw InputError("cannot search an empty image");
  config.validate();
  ProposalSet out;
  out.image_width = image.width();
  out.image_height = image.height();
  std::set<std::tuple<double, double, double, double>> seen;
  for (double k : config.ks) {
    auto hierarchy = RegionHierarchy::from_labels(image, felzenszwalb_labels(image, k, config.min_size, config.sigma),
                                                  config.weights);
    hierarchy.merge_all();
    for (const auto& r : hierarchy.regions()) {
      const auto& b = r.bounding_box;
      if (seen.emplace(b.x, b.y, b.w, b.h).second) out.boxes.push_back(b);
    }
  }
  return out;
}

}  // namespace mcdet
