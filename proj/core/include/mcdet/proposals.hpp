#pragma once

#include <cstddef>
#include <set>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "mcdet/fusion.hpp"
#include "mcdet/geometry.hpp"

namespace mcdet {

inline constexpr std::size_t kColorBins = 25;
inline constexpr std::size_t kTextureBins = 10;
inline constexpr std::size_t kTextureOrientations = 8;

/// Pixel partition produced by graph-based segmentation.
struct LabelMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<int> labels;  ///< 0..count-1, row-major
  std::size_t count = 0;
};

/// Separable Gaussian smoothing with clamped borders; sigma <= 0 copies.
std::vector<float> smooth_plane(const ImagePlane& plane, double sigma);

/// Graph-based segmentation over an 8-connected pixel graph with Euclidean
/// colour distances. Components merge while the connecting edge is no
/// heavier than either component's internal difference plus k/|C|; a second
/// pass absorbs components smaller than min_size. Edges are processed in
/// stable weight order, so results are deterministic.
LabelMap felzenszwalb_labels(const FusedImage& image, double k, std::size_t min_size, double sigma);

struct Segment {
  int id = 0;
  std::size_t pixel_count = 0;
  BBox bounding_box;
  std::vector<double> color_histogram;    ///< 3 x 25 bins, L1-normalised
  std::vector<double> texture_histogram;  ///< 3 x 8 orientations x 10 bins, L1-normalised
};

/// Segments with their colour and texture descriptors.
std::vector<Segment> felzenszwalb_segment(const FusedImage& image, double k, std::size_t min_size, double sigma);

/// Builds descriptors for every label of a partition of `image`.
std::vector<Segment> describe_segments(const FusedImage& image, const LabelMap& labels);

struct SimilarityWeights {
  double color = 1.0;
  double texture = 1.0;
  double size = 1.0;
  double fill = 1.0;
};

struct SimilarityTerms {
  double color = 0.0;
  double texture = 0.0;
  double size = 0.0;
  double fill = 0.0;
  double total = 0.0;
};

/// Histogram intersection for colour and texture, 1 - (|a|+|b|)/|image| for
/// size, and 1 - (|BB(a u b)| - |a| - |b|)/|image| for fill.
SimilarityTerms similarity_terms(const Segment& a, const Segment& b, std::size_t image_size,
                                 const SimilarityWeights& weights = {});
double similarity(const Segment& a, const Segment& b, std::size_t image_size, const SimilarityWeights& weights = {});

/// Merges `b` into a new region with pixel-count-weighted histograms.
Segment merge_segments(const Segment& a, const Segment& b, int new_id);

/// Greedy hierarchical grouping of adjacent regions.
class RegionHierarchy {
 public:
  struct MergeRecord {
    int a = 0;
    int b = 0;
    int merged = 0;
    double similarity = 0.0;
  };

  /// `adjacency` lists unordered pairs of segment ids that share a border.
  /// Segment ids must equal their index in `segments`.
  RegionHierarchy(std::vector<Segment> segments, const std::vector<std::pair<int, int>>& adjacency,
                  std::size_t image_size, SimilarityWeights weights = {});

  static RegionHierarchy from_labels(const FusedImage& image, const LabelMap& labels, SimilarityWeights weights = {});

  std::size_t active_count() const noexcept { return active_count_; }
  bool done() const noexcept { return active_count_ <= 1; }

  /// Merges the most similar adjacent pair (ties: lower ids first).
  /// Throws InternalError when two or more regions remain but none are adjacent.
  void merge_step();
  void merge_all();

  /// Every region ever created: initial segments first, then merges.
  const std::vector<Segment>& regions() const noexcept { return regions_; }
  const std::vector<MergeRecord>& merge_log() const noexcept { return log_; }
  bool is_active(int id) const { return active_.at(static_cast<std::size_t>(id)); }

 private:
  using Key = std::pair<int, int>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return std::hash<long long>()((static_cast<long long>(k.first) << 32) ^ static_cast<unsigned>(k.second));
    }
  };

  void add_pair(int a, int b);
  void remove_pair(int a, int b);

  std::vector<Segment> regions_;
  std::vector<bool> active_;
  std::vector<std::set<int>> neighbours_;
  std::set<std::tuple<double, int, int>> queue_;  ///< (-similarity, lo, hi)
  std::unordered_map<Key, double, KeyHash> scores_;
  std::vector<MergeRecord> log_;
  std::size_t image_size_ = 0;
  std::size_t active_count_ = 0;
  SimilarityWeights weights_;
};

struct SelectiveSearchConfig {
  std::vector<double> ks{100.0};
  std::size_t min_size = 50;
  double sigma = 0.8;
  SimilarityWeights weights{};

  void validate() const;
};

struct ProposalSet {
  std::vector<BBox> boxes;
  std::size_t image_width = 0;
  std::size_t image_height = 0;
};

/// Boxes of every region at every level of the grouping hierarchy, for each
/// configured k, with exact duplicates removed (first occurrence kept).
ProposalSet selective_search(const FusedImage& image, const SelectiveSearchConfig& config = {});

}  // namespace mcdet
