#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mcdet/fusion.hpp"
#include "mcdet/geometry.hpp"
#include "mcdet/image.hpp"

namespace mcdet {

struct GroundTruthBox {
  BBox box;
  int class_id = 1;
  std::string image_id;
};

enum class Split { train, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

/// One manifest line: `<sequence-dir> <train|test> [frame-stride]`.
struct ManifestEntry {
  std::string sequence;
  Split split = Split::train;
  std::size_t frame_stride = 5;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

/// A temporally aligned visible / MWIR / motion triple with its boxes.
struct Sample {
  std::string image_id;  ///< "<sequence>/<frame:06>"
  std::string sequence;
  std::size_t frame_index = 0;
  ImagePlane visible;
  ImagePlane mwir;
  ImagePlane motion;  ///< |visible[n] - visible[n-1]| over sampled frames
  std::vector<GroundTruthBox> gts;

  FusedImage input(FusionMode mode) const;
};

std::string make_image_id(const std::string& sequence, std::size_t frame_index);

/// Ground truth rows `frame_index,x,y,w,h,class`; an optional header is skipped.
std::vector<std::pair<std::size_t, GroundTruthBox>> read_gt_csv(const std::string& path, const std::string& sequence);

/// Loads `<root>/<sequence>/{visible,mwir}/NNNNNN.png` and `gt.csv` for every
/// manifest entry (optionally only one split). The first sampled frame of a
/// sequence has no predecessor for motion and is skipped, so an N-frame
/// sequence yields N-1 samples. Throws InputError on misaligned sequences or
/// unreadable images.
std::vector<Sample> ingest_dataset(const std::string& root, const std::vector<ManifestEntry>& manifest,
                                   std::optional<Split> split = std::nullopt);

/// Reads `<root>/manifest.txt`.
std::vector<Sample> ingest_dataset(const std::string& root, std::optional<Split> split = std::nullopt);

}  // namespace mcdet
