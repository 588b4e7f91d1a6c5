#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "mcdet/image.hpp"

namespace mcdet {

enum class FusionMode { visible_only, mwir_only, motion_only, visible_mwir, three_channel, decision_level };

/// Canonical snake_case name, e.g. "three_channel".
std::string_view to_string(FusionMode mode);
/// Command-line spelling, e.g. "three-channel".
std::string_view cli_name(FusionMode mode);
/// Human-readable row label for comparison tables.
std::string_view display_name(FusionMode mode);
/// Accepts canonical and command-line spellings. Throws InputError otherwise.
FusionMode parse_fusion_mode(std::string_view text);

/// All six modes in table order.
std::span<const FusionMode> all_fusion_modes();

/// True for modes that build a network input from pixels.
bool is_pixel_mode(FusionMode mode) noexcept;

enum class Modality { visible, mwir };

struct FrameSequence {
  Modality modality = Modality::visible;
  std::vector<ImagePlane> frames;
  std::size_t frame_stride = 5;  ///< original-video frames between samples

  /// Throws InputError if frames differ in size or the stride is zero.
  void validate() const;
};

struct MotionImage {
  ImagePlane base;
  std::size_t from_frame = 0;
  std::size_t to_frame = 0;
};

/// Absolute frame difference |current - previous| per pixel.
MotionImage compute_motion(const ImagePlane& current, const ImagePlane& previous, std::size_t from_frame = 0,
                           std::size_t to_frame = 1);

/// Three-plane network input in B, G, R order.
struct FusedImage {
  std::array<ImagePlane, 3> planes;
  FusionMode mode = FusionMode::three_channel;
  std::size_t source_frame_index = 0;

  std::size_t width() const noexcept { return planes[0].width; }
  std::size_t height() const noexcept { return planes[0].height; }
};

/// Stacks modality planes into channels without altering any pixel value:
///   three_channel  B=visible, G=motion, R=mwir
///   visible_mwir   B=visible, G=visible, R=mwir
///   *_only         the single plane in all three channels
/// Null pointers mark absent modalities; a missing required plane is an
/// InputError naming the modality. decision_level is rejected because it
/// fuses detector outputs rather than pixels.
FusedImage fuse(const ImagePlane* visible, const ImagePlane* mwir, const ImagePlane* motion, FusionMode mode,
                std::size_t source_frame_index = 0);

/// RGB preview of a fused image (R plane first).
RgbImage to_rgb(const FusedImage& image);

}  // namespace mcdet
