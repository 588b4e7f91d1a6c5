#include "mcdet/fusion.hpp"

#include <cstdlib>
#include <string>

#include "mcdet/error.hpp"

namespace mcdet {
namespace {

constexpr std::array<FusionMode, 6> kModes = {FusionMode::visible_only, FusionMode::mwir_only,
                                              FusionMode::motion_only,  FusionMode::visible_mwir,
                                              FusionMode::three_channel, FusionMode::decision_level};

const ImagePlane& require(const ImagePlane* plane, const char* modality, FusionMode mode) {
  if (plane == nullptr || plane->empty()) {
    throw InputError(std::string("fusion mode ") + std::string(to_string(mode)) + " requires the " + modality +
                     " plane");
  }
  return *plane;
}

}  // namespace

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::visible_only: return "visible_only";
    case FusionMode::mwir_only: return "mwir_only";
    case FusionMode::motion_only: return "motion_only";
    case FusionMode::visible_mwir: return "visible_mwir";
    case FusionMode::three_channel: return "three_channel";
    case FusionMode::decision_level: return "decision_level";
  }
  return "?";
}

std::string_view cli_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::visible_only: return "visible";
    case FusionMode::mwir_only: return "mwir";
    case FusionMode::motion_only: return "motion";
    case FusionMode::visible_mwir: return "visible-mwir";
    case FusionMode::three_channel: return "three-channel";
    case FusionMode::decision_level: return "decision";
  }
  return "?";
}

std::string_view display_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::visible_only: return "Visible";
    case FusionMode::mwir_only: return "MWIR";
    case FusionMode::motion_only: return "Motion";
    case FusionMode::visible_mwir: return "Visible-MWIR";
    case FusionMode::three_channel: return "3-Channels";
    case FusionMode::decision_level: return "Decision-level Fusion";
  }
  return "?";
}

FusionMode parse_fusion_mode(std::string_view text) {
  for (auto mode : kModes) {
    if (text == to_string(mode) || text == cli_name(mode)) return mode;
  }
  throw InputError("unknown fusion mode '" + std::string(text) +
                   "' (expected visible, mwir, motion, visible-mwir, three-channel or decision)");
}

std::span<const FusionMode> all_fusion_modes() { return kModes; }

bool is_pixel_mode(FusionMode mode) noexcept { return mode != FusionMode::decision_level; }

void FrameSequence::validate() const {
  if (frame_stride < 1) throw InputError("frame stride must be at least 1");
  for (const auto& f : frames) {
    if (!f.same_size(frames.front())) throw InputError("frames of a sequence must share dimensions");
  }
}

MotionImage compute_motion(const ImagePlane& current, const ImagePlane& previous, std::size_t from_frame,
                           std::size_t to_frame) {
  if (!current.same_size(previous) || current.empty()) {
    throw InputError("motion requires two non-empty frames of equal size (" + std::to_string(current.width) + "x" +
                     std::to_string(current.height) + " vs " + std::to_string(previous.width) + "x" +
                     std::to_string(previous.height) + ")");
  }
  MotionImage out{ImagePlane(current.width, current.height), from_frame, to_frame};
  for (std::size_t i = 0; i < current.values.size(); ++i) {
    out.base.values[i] = static_cast<std::uint8_t>(std::abs(int{current.values[i]} - int{previous.values[i]}));
  }
  return out;
}

FusedImage fuse(const ImagePlane* visible, const ImagePlane* mwir, const ImagePlane* motion, FusionMode mode,
                std::size_t source_frame_index) {
  FusedImage out;
  out.mode = mode;
  out.source_frame_index = source_frame_index;
  switch (mode) {
    case FusionMode::visible_only: {
      const auto& v = require(visible, "visible", mode);
      out.planes = {v, v, v};
      break;
    }
    case FusionMode::mwir_only: {
      const auto& m = require(mwir, "MWIR", mode);
      out.planes = {m, m, m};
      break;
    }
    case FusionMode::motion_only: {
      const auto& m = require(motion, "motion", mode);
      out.planes = {m, m, m};
      break;
    }
    case FusionMode::visible_mwir: {
      const auto& v = require(visible, "visible", mode);
      const auto& m = require(mwir, "MWIR", mode);
      out.planes = {v, v, m};
      break;
    }
    case FusionMode::three_channel: {
      const auto& v = require(visible, "visible", mode);
      const auto& m = require(mwir, "MWIR", mode);
      const auto& mo = require(motion, "motion", mode);
      out.planes = {v, mo, m};
      break;
    }
    case FusionMode::decision_level:
      throw InputError("decision_level fuses detector outputs; it has no pixel-level input");
  }
  for (const auto& p : out.planes) {
    if (!p.same_size(out.planes[0])) throw InputError("fusion inputs must share dimensions");
  }
  return out;
}

RgbImage to_rgb(const FusedImage& image) {
  RgbImage out(image.width(), image.height());
  for (std::size_t i = 0; i < image.planes[0].values.size(); ++i) {
    out.rgb[3 * i] = image.planes[2].values[i];
    out.rgb[3 * i + 1] = image.planes[1].values[i];
    out.rgb[3 * i + 2] = image.planes[0].values[i];
  }
  return out;
}

}  // namespace mcdet
