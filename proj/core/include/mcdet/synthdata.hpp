#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcdet/dataset.hpp"
#include "mcdet/fusion.hpp"

namespace mcdet {

enum class BackgroundTexture { flat, noise, terrain_gradient };

std::string_view to_string(BackgroundTexture texture);
BackgroundTexture parse_background_texture(std::string_view text);

/// Parameters of one synthetic visible/MWIR sequence.
struct SceneSpec {
  std::size_t width = 320;
  std::size_t height = 240;
  BackgroundTexture background = BackgroundTexture::noise;
  std::size_t target_count = 1;
  std::size_t min_target_size = 24;  ///< target width range in pixels
  std::size_t max_target_size = 64;
  double visible_contrast = 0.35;  ///< fraction of 255 added to or removed from the visible background
  double thermal_contrast = 0.5;   ///< fraction of 255 added to the MWIR background
  double min_speed = 1.0;          ///< pixels per sampled frame
  double max_speed = 3.0;
  std::size_t frames = 40;
  double noise_sigma = 4.0;  ///< per-frame additive sensor noise, both modalities
  double edge_blur = 0.0;    ///< width of the soft target border in pixels; 0 gives hard edges
  std::uint64_t seed = 0;
  /// Forces the per-sequence target velocity (pixels per frame).
  std::optional<std::pair<double, double>> velocity;

  void validate() const;
};

struct SyntheticSequence {
  FrameSequence visible;
  FrameSequence mwir;
  std::vector<std::vector<GroundTruthBox>> gt;  ///< per frame; image ids use sequence "seq"
  SceneSpec spec;
  ImagePlane visible_background;  ///< noise-free background without targets
  ImagePlane mwir_background;
};

/// Deterministic per seed. Targets are textured rectangles translating at a
/// constant per-target velocity and stay fully inside the frame.
SyntheticSequence generate(const SceneSpec& spec);

/// Named generator profile: a scene template per sequence plus suite size.
struct SuiteProfile {
  std::string name;
  std::size_t sequences = 20;
  std::size_t frames = 40;
  double test_fraction = 0.2;
  std::vector<SceneSpec> variants;  ///< sequence i uses variants[i % size]
};

/// Built-in profiles: easy, camouflage, small-target, mixed.
SuiteProfile builtin_profile(std::string_view name);

/// key=value profile file (name, sequences, frames, test_fraction, and the
/// scene keys of one variant); unspecified keys keep builtin defaults.
SuiteProfile load_profile(const std::string& path);
void write_profile(const std::string& path, const SuiteProfile& profile);

struct SuiteSummary {
  std::string root;
  std::vector<ManifestEntry> manifest;
  std::size_t frames_written = 0;
};

/// Writes the dataset layout consumed by ingest_dataset plus manifest.txt
/// (the last test_fraction of sequences form the test split) and
/// profile.cfg. Sequence i draws its randomness from (seed, i).
SuiteSummary generate_suite(const SuiteProfile& profile, const std::string& out_dir, std::uint64_t seed);

}  // namespace mcdet
