#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mcdet {

/// Single-channel 8-bit raster, row-major.
struct ImagePlane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> values;

  ImagePlane() = default;
  ImagePlane(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), values(w * h, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y) noexcept { return values[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const noexcept { return values[y * width + x]; }
  bool empty() const noexcept { return values.empty(); }
  bool same_size(const ImagePlane& other) const noexcept {
    return width == other.width && height == other.height;
  }

  friend bool operator==(const ImagePlane&, const ImagePlane&) = default;
};

/// Interleaved 8-bit RGB raster used for overlays and previews.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {}

  void set(std::size_t x, std::size_t y, std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
    auto* p = &rgb[(y * width + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
};

/// ITU-R BT.601 luma.
std::uint8_t luma601(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept;

/// Reads any PNG as a single plane; colour images are converted to luma.
/// Throws InputError with the path when the file cannot be decoded.
ImagePlane read_png_gray(const std::string& path);
void write_png_gray(const std::string& path, const ImagePlane& plane);
void write_png_rgb(const std::string& path, const RgbImage& image);

/// Draws a rectangle outline of the given thickness, clipped to the image.
void draw_rect(RgbImage& image, double x, double y, double w, double h, std::uint8_t r, std::uint8_t g,
               std::uint8_t b, int thickness = 1);

}  // namespace mcdet
