#include "mcdet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "mcdet/error.hpp"

namespace mcdet {
namespace {

void ensure_parent(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

void write_png(const std::string& path, std::size_t width, std::size_t height, png_uint_32 format,
               const std::uint8_t* data) {
  ensure_parent(path);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr)) {
    const std::string why = image.message;
    png_image_free(&image);
    throw InputError("cannot write PNG '" + path + "': " + why);
  }
}

}  // namespace

std::uint8_t luma601(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

ImagePlane read_png_gray(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw InputError("cannot read PNG '" + path + "': " + image.message);
  }
  const bool colour = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string why = image.message;
    png_image_free(&image);
    throw InputError("cannot decode PNG '" + path + "': " + why);
  }
  ImagePlane plane(image.width, image.height);
  if (colour) {
    for (std::size_t i = 0; i < plane.values.size(); ++i) {
      plane.values[i] = luma601(buffer[3 * i], buffer[3 * i + 1], buffer[3 * i + 2]);
    }
  } else {
    plane.values = std::move(buffer);
  }
  return plane;
}

void write_png_gray(const std::string& path, const ImagePlane& plane) {
  if (plane.empty()) throw InputError("refusing to write empty image '" + path + "'");
  write_png(path, plane.width, plane.height, PNG_FORMAT_GRAY, plane.values.data());
}

void write_png_rgb(const std::string& path, const RgbImage& image) {
  if (image.rgb.empty()) throw InputError("refusing to write empty image '" + path + "'");
  write_png(path, image.width, image.height, PNG_FORMAT_RGB, image.rgb.data());
}

void draw_rect(RgbImage& image, double x, double y, double w, double h, std::uint8_t r, std::uint8_t g,
               std::uint8_t b, int thickness) {
  if (image.width == 0 || image.height == 0) return;
  const long x0 = std::lround(x), y0 = std::lround(y);
  const long x1 = std::lround(x + w) - 1, y1 = std::lround(y + h) - 1;
  const long max_x = static_cast<long>(image.width) - 1, max_y = static_cast<long>(image.height) - 1;
  auto plot = [&](long px, long py) {
    if (px >= 0 && py >= 0 && px <= max_x && py <= max_y) {
      image.set(static_cast<std::size_t>(px), static_cast<std::size_t>(py), r, g, b);
    }
  };
  for (int t = 0; t < thickness; ++t) {
    for (long px = x0; px <= x1; ++px) {
      plot(px, y0 + t);
      plot(px, y1 - t);
    }
    for (long py = y0; py <= y1; ++py) {
      plot(x0 + t, py);
      plot(x1 - t, py);
    }
  }
}

}  // namespace mcdet
