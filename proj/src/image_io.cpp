// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include "iforge/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "iforge/errors.hpp"

namespace iforge {

namespace {

std::uint8_t quantize(double v) {
  const double c = std::min(std::max(v, 0.0), 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

ImageRGBA load_image(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path))
    throw IoError("cannot open image '" + path.string() + "': no such file");
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError("malformed PNG '" + path.string() + "': " + img.message);
  img.format = PNG_FORMAT_RGBA;
  std::vector<png_byte> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("malformed PNG '" + path.string() + "': " + img.message);
  }
  if (img.width == 0 || img.height == 0) throw IoError("empty PNG '" + path.string() + "'");

  ImageRGBA image(static_cast<int>(img.width), static_cast<int>(img.height));
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) image.rgb[i * 3 + c] = pixels[i * 4 + c] / 255.0;
    image.alpha[i] = pixels[i * 4 + 3] / 255.0;
  }
  return image;
}

void save_image(const ImageRGBA& image, const std::filesystem::path& path) {
  IFORGE_REQUIRE(image.width > 0 && image.height > 0, "cannot save an empty image");
  std::vector<png_byte> pixels(image.pixel_count() * 4);
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) pixels[i * 4 + c] = quantize(image.rgb[i * 3 + c]);
    pixels[i * 4 + 3] = quantize(image.alpha[i]);
  }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGBA;
  // Straight (non-premultiplied) alpha, stored as-is.
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.data(), 0, nullptr))
    throw IoError("cannot write image '" + path.string() + "': " + img.message);
}

}  // namespace iforge
