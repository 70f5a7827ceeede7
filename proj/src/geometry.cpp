// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include "iforge/geometry.hpp"

#include <cmath>
#include <string>

#include "iforge/errors.hpp"

namespace iforge {

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 mat_vec(const Mat3& m, const Vec3& v) {
  return {dot(m[0], v), dot(m[1], v), dot(m[2], v)};
}

void Camera::validate() const {
  IFORGE_REQUIRE(ortho_scale > 0, "camera ortho_scale must be positive");
  IFORGE_REQUIRE(width >= 8 && height >= 8, "camera image must be at least 8x8");
}

Mat3 Camera::rotation() const {
  // yaw about +y by -azimuth
  const double a = -azimuth;
  const double ca = std::cos(a), sa = std::sin(a);
  const Mat3 yaw = {{{ca, 0, sa}, {0, 1, 0}, {-sa, 0, ca}}};
  if (elevation == 0.0) return yaw;
  const double ce = std::cos(elevation), se = std::sin(elevation);
  const Mat3 pitch = {{{1, 0, 0}, {0, ce, -se}, {0, se, ce}}};
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += pitch[i][k] * yaw[k][j];
  return r;
}

Camera camera_for_azimuth(double azimuth, int width, int height, double ortho_scale) {
  Camera c;
  c.azimuth = azimuth;
  c.elevation = 0.0;
  c.ortho_scale = ortho_scale;
  c.width = width;
  c.height = height;
  c.validate();
  return c;
}

Projection project(const Camera& camera, const Vec3& point) {
  const Vec3 v = mat_vec(camera.rotation(), point);
  return {(v[0] / camera.ortho_scale + 1.0) * 0.5 * camera.width,
          (1.0 - v[1] / camera.ortho_scale) * 0.5 * camera.height, v[2]};
}

ImageRGBA::ImageRGBA(int w, int h)
    : width(w),
      height(h),
      rgb(static_cast<std::size_t>(w) * h * 3, 0.0),
      alpha(static_cast<std::size_t>(w) * h, 0.0) {
  IFORGE_REQUIRE(w > 0 && h > 0, "image extents must be positive");
}

Vec3 ImageRGBA::color(int x, int y) const {
  const std::size_t i = index(x, y) * 3;
  return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

void ImageRGBA::set_color(int x, int y, const Vec3& c) {
  const std::size_t i = index(x, y) * 3;
  rgb[i] = c[0];
  rgb[i + 1] = c[1];
  rgb[i + 2] = c[2];
}

void ImageRGBA::validate() const {
  IFORGE_REQUIRE(width > 0 && height > 0, "image extents must be positive");
  IFORGE_REQUIRE(rgb.size() == pixel_count() * 3 && alpha.size() == pixel_count(),
                 "image buffers do not match extents");
  for (double v : rgb) IFORGE_REQUIRE(v >= 0.0 && v <= 1.0, "rgb channel outside [0,1]");
  for (double v : alpha) IFORGE_REQUIRE(v >= 0.0 && v <= 1.0, "alpha channel outside [0,1]");
}

std::vector<std::uint8_t> silhouette(const ImageRGBA& image, double threshold) {
  std::vector<std::uint8_t> mask(image.pixel_count());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = image.alpha[i] > threshold ? 1 : 0;
  return mask;
}

void PointCloud::validate() const {
  IFORGE_REQUIRE(positions.size() == colors.size(), "point cloud positions/colors length differ");
  IFORGE_REQUIRE(radius > 0, "point cloud radius must be positive");
}

void Mesh::validate() const {
  IFORGE_REQUIRE(colors.empty() || colors.size() == vertices.size(),
                 "mesh colors must be empty or one per vertex");
  for (const auto& t : triangles) {
    for (auto i : t)
      IFORGE_REQUIRE(i < vertices.size(), "mesh triangle index " + std::to_string(i) + " out of range");
    IFORGE_REQUIRE(t[0] != t[1] && t[1] != t[2] && t[0] != t[2], "degenerate mesh triangle");
  }
}

}  // namespace iforge
