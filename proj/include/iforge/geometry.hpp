// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
//
// Cameras, images, point clouds and meshes shared by the renderer, the field
// and the evaluation code.
//
// Conventions:
//  * World space is right-handed with +y up. Objects live in [-1, 1]^3.
//  * A camera at azimuth a looks at the origin; world -> view is a rotation
//    about +y by -a followed by a rotation about +x by the elevation.
//  * The camera sits on the +z side of view space looking down -z, so a
//    larger view z is nearer to the camera.
//  * Pixel (i, j) has its center at (i + 0.5, j + 0.5); image y points down.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace iforge {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a);
Vec3 mat_vec(const Mat3& m, const Vec3& v);

inline constexpr double kDefaultOrthoScale = 1.2;

struct Camera {
  double azimuth = 0.0;    // radians
  double elevation = 0.0;  // radians
  double ortho_scale = kDefaultOrthoScale;  // world units per half image
  int width = 64;
  int height = 64;

  void validate() const;
  Mat3 rotation() const;  // world -> view
  double pixels_per_unit_x() const { return width / (2.0 * ortho_scale); }
  double pixels_per_unit_y() const { return height / (2.0 * ortho_scale); }
};

Camera camera_for_azimuth(double azimuth, int width, int height,
                          double ortho_scale = kDefaultOrthoScale);

struct Projection {
  double x = 0.0;  // pixel units, continuous
  double y = 0.0;
  double depth = 0.0;  // view z
};

Projection project(const Camera& camera, const Vec3& point);

struct ImageRGBA {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;    // 3 * width * height, row-major
  std::vector<double> alpha;  // width * height

  ImageRGBA() = default;
  ImageRGBA(int w, int h);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  Vec3 color(int x, int y) const;
  void set_color(int x, int y, const Vec3& c);

  // Throws ContractError when a channel leaves [0, 1] or buffers mismatch.
  void validate() const;
};

// alpha > threshold
std::vector<std::uint8_t> silhouette(const ImageRGBA& image, double threshold = 0.5);

struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;
  double radius = 0.02;  // world-unit splat radius shared by all points

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  void validate() const;
};

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Vec3> colors;  // empty, or one per vertex

  bool empty() const { return triangles.empty(); }
  void validate() const;
};

}  // namespace iforge
