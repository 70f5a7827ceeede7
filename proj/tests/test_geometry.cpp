// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "iforge/errors.hpp"
#include "iforge/geometry.hpp"
#include "iforge/image_io.hpp"
#include "iforge/random.hpp"

using namespace iforge;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "iforge_test_geometry";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("camera rotation") {
  const Camera c0 = camera_for_azimuth(0.0, 64, 64, 1.0);
  const Mat3 r0 = c0.rotation();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(r0[i][j] == doctest::Approx(i == j ? 1.0 : 0.0));

  const Camera c90 = camera_for_azimuth(std::numbers::pi / 2, 64, 64, 1.0);
  const Vec3 v = mat_vec(c90.rotation(), {1, 0, 0});
  CHECK(std::abs(v[0]) < 1e-12);
  CHECK(std::abs(v[1]) < 1e-12);
  CHECK(std::abs(v[2] - 1.0) < 1e-12);

  const Vec3 w = mat_vec(camera_for_azimuth(std::numbers::pi, 64, 64).rotation(), {1, 0, 0});
  CHECK(std::abs(w[0] + 1.0) < 1e-12);
}

TEST_CASE("rotation is orthonormal and 2pi periodic") {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    Camera c = camera_for_azimuth(rng.uniform(-7, 7), 32, 32);
    c.elevation = rng.uniform(-1.5, 1.5);
    const Mat3 r = c.rotation();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += r[k][i] * r[k][j];
        CHECK(std::abs(s - (i == j ? 1.0 : 0.0)) < 1e-12);
      }
    Camera shifted = c;
    shifted.azimuth += 2 * std::numbers::pi;
    const Mat3 r2 = shifted.rotation();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(std::abs(r[i][j] - r2[i][j]) < 1e-12);
  }
}

TEST_CASE("projection examples") {
  const Camera c = camera_for_azimuth(0.0, 64, 64, 1.0);
  auto p = project(c, {0, 0, 0});
  CHECK(p.x == 32.0);
  CHECK(p.y == 32.0);
  CHECK(p.depth == 0.0);
  p = project(c, {1, 0, 0});
  CHECK(p.x == 64.0);
  CHECK(p.y == 32.0);
  p = project(camera_for_azimuth(std::numbers::pi / 2, 64, 64, 1.0), {1, 0, 0});
  CHECK(p.x == doctest::Approx(32.0));
  CHECK(p.y == doctest::Approx(32.0));
  CHECK(p.depth == doctest::Approx(1.0));
  // y points down in image space
  CHECK(project(c, {0, 0.5, 0}).y < 32.0);
}

TEST_CASE("projection is affine and depth is the third view component") {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    Camera c = camera_for_azimuth(rng.uniform(0, 6.3), 48, 32, rng.uniform(0.5, 2.0));
    c.elevation = rng.uniform(-1, 1);
    const Vec3 pt{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double a = rng.uniform(-2, 2);
    const auto p0 = project(c, {0, 0, 0});
    const auto p1 = project(c, pt);
    const auto pa = project(c, a * pt);
    CHECK(std::abs(pa.x - (p0.x + a * (p1.x - p0.x))) < 1e-9);
    CHECK(std::abs(pa.y - (p0.y + a * (p1.y - p0.y))) < 1e-9);
    CHECK(std::abs(p1.depth - mat_vec(c.rotation(), pt)[2]) < 1e-12);
  }
}

TEST_CASE("camera validation") {
  Camera c;
  c.width = 4;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = Camera{};
  c.ortho_scale = 0.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("png round trip") {
  Rng rng(4);
  ImageRGBA img(16, 16);
  for (auto& v : img.rgb) v = rng.uniform();
  for (auto& v : img.alpha) v = rng.uniform();
  const auto path = temp_path("roundtrip.png");
  save_image(img, path);
  const ImageRGBA back = load_image(path);
  REQUIRE(back.width == 16);
  REQUIRE(back.height == 16);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) CHECK(std::abs(img.rgb[i] - back.rgb[i]) <= 1.0 / 255 + 1e-12);
  for (std::size_t i = 0; i < img.alpha.size(); ++i)
    CHECK(std::abs(img.alpha[i] - back.alpha[i]) <= 1.0 / 255 + 1e-12);

  ImageRGBA mask(8, 8);
  for (std::size_t i = 0; i < mask.alpha.size(); ++i) mask.alpha[i] = (i % 3 == 0) ? 1.0 : 0.0;
  save_image(mask, temp_path("mask.png"));
  CHECK(load_image(temp_path("mask.png")).alpha == mask.alpha);
}

TEST_CASE("image io errors") {
  CHECK_THROWS_AS(load_image(temp_path("does_not_exist.png")), IoError);
  const auto junk = temp_path("junk.png");
  { std::ofstream(junk) << "not a png"; }
  CHECK_THROWS_AS(load_image(junk), IoError);
  CHECK_THROWS_AS(save_image(ImageRGBA(8, 8), "/nonexistent_dir/x.png"), IoError);
}

TEST_CASE("mesh and cloud validation") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.triangles = {{0, 1, 2}};
  CHECK_NOTHROW(m.validate());
  m.triangles = {{0, 1, 1}};
  CHECK_THROWS_AS(m.validate(), ContractError);
  m.triangles = {{0, 1, 3}};
  CHECK_THROWS_AS(m.validate(), ContractError);

  PointCloud pc;
  pc.positions = {{0, 0, 0}};
  CHECK_THROWS_AS(pc.validate(), ContractError);
  pc.colors = {{0, 0, 0}};
  CHECK_NOTHROW(pc.validate());
  pc.radius = 0.0;
  CHECK_THROWS_AS(pc.validate(), ContractError);
}
