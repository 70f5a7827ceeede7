// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "iforge/errors.hpp"
#include "iforge/image_io.hpp"
#include "iforge/synth.hpp"

using namespace iforge;
using namespace iforge::synth;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "iforge_test_synth" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

// Independent inside test written from the primitive definitions.
bool brute_inside(const Primitive& p, const Vec3& x) {
  const Vec3 d = x - p.center;
  switch (p.kind) {
    case PrimitiveKind::Sphere:
      return d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= p.radii[0] * p.radii[0];
    case PrimitiveKind::Ellipsoid: {
      const double c = std::cos(p.yaw), s = std::sin(p.yaw);
      const double lx = c * d[0] - s * d[2], lz = s * d[0] + c * d[2];
      return (lx / p.radii[0]) * (lx / p.radii[0]) + (d[1] / p.radii[1]) * (d[1] / p.radii[1]) +
                 (lz / p.radii[2]) * (lz / p.radii[2]) <=
             1.0;
    }
    case PrimitiveKind::Capsule: {
      // sample the segment densely and take the closest sample
      double best = 1e9;
      for (int i = 0; i <= 2000; ++i) {
        const double t = i / 2000.0;
        const Vec3 q = p.center + t * (p.end - p.center);
        best = std::min(best, norm(x - q));
      }
      return best <= p.radii[0] + 1e-3;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("analytic occupancy of a sphere") {
  const auto s = ProceduralShape::sphere(0.5, {1, 0, 0});
  CHECK(analytic_occupancy(s, {0, 0, 0}) == 1);
  CHECK(analytic_occupancy(s, {1, 0, 0}) == 0);
  CHECK(analytic_occupancy(s, {0.5, 0, 0}) == 1);
  CHECK(analytic_occupancy(s, {0, -0.5, 0}) == 1);
}

TEST_CASE("shape validation") {
  ProceduralShape empty;
  CHECK_THROWS_AS(empty.validate(), ContractError);
  CHECK_THROWS_AS(ProceduralShape::sphere(0.95, {1, 1, 1}), ContractError);
}

TEST_CASE("bird catalog") {
  const auto a = bird_catalog(20, 7);
  const auto b = bird_catalog(20, 7);
  REQUIRE(a.size() == 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK_NOTHROW(a[i].validate());
    CHECK(a[i].primitives.size() >= 2);
    CHECK(a[i].primitives.size() <= 5);
    REQUIRE(a[i].primitives.size() == b[i].primitives.size());
    for (std::size_t k = 0; k < a[i].primitives.size(); ++k) CHECK(a[i].primitives[k].center == b[i].primitives[k].center);
  }
  CHECK(bird_catalog(20, 8)[0].primitives[0].radii != a[0].primitives[0].radii);
}

TEST_CASE("query sampling") {
  const auto s = ProceduralShape::sphere(0.5, {1, 0, 0});
  CHECK_THROWS_AS(sample_queries(s, 0, 10, 0.05, 1), ContractError);
  CHECK_THROWS_AS(sample_queries(s, 10, 0, 0.05, 1), ContractError);
  const auto q1 = sample_queries(s, 100, 300, 0.05, 3);
  const auto q2 = sample_queries(s, 100, 300, 0.05, 3);
  REQUIRE(q1.size() == 400);
  for (std::size_t i = 0; i < q1.size(); ++i) {
    CHECK(q1[i].point == q2[i].point);
    CHECK(q1[i].label == q2[i].label);
  }
  for (std::size_t i = 0; i < 100; ++i)
    for (double c : q1[i].point) {
      CHECK(c >= -1.0);
      CHECK(c < 1.0);
    }

  const auto big = sample_queries(s, 1, 10000, 0.05, 4);
  std::size_t positive = 0;
  for (std::size_t i = 1; i < big.size(); ++i) positive += big[i].label;
  const double frac = positive / 10000.0;
  CHECK(frac > 0.3);
  CHECK(frac < 0.7);
}

TEST_CASE("query labels agree with a primitive-by-primitive test") {
  for (const auto& shape : bird_catalog(6, 11)) {
    for (const auto& q : sample_queries(shape, 300, 600, 0.05, 5)) {
      bool inside = false;
      for (const auto& p : shape.primitives) inside = inside || brute_inside(p, q.point);
      // capsule oracle carries a tiny tolerance; only flag clear disagreements
      if (static_cast<bool>(q.label) != inside) {
        double nearest = 1e9;
        for (const auto& p : shape.primitives) nearest = std::min(nearest, std::abs(p.implicit(q.point)));
        CHECK(nearest < 2e-3);
      }
    }
  }
}

TEST_CASE("ground truth sphere renders") {
  const auto s = ProceduralShape::sphere(0.5, {0.2, 0.6, 0.9});
  const GroundTruthViews gt = render_ground_truth(s, 64);
  const Camera cam = camera_for_azimuth(0, 64, 64);
  std::vector<std::uint8_t> disk(64 * 64);
  const double r = 0.5 * cam.pixels_per_unit_x();
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) disk[y * 64 + x] = std::hypot(x + 0.5 - 32, y + 0.5 - 32) <= r;
  CHECK(mask_iou(silhouette(gt.input), disk) >= 0.95);
  const auto m0 = silhouette(gt.views[0]), m1 = silhouette(gt.views[1]), m2 = silhouette(gt.views[2]);
  CHECK(mask_iou(m0, m1) >= 0.98);
  CHECK(mask_iou(m0, m2) >= 0.98);
  CHECK(mask_iou(m1, m2) >= 0.98);
  // black background: rgb is premultiplied by coverage
  const Vec3 center_color = gt.input.color(32, 32);
  const double coverage = gt.input.alpha[gt.input.index(32, 32)];
  CHECK(coverage > 0.5);
  CHECK(center_color[2] / coverage == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("two-lobe bird differs between side and front views") {
  ProceduralShape bird;
  bird.name = "two_lobe";
  Primitive body;
  body.radii = {0.4, 0.4, 0.4};
  body.color = {0.5, 0.4, 0.3};
  Primitive head;
  head.center = {0.5, 0.3, 0};
  head.radii = {0.2, 0.2, 0.2};
  head.color = {0.2, 0.2, 0.2};
  bird.primitives = {body, head};
  const GroundTruthViews gt = render_ground_truth(bird, 64);
  CHECK(mask_iou(silhouette(gt.views[0]), silhouette(gt.views[1])) < 0.9);
}

TEST_CASE("primitive center lands where project puts it") {
  ProceduralShape s = ProceduralShape::sphere(0.1, {1, 1, 1});
  s.primitives[0].center = {0.4, -0.3, 0.2};
  const GroundTruthViews gt = render_ground_truth(s, 64);
  const Camera cam = camera_for_azimuth(0, 64, 64);
  const Projection pr = project(cam, s.primitives[0].center);
  double sx = 0, sy = 0, sw = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double a = gt.input.alpha[gt.input.index(x, y)];
      sx += a * (x + 0.5);
      sy += a * (y + 0.5);
      sw += a;
    }
  CHECK(std::abs(sx / sw - pr.x) < 1.0);
  CHECK(std::abs(sy / sw - pr.y) < 1.0);
}

TEST_CASE("real sample ingestion") {
  const auto dir = temp_dir("real");
  ImageRGBA img(8, 8);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = (i % 7) / 7.0;
  for (auto& a : img.alpha) a = 1.0;
  save_image(img, dir / "a.png");
  const ImageRGBA stored = load_image(dir / "a.png");

  ImageRGBA ones(8, 8), zeros(8, 8);
  for (auto& v : ones.rgb) v = 1.0;
  for (auto& v : ones.alpha) v = 1.0;
  for (auto& v : zeros.alpha) v = 1.0;
  save_image(ones, dir / "ones.png");
  save_image(zeros, dir / "zeros.png");

  const TrainingSample all = load_real_sample(dir / "a.png", dir / "ones.png");
  CHECK(all.input.rgb == stored.rgb);
  for (double a : all.input.alpha) CHECK(a == 1.0);
  const TrainingSample none = load_real_sample(dir / "a.png", dir / "zeros.png");
  for (double v : none.input.rgb) CHECK(v == 0.0);
  for (double a : none.input.alpha) CHECK(a == 0.0);

  save_image(ImageRGBA(12, 8), dir / "wide.png");
  CHECK_THROWS_AS(load_real_sample(dir / "a.png", dir / "wide.png"), IoError);
  CHECK_THROWS_AS(load_real_sample(dir / "missing.png", dir / "ones.png"), IoError);
}

TEST_CASE("query file round trip") {
  const auto dir = temp_dir("queries");
  const auto q = sample_queries(ProceduralShape::sphere(0.4, {1, 0, 0}), 20, 30, 0.05, 9);
  write_queries(q, dir / "q.bin");
  const auto back = read_queries(dir / "q.bin");
  REQUIRE(back.size() == q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    CHECK(back[i].point == q[i].point);
    CHECK(back[i].label == q[i].label);
  }
  CHECK(fs::file_size(dir / "q.bin") == 8 + q.size() * 25);
}

TEST_CASE("dataset regenerates bit-identically") {
  DatasetSpec spec;
  spec.catalog_size = 2;
  spec.image_size = 32;
  spec.n_uniform = 10;
  spec.n_surface = 30;
  spec.heldout = {1};
  const auto a = temp_dir("ds_a"), b = temp_dir("ds_b");
  write_dataset(spec, a);
  write_dataset(spec, b);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(e.path(), a);
    std::ifstream fa(e.path(), std::ios::binary), fb(b / rel, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    CHECK_MESSAGE(sa == sb, rel.string());
  }
  CHECK(files == 1 + 2 * 5 + 2);
  CHECK(fs::exists(a / "001" / "001_view90.png"));
  CHECK(fs::exists(a / "real" / "001_mask.png"));

  const Manifest m = read_manifest(a);
  CHECK(m.shapes.size() == 2);
  CHECK(m.spec.heldout == std::vector<std::size_t>{1});
  const auto regenerated = bird_catalog(2, spec.seed);
  CHECK(m.shapes[1].primitives[0].radii == regenerated[1].primitives[0].radii);

  const TrainingSample s = load_sample(a, 0);
  CHECK(s.views.size() == 3);
  CHECK(s.queries.size() == 40);
  const auto real = load_real_dir(a / "real");
  REQUIRE(real.size() == 1);
  CHECK(real[0].name == "001");
}
