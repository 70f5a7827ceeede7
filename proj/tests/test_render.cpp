// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "iforge/errors.hpp"
#include "iforge/ops.hpp"
#include "iforge/random.hpp"
#include "iforge/render.hpp"

using namespace iforge;
using namespace iforge::render;

namespace {

// Fibonacci lattice on a sphere; spacing ~ sqrt(area / n).
PointCloud fibonacci_sphere(std::size_t n, double r, const Vec3& color = {0.8, 0.3, 0.2}) {
  PointCloud pc;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / n;
    const double rr = std::sqrt(1.0 - y * y);
    const double t = golden * i;
    pc.positions.push_back({r * rr * std::cos(t), r * y, r * rr * std::sin(t)});
    pc.colors.push_back(color);
  }
  pc.radius = splat_radius_for_spacing(std::sqrt(4.0 * std::numbers::pi * r * r / n));
  return pc;
}

double iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

std::vector<std::uint8_t> analytic_disk(const Camera& cam, double r) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(cam.width) * cam.height);
  const double cx = cam.width / 2.0, cy = cam.height / 2.0;
  const double rx = r * cam.pixels_per_unit_x(), ry = r * cam.pixels_per_unit_y();
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
      m[static_cast<std::size_t>(y) * cam.width + x] = dx * dx + dy * dy <= 1.0;
    }
  return m;
}

PointCloud single_point(const Vec3& p, const Vec3& c = {1, 1, 1}) {
  PointCloud pc;
  pc.positions = {p};
  pc.colors = {c};
  pc.radius = 0.05;
  return pc;
}

SplatFrame frame_for(int w, int h, double sigma) {
  SplatFrame f;
  f.width = w;
  f.height = h;
  f.sigma = sigma;
  f.cutoff = 3 * sigma;
  return f;
}

}  // namespace

TEST_CASE("config validation") {
  SplatConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.cutoff_px = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = SplatConfig{};
  cfg.sigma_px = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("empty cloud renders background") {
  const Camera cam = camera_for_azimuth(0, 16, 16);
  SplatConfig cfg;
  cfg.background = {0.2, 0.4, 0.6};
  const RenderedView v = render::render(PointCloud{}, cam, cfg);
  for (double a : v.image.alpha) CHECK(a == 0.0);
  for (std::size_t i = 0; i < v.image.pixel_count(); ++i) {
    CHECK(v.image.rgb[i * 3] == doctest::Approx(0.2));
    CHECK(v.image.rgb[i * 3 + 2] == doctest::Approx(0.6));
  }
}

TEST_CASE("single point alpha peaks at the center and falls off") {
  const Camera cam = camera_for_azimuth(0, 32, 32);
  SplatConfig cfg{2.0, 6.0, {0, 0, 0}};
  const RenderedView v = render::render(single_point({0, 0, 0}), cam, cfg);
  // splat center at pixel (16,16): the four surrounding pixels tie for the peak
  const double peak = v.image.alpha[v.image.index(15, 15)];
  CHECK(peak == doctest::Approx(std::exp(-0.5 * 0.5 / 4.0)));
  for (double a : v.image.alpha) CHECK(a <= peak + 1e-15);
  double prev = peak;
  CHECK(v.image.alpha[v.image.index(16, 15)] == peak);
  for (int x = 17; x < 32; ++x) {
    const double d = x + 0.5 - 16.0;
    const double a = v.image.alpha[v.image.index(x, 15)];
    if (std::hypot(d, 0.5) < cfg.cutoff_px) {
      CHECK(a < prev);
      CHECK(a == doctest::Approx(std::exp(-(d * d + 0.25) / 8.0)));
      prev = a;
    } else {
      CHECK(a == 0.0);
    }
  }
}

TEST_CASE("dense sphere matches the analytic disk") {
  const PointCloud pc = fibonacci_sphere(20000, 0.5);
  const Camera cam = camera_for_azimuth(0, 64, 64);
  const RenderedView v = render::render(pc, cam, splat_config_for(pc.radius, cam));
  CHECK(iou(silhouette(v.image), analytic_disk(cam, 0.5)) >= 0.95);

  const auto views = render_fixed_views(pc, 64, splat_config_for(pc.radius, cam));
  const auto m0 = silhouette(views[0].image), m1 = silhouette(views[1].image),
             m2 = silhouette(views[2].image);
  CHECK(iou(m0, m1) >= 0.98);
  CHECK(iou(m0, m2) >= 0.98);
  CHECK(iou(m1, m2) >= 0.98);
  CHECK(views[0].image.alpha == v.image.alpha);
  CHECK(views[0].image.rgb == v.image.rgb);
}

TEST_CASE("fixed views place an off-center point correctly") {
  SplatConfig cfg{1.0, 3.0, {0, 0, 0}};
  const auto views = render_fixed_views(single_point({1, 0, 0}), 64, cfg);
  auto argmax_x = [](const ImageRGBA& img) {
    return static_cast<int>(std::max_element(img.alpha.begin(), img.alpha.end()) - img.alpha.begin()) %
           img.width;
  };
  const int x0 = argmax_x(views[0].image), x90 = argmax_x(views[1].image);
  CHECK(x0 >= 56);
  CHECK(x90 >= 30);
  CHECK(x90 <= 33);
}

TEST_CASE("nearer splat dominates") {
  PointCloud pc;
  pc.positions = {{0, 0, -0.5}, {0, 0, 0.5}};  // second is nearer (larger view z)
  pc.colors = {{1, 0, 0}, {0, 0, 1}};
  const Camera cam = camera_for_azimuth(0, 16, 16);
  const RenderedView v = render::render(pc, cam, SplatConfig{});
  const Vec3 c = v.image.color(7, 7);
  CHECK(c[2] > c[0]);
}

TEST_CASE("opacity monotonicity") {
  Rng rng(9);
  PointCloud pc;
  for (int i = 0; i < 30; ++i) {
    pc.positions.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
    pc.colors.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  }
  const Camera cam = camera_for_azimuth(0.3, 24, 24);
  SplatConfig cfg{1.5, 4.5, {0, 0, 0}};
  SplatInputs in = splat_inputs(pc);
  for (auto& o : in.opacity.mutable_data()) o = 0.5;
  const RenderedView base = render::render(in, cam, cfg);
  for (int k = 0; k < 30; k += 7) {
    SplatInputs more = splat_inputs(pc);
    for (auto& o : more.opacity.mutable_data()) o = 0.5;
    more.opacity.mutable_data()[k] = 0.9;
    const RenderedView v = render::render(more, cam, cfg);
    for (std::size_t i = 0; i < v.image.alpha.size(); ++i) CHECK(v.image.alpha[i] >= base.image.alpha[i] - 1e-15);
  }
}

TEST_CASE("point order does not matter") {
  Rng rng(10);
  PointCloud pc;
  for (int i = 0; i < 200; ++i) {
    pc.positions.push_back({rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7)});
    pc.colors.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  }
  const Camera cam = camera_for_azimuth(0, 32, 32);
  SplatConfig cfg{1.2, 3.6, {0.1, 0.1, 0.1}};
  const RenderedView a = render::render(pc, cam, cfg);
  PointCloud rev = pc;
  std::reverse(rev.positions.begin(), rev.positions.end());
  std::reverse(rev.colors.begin(), rev.colors.end());
  const RenderedView b = render::render(rev, cam, cfg);
  for (std::size_t i = 0; i < a.image.alpha.size(); ++i) CHECK(std::abs(a.image.alpha[i] - b.image.alpha[i]) < 1e-12);
  for (std::size_t i = 0; i < a.image.rgb.size(); ++i) CHECK(std::abs(a.image.rgb[i] - b.image.rgb[i]) < 1e-12);
}

TEST_CASE("serial and parallel splatting agree exactly") {
  Rng rng(12);
  std::vector<SplatPoint> pts;
  for (int i = 0; i < 500; ++i)
    pts.push_back({rng.uniform(-4, 44), rng.uniform(-4, 36), std::round(rng.uniform(-3, 3)),
                   {rng.uniform(), rng.uniform(), rng.uniform()}, rng.uniform()});
  SplatFrame f = frame_for(40, 32, 1.3);
  f.background = {0.2, 0.1, 0.0};
  const SplatResult s = serial::splat_forward(f, pts);
  const SplatResult p = parallel::splat_forward(f, pts);
  CHECK(s.pixels == p.pixels);
  CHECK(s.offsets == p.offsets);
  REQUIRE(s.fragments.size() == p.fragments.size());
  for (std::size_t i = 0; i < s.fragments.size(); ++i) {
    CHECK(s.fragments[i].point == p.fragments[i].point);
    CHECK(s.fragments[i].falloff == p.fragments[i].falloff);
  }
}

TEST_CASE("render gradients match finite differences") {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    PointCloud pc;
    std::vector<double> opacity;
    for (int i = 0; i < 6; ++i) {
      pc.positions.push_back({rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)});
      pc.colors.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
      opacity.push_back(rng.uniform(0.3, 0.9));
    }
    const Camera cam = camera_for_azimuth(rng.uniform(0, 6), 16, 16);
    SplatConfig cfg{1.5, 4.5, {0.1, 0.2, 0.3}};
    ImageRGBA target(16, 16);
    for (auto& v : target.rgb) v = rng.uniform();
    for (auto& v : target.alpha) v = rng.uniform();
    const RenderGradCheck r = render_grad_check(pc, opacity, cam, cfg, target);
    CHECK(r.color < 1e-3);
    CHECK(r.position < 1e-2);
    CHECK(r.opacity < 1e-3);
  }
}

TEST_CASE("gradients vanish when the target is the render") {
  Rng rng(14);
  PointCloud pc;
  for (int i = 0; i < 5; ++i) {
    pc.positions.push_back({rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)});
    pc.colors.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  }
  const Camera cam = camera_for_azimuth(0, 16, 16);
  SplatConfig cfg{1.5, 4.5, {0, 0, 0}};
  SplatInputs in = splat_inputs(pc, true);
  const ad::Tensor target = render::render(pc, cam, cfg).pixels.detach();
  ad::backward(ad::mse(splat(in, cam, cfg), target));
  for (const auto* t : {&in.positions, &in.colors, &in.opacity})
    for (double g : t->grad()) CHECK(std::abs(g) < 1e-9);
}
