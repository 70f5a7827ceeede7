// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable point splatting. Each point is a Gaussian footprint with
// weight w = opacity * exp(-d^2 / (2 sigma^2)) inside the cutoff radius.
// Per pixel the footprints are composited front to back:
//   C = sum_i w_i c_i prod_{j<i} (1 - w_j),   A = 1 - prod_i (1 - w_i)
// and the result is C + (1 - A) * background.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "iforge/geometry.hpp"
#include "iforge/tensor.hpp"

namespace iforge::render {

// Splat radius (world units) as a fraction of the typical point spacing.
// Keeps dense clouds hole-free while the 0.5 alpha contour stays within a
// fraction of a pixel of the true silhouette.
inline constexpr double kSplatRadiusPerSpacing = 0.35;

inline double splat_radius_for_spacing(double spacing) { return kSplatRadiusPerSpacing * spacing; }

struct SplatConfig {
  double sigma_px = 1.0;
  double cutoff_px = 3.0;
  Vec3 background{0.0, 0.0, 0.0};

  void validate() const;
};

/// Config whose Gaussian sigma is the cloud's world radius measured in pixels
/// of `camera`, with a 3-sigma cutoff.
SplatConfig splat_config_for(double cloud_radius, const Camera& camera,
                             const Vec3& background = {0.0, 0.0, 0.0});

// ---------------------------------------------------------------------------
// Raw kernels

struct SplatPoint {
  double x = 0.0;  // pixel coordinates of the splat center
  double y = 0.0;
  double depth = 0.0;  // larger is nearer
  Vec3 color{0.0, 0.0, 0.0};
  double opacity = 1.0;
};

struct SplatFrame {
  int width = 0;
  int height = 0;
  double sigma = 1.0;
  double cutoff = 3.0;
  Vec3 background{0.0, 0.0, 0.0};
};

struct Fragment {
  std::uint32_t point = 0;
  double falloff = 0.0;  // exp(-d^2 / (2 sigma^2))
};

struct SplatResult {
  std::vector<double> pixels;       // [H, W, 4] rgb + alpha
  std::vector<std::size_t> offsets;  // per-pixel start into fragments, size H*W + 1
  std::vector<Fragment> fragments;   // front-to-back per pixel
};

// Rank used for compositing: depth descending, then point index ascending.
std::vector<std::uint32_t> depth_order(std::span<const SplatPoint> points);

namespace serial {
// Brute force: every pixel tests every point.
SplatResult splat_forward(const SplatFrame& frame, std::span<const SplatPoint> points);
}  // namespace serial

namespace parallel {
// Screen-space binning with cells of size `cutoff`; rows split across threads.
SplatResult splat_forward(const SplatFrame& frame, std::span<const SplatPoint> points);
}  // namespace parallel

struct SplatGrads {
  std::vector<Vec3> color;
  std::vector<double> opacity;
  std::vector<double> x;  // d/d(splat center pixel x)
  std::vector<double> y;
};

// Per-pixel work runs in parallel; the reduction into points walks pixels in
// order, so the result does not depend on the thread schedule.
SplatGrads splat_backward(const SplatFrame& frame, std::span<const SplatPoint> points,
                          const SplatResult& forward, std::span<const double> d_pixels);

// ---------------------------------------------------------------------------
// Differentiable rendering

/// Graph-tracked cloud: positions [N,3], colors [N,3], opacity [N]. Any of the
/// tensors may or may not require grad. An empty cloud leaves all undefined.
struct SplatInputs {
  ad::Tensor positions;
  ad::Tensor colors;
  ad::Tensor opacity;

  std::size_t size() const { return positions.defined() ? positions.dim(0) : 0; }
};

/// Constant-valued inputs for a plain cloud; opacity 1 everywhere.
SplatInputs splat_inputs(const PointCloud& cloud, bool requires_grad = false);

/// [H, W, 4] tensor of rgb + alpha. Differentiable w.r.t. colors, opacities
/// and positions (through the Gaussian distance only).
ad::Tensor splat(const SplatInputs& inputs, const Camera& camera, const SplatConfig& cfg);

struct RenderedView {
  Camera camera;
  ImageRGBA image;
  ad::Tensor pixels;  // same content as image, [H, W, 4], graph-tracked
};

RenderedView render(const SplatInputs& inputs, const Camera& camera, const SplatConfig& cfg);
RenderedView render(const PointCloud& cloud, const Camera& camera, const SplatConfig& cfg);

// Azimuths of the three consistency views: 0, 90 and 180 degrees.
std::array<double, 3> fixed_view_azimuths();

/// Renders at the three fixed azimuths with elevation 0 and a shared ortho
/// scale. When `cfg` is empty the splat sigma follows `cloud_radius`.
std::array<RenderedView, 3> render_fixed_views(const SplatInputs& inputs, double cloud_radius,
                                               int image_size, const Vec3& background = {0, 0, 0},
                                               double ortho_scale = kDefaultOrthoScale);
std::array<RenderedView, 3> render_fixed_views(const SplatInputs& inputs, int image_size,
                                               const SplatConfig& cfg,
                                               double ortho_scale = kDefaultOrthoScale);
std::array<RenderedView, 3> render_fixed_views(const PointCloud& cloud, int image_size,
                                               const SplatConfig& cfg,
                                               double ortho_scale = kDefaultOrthoScale);

ImageRGBA to_image(const ad::Tensor& pixels, int width, int height);
ad::Tensor to_tensor(const ImageRGBA& image);  // [H, W, 4]

struct RenderGradCheck {
  double color = 0.0;
  double position = 0.0;
  double opacity = 0.0;
};

/// Central-difference check of d MSE(render, target) w.r.t. the cloud's
/// colors, positions and opacities (cloud of at most 10 points).
RenderGradCheck render_grad_check(const PointCloud& cloud, const std::vector<double>& opacity,
                                  const Camera& camera, const SplatConfig& cfg,
                                  const ImageRGBA& target, double h = 1e-5);

}  // namespace iforge::render
