// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include "iforge/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "iforge/errors.hpp"
#include "iforge/gradcheck.hpp"
#include "iforge/ops.hpp"

namespace iforge::render {

void SplatConfig::validate() const {
  IFORGE_REQUIRE(sigma_px > 0, "splat sigma must be positive");
  IFORGE_REQUIRE(cutoff_px >= 2.0 * sigma_px, "splat cutoff must be at least 2 sigma");
  for (double c : background) IFORGE_REQUIRE(c >= 0 && c <= 1, "background outside [0,1]");
}

SplatConfig splat_config_for(double cloud_radius, const Camera& camera, const Vec3& background) {
  IFORGE_REQUIRE(cloud_radius > 0, "cloud radius must be positive");
  SplatConfig cfg;
  cfg.sigma_px = cloud_radius * camera.pixels_per_unit_x();
  cfg.cutoff_px = 3.0 * cfg.sigma_px;
  cfg.background = background;
  return cfg;
}

std::vector<std::uint32_t> depth_order(std::span<const SplatPoint> points) {
  std::vector<std::uint32_t> order(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (points[a].depth != points[b].depth) return points[a].depth > points[b].depth;
    return a < b;
  });
  return order;
}

namespace {

// Composites one pixel's sorted fragments into out[0..3].
void composite(const SplatFrame& frame, std::span<const SplatPoint> points,
               std::span<const Fragment> frags, double* out) {
  double transmit = 1.0;
  double c[3] = {0.0, 0.0, 0.0};
  for (const Fragment& f : frags) {
    const SplatPoint& p = points[f.point];
    const double w = p.opacity * f.falloff;
    for (int k = 0; k < 3; ++k) c[k] += w * p.color[k] * transmit;
    transmit *= (1.0 - w);
  }
  for (int k = 0; k < 3; ++k) out[k] = c[k] + transmit * frame.background[k];
  out[3] = 1.0 - transmit;
}

inline double pixel_center(int i) { return i + 0.5; }

void check_frame(const SplatFrame& frame) {
  IFORGE_REQUIRE(frame.width > 0 && frame.height > 0, "splat frame must have positive extents");
  IFORGE_REQUIRE(frame.sigma > 0 && frame.cutoff > 0, "splat sigma and cutoff must be positive");
}

}  // namespace

namespace serial {

SplatResult splat_forward(const SplatFrame& frame, std::span<const SplatPoint> points) {
  check_frame(frame);
  const auto order = depth_order(points);
  const double cut2 = frame.cutoff * frame.cutoff;
  const double inv2s2 = 1.0 / (2.0 * frame.sigma * frame.sigma);
  const std::size_t npix = static_cast<std::size_t>(frame.width) * frame.height;
  SplatResult r;
  r.pixels.assign(npix * 4, 0.0);
  r.offsets.assign(npix + 1, 0);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * frame.width + x;
      r.offsets[pix] = r.fragments.size();
      for (std::uint32_t idx : order) {
        const double dx = pixel_center(x) - points[idx].x;
        const double dy = pixel_center(y) - points[idx].y;
        const double d2 = dx * dx + dy * dy;
        if (d2 <= cut2) r.fragments.push_back({idx, std::exp(-d2 * inv2s2)});
      }
      composite(frame, points,
                std::span<const Fragment>(r.fragments).subspan(r.offsets[pix]),
                r.pixels.data() + pix * 4);
    }
  }
  r.offsets[npix] = r.fragments.size();
  return r;
}

}  // namespace serial

namespace parallel {

SplatResult splat_forward(const SplatFrame& frame, std::span<const SplatPoint> points) {
  check_frame(frame);
  const auto order = depth_order(points);
  const double cut = frame.cutoff;
  const double cut2 = cut * cut;
  const double inv2s2 = 1.0 / (2.0 * frame.sigma * frame.sigma);
  const double cell = cut;
  const int ncx = static_cast<int>(std::ceil((frame.width + 2.0 * cut) / cell)) + 1;
  const int ncy = static_cast<int>(std::ceil((frame.height + 2.0 * cut) / cell)) + 1;
  auto cell_of = [&](double v) { return static_cast<int>(std::floor((v + cut) / cell)); };

  // Counting sort of points into cells, in depth rank order.
  std::vector<int> point_cell(points.size(), -1);
  std::vector<std::size_t> cell_start(static_cast<std::size_t>(ncx) * ncy + 1, 0);
  for (std::uint32_t rank = 0; rank < order.size(); ++rank) {
    const SplatPoint& p = points[order[rank]];
    if (!(p.x >= -cut && p.x < frame.width + cut && p.y >= -cut && p.y < frame.height + cut))
      continue;
    const int cx = cell_of(p.x), cy = cell_of(p.y);
    if (cx < 0 || cy < 0 || cx >= ncx || cy >= ncy) continue;
    point_cell[rank] = cy * ncx + cx;
    ++cell_start[static_cast<std::size_t>(point_cell[rank]) + 1];
  }
  for (std::size_t i = 1; i < cell_start.size(); ++i) cell_start[i] += cell_start[i - 1];
  std::vector<std::uint32_t> cell_ranks(cell_start.back());
  {
    std::vector<std::size_t> fill(cell_start.begin(), cell_start.end() - 1);
    for (std::uint32_t rank = 0; rank < order.size(); ++rank)
      if (point_cell[rank] >= 0) cell_ranks[fill[static_cast<std::size_t>(point_cell[rank])]++] = rank;
  }

  const std::size_t npix = static_cast<std::size_t>(frame.width) * frame.height;
  SplatResult r;
  r.pixels.assign(npix * 4, 0.0);
  std::vector<std::vector<Fragment>> row_frags(frame.height);
  std::vector<std::size_t> counts(npix, 0);

#pragma omp parallel
  {
    std::vector<std::uint32_t> ranks;
    std::vector<double> falloffs;
#pragma omp for schedule(dynamic, 1)
    for (int y = 0; y < frame.height; ++y) {
      auto& frags = row_frags[y];
      const double py = pixel_center(y);
      const int cy = cell_of(py);
      for (int x = 0; x < frame.width; ++x) {
        const double px = pixel_center(x);
        const int cx = cell_of(px);
        ranks.clear();
        for (int gy = std::max(cy - 1, 0); gy <= std::min(cy + 1, ncy - 1); ++gy) {
          for (int gx = std::max(cx - 1, 0); gx <= std::min(cx + 1, ncx - 1); ++gx) {
            const std::size_t c = static_cast<std::size_t>(gy) * ncx + gx;
            for (std::size_t k = cell_start[c]; k < cell_start[c + 1]; ++k) {
              const SplatPoint& p = points[order[cell_ranks[k]]];
              const double dx = px - p.x, dy = py - p.y;
              if (dx * dx + dy * dy <= cut2) ranks.push_back(cell_ranks[k]);
            }
          }
        }
        std::sort(ranks.begin(), ranks.end());
        const std::size_t begin = frags.size();
        for (std::uint32_t rank : ranks) {
          const std::uint32_t idx = order[rank];
          const double dx = px - points[idx].x, dy = py - points[idx].y;
          frags.push_back({idx, std::exp(-(dx * dx + dy * dy) * inv2s2)});
        }
        const std::size_t pix = static_cast<std::size_t>(y) * frame.width + x;
        counts[pix] = frags.size() - begin;
        composite(frame, points, std::span<const Fragment>(frags).subspan(begin, counts[pix]),
                  r.pixels.data() + pix * 4);
      }
    }
  }

  r.offsets.assign(npix + 1, 0);
  for (std::size_t i = 0; i < npix; ++i) r.offsets[i + 1] = r.offsets[i] + counts[i];
  r.fragments.reserve(r.offsets[npix]);
  for (auto& frags : row_frags) r.fragments.insert(r.fragments.end(), frags.begin(), frags.end());
  return r;
}

}  // namespace parallel

SplatGrads splat_backward(const SplatFrame& frame, std::span<const SplatPoint> points,
                          const SplatResult& fwd, std::span<const double> d_pixels) {
  const std::size_t npix = static_cast<std::size_t>(frame.width) * frame.height;
  IFORGE_REQUIRE(d_pixels.size() == npix * 4, "splat_backward: gradient size mismatch");
  const std::size_t nfrag = fwd.fragments.size();
  // Per-fragment partials: d/dcolor (3) and d/dw.
  std::vector<double> frag_dcolor(nfrag * 3, 0.0), frag_dw(nfrag, 0.0);

#pragma omp parallel
  {
    std::vector<double> transmit;
#pragma omp for schedule(dynamic, 16)
    for (std::int64_t pp = 0; pp < static_cast<std::int64_t>(npix); ++pp) {
      const auto pix = static_cast<std::size_t>(pp);
      const double* g = d_pixels.data() + pix * 4;
      if (g[0] == 0.0 && g[1] == 0.0 && g[2] == 0.0 && g[3] == 0.0) continue;
      const std::size_t begin = fwd.offsets[pix], end = fwd.offsets[pix + 1];
      const std::size_t k = end - begin;
      if (k == 0) continue;
      transmit.resize(k);
      double t = 1.0;
      for (std::size_t i = 0; i < k; ++i) {
        const Fragment& f = fwd.fragments[begin + i];
        transmit[i] = t;
        t *= 1.0 - points[f.point].opacity * f.falloff;
      }
      // Back-to-front: `behind` is what lies behind fragment i, per channel.
      double behind[4] = {frame.background[0], frame.background[1], frame.background[2], 0.0};
      for (std::size_t ii = k; ii-- > 0;) {
        const Fragment& f = fwd.fragments[begin + ii];
        const SplatPoint& p = points[f.point];
        const double w = p.opacity * f.falloff;
        const double ti = transmit[ii];
        double dw = 0.0;
        for (int c = 0; c < 3; ++c) {
          frag_dcolor[(begin + ii) * 3 + c] = g[c] * w * ti;
          dw += g[c] * ti * (p.color[c] - behind[c]);
        }
        dw += g[3] * ti * (1.0 - behind[3]);
        frag_dw[begin + ii] = dw;
        for (int c = 0; c < 3; ++c) behind[c] = w * p.color[c] + (1.0 - w) * behind[c];
        behind[3] = w + (1.0 - w) * behind[3];
      }
    }
  }

  SplatGrads grads;
  grads.color.assign(points.size(), Vec3{0, 0, 0});
  grads.opacity.assign(points.size(), 0.0);
  grads.x.assign(points.size(), 0.0);
  grads.y.assign(points.size(), 0.0);
  const double inv_s2 = 1.0 / (frame.sigma * frame.sigma);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * frame.width + x;
      for (std::size_t fi = fwd.offsets[pix]; fi < fwd.offsets[pix + 1]; ++fi) {
        const Fragment& f = fwd.fragments[fi];
        const SplatPoint& p = points[f.point];
        for (int c = 0; c < 3; ++c) grads.color[f.point][c] += frag_dcolor[fi * 3 + c];
        const double dw = frag_dw[fi];
        grads.opacity[f.point] += dw * f.falloff;
        // w = o * exp(-d^2/(2 s^2)); dw/dcx = w * (px - cx) / s^2
        const double dg = dw * p.opacity * f.falloff * inv_s2;
        grads.x[f.point] += dg * (pixel_center(x) - p.x);
        grads.y[f.point] += dg * (pixel_center(y) - p.y);
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------

SplatInputs splat_inputs(const PointCloud& cloud, bool requires_grad) {
  cloud.validate();
  SplatInputs in;
  const std::size_t n = cloud.size();
  if (n == 0) return in;
  std::vector<double> pos(n * 3), col(n * 3);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) {
      pos[i * 3 + k] = cloud.positions[i][k];
      col[i * 3 + k] = cloud.colors[i][k];
    }
  in.positions = ad::Tensor::from_data({n, 3}, std::move(pos), requires_grad);
  in.colors = ad::Tensor::from_data({n, 3}, std::move(col), requires_grad);
  in.opacity = ad::Tensor::full({n}, 1.0, requires_grad);
  return in;
}

ad::Tensor splat(const SplatInputs& inputs, const Camera& camera, const SplatConfig& cfg) {
  camera.validate();
  cfg.validate();
  SplatFrame frame{camera.width, camera.height, cfg.sigma_px, cfg.cutoff_px, cfg.background};
  const std::size_t h = static_cast<std::size_t>(camera.height);
  const std::size_t w = static_cast<std::size_t>(camera.width);
  const std::size_t n = inputs.size();
  if (n == 0) {
    std::vector<double> px(h * w * 4, 0.0);
    for (std::size_t i = 0; i < h * w; ++i)
      for (int c = 0; c < 3; ++c) px[i * 4 + c] = cfg.background[c];
    return ad::Tensor::from_data({h, w, 4}, std::move(px));
  }
  IFORGE_REQUIRE(inputs.positions.shape() == ad::Shape({n, 3}), "splat: positions must be [N,3]");
  IFORGE_REQUIRE(inputs.colors.shape() == ad::Shape({n, 3}), "splat: colors must be [N,3]");
  IFORGE_REQUIRE(inputs.opacity.numel() == n, "splat: opacity must have N entries");

  const Mat3 rot = camera.rotation();
  std::vector<SplatPoint> pts(n);
  const auto pos = inputs.positions.data();
  const auto col = inputs.colors.data();
  const auto opa = inputs.opacity.data();
  for (std::size_t i = 0; i < n; ++i) {
    const Projection pr = project(camera, {pos[i * 3], pos[i * 3 + 1], pos[i * 3 + 2]});
    pts[i].x = pr.x;
    pts[i].y = pr.y;
    pts[i].depth = pr.depth;
    pts[i].color = {col[i * 3], col[i * 3 + 1], col[i * 3 + 2]};
    pts[i].opacity = opa[i];
  }
  auto fwd = std::make_shared<SplatResult>(parallel::splat_forward(frame, pts));
  std::vector<double> pixels = fwd->pixels;
  const double ppu_x = camera.pixels_per_unit_x();
  const double ppu_y = camera.pixels_per_unit_y();

  return ad::Tensor::make_result(
      ad::OpKind::Custom, {h, w, 4}, std::move(pixels),
      {inputs.positions, inputs.colors, inputs.opacity},
      [frame, pts = std::move(pts), fwd, rot, ppu_x, ppu_y](ad::Node& self) {
        const SplatGrads g = splat_backward(frame, pts, *fwd, self.grad);
        ad::Node& pp = *self.parents[0];
        ad::Node& pc = *self.parents[1];
        ad::Node& po = *self.parents[2];
        const std::size_t n = pts.size();
        if (pp.requires_grad) {
          auto& gp = pp.grad_buffer();
          // x = (v0 / s + 1) W/2, y = (1 - v1 / s) H/2, v = R p
          for (std::size_t i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k)
              gp[i * 3 + k] += g.x[i] * ppu_x * rot[0][k] - g.y[i] * ppu_y * rot[1][k];
        }
        if (pc.requires_grad) {
          auto& gc = pc.grad_buffer();
          for (std::size_t i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k) gc[i * 3 + k] += g.color[i][k];
        }
        if (po.requires_grad) {
          auto& go = po.grad_buffer();
          for (std::size_t i = 0; i < n; ++i) go[i] += g.opacity[i];
        }
      });
}

ImageRGBA to_image(const ad::Tensor& pixels, int width, int height) {
  IFORGE_REQUIRE(pixels.numel() == static_cast<std::size_t>(width) * height * 4,
                 "to_image: pixel tensor size mismatch");
  ImageRGBA img(width, height);
  const auto v = pixels.data();
  auto unit = [](double x) { return std::min(std::max(x, 0.0), 1.0); };
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) img.rgb[i * 3 + c] = unit(v[i * 4 + c]);
    img.alpha[i] = unit(v[i * 4 + 3]);
  }
  return img;
}

ad::Tensor to_tensor(const ImageRGBA& image) {
  std::vector<double> px(image.pixel_count() * 4);
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) px[i * 4 + c] = image.rgb[i * 3 + c];
    px[i * 4 + 3] = image.alpha[i];
  }
  return ad::Tensor::from_data(
      {static_cast<std::size_t>(image.height), static_cast<std::size_t>(image.width), 4},
      std::move(px));
}

RenderedView render(const SplatInputs& inputs, const Camera& camera, const SplatConfig& cfg) {
  RenderedView view;
  view.camera = camera;
  view.pixels = splat(inputs, camera, cfg);
  view.image = to_image(view.pixels, camera.width, camera.height);
  return view;
}

RenderedView render(const PointCloud& cloud, const Camera& camera, const SplatConfig& cfg) {
  return render(splat_inputs(cloud), camera, cfg);
}

std::array<double, 3> fixed_view_azimuths() {
  return {0.0, std::numbers::pi / 2.0, std::numbers::pi};
}

std::array<RenderedView, 3> render_fixed_views(const SplatInputs& inputs, int image_size,
                                               const SplatConfig& cfg, double ortho_scale) {
  std::array<RenderedView, 3> views;
  const auto az = fixed_view_azimuths();
  for (int v = 0; v < 3; ++v)
    views[v] = render(inputs, camera_for_azimuth(az[v], image_size, image_size, ortho_scale), cfg);
  return views;
}

std::array<RenderedView, 3> render_fixed_views(const SplatInputs& inputs, double cloud_radius,
                                               int image_size, const Vec3& background,
                                               double ortho_scale) {
  const Camera cam = camera_for_azimuth(0.0, image_size, image_size, ortho_scale);
  return render_fixed_views(inputs, image_size, splat_config_for(cloud_radius, cam, background),
                            ortho_scale);
}

std::array<RenderedView, 3> render_fixed_views(const PointCloud& cloud, int image_size,
                                               const SplatConfig& cfg, double ortho_scale) {
  return render_fixed_views(splat_inputs(cloud), image_size, cfg, ortho_scale);
}

RenderGradCheck render_grad_check(const PointCloud& cloud, const std::vector<double>& opacity,
                                  const Camera& camera, const SplatConfig& cfg,
                                  const ImageRGBA& target, double h) {
  IFORGE_REQUIRE(!cloud.empty() && cloud.size() <= 10, "render_grad_check expects 1..10 points");
  IFORGE_REQUIRE(opacity.size() == cloud.size(), "render_grad_check: opacity length mismatch");
  SplatInputs in = splat_inputs(cloud, true);
  std::copy(opacity.begin(), opacity.end(), in.opacity.mutable_data().begin());
  const ad::Tensor tgt = to_tensor(target);
  auto loss = [&]() { return ad::mse(splat(in, camera, cfg), tgt); };
  RenderGradCheck r;
  r.color = ad::grad_check(loss, {in.colors}, h);
  r.position = ad::grad_check(loss, {in.positions}, h);
  r.opacity = ad::grad_check(loss, {in.opacity}, h);
  return r;
}

}  // namespace iforge::render
