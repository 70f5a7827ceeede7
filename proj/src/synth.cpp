// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include "iforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "iforge/errors.hpp"
#include "iforge/image_io.hpp"
#include "iforge/random.hpp"

namespace iforge::synth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kBoxLimit = 0.9;

// Rotation about +y by angle t.
Vec3 rotate_y(const Vec3& p, double t) {
  const double c = std::cos(t), s = std::sin(t);
  return {c * p[0] + s * p[2], p[1], -s * p[0] + c * p[2]};
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return norm(p - (a + t * ab));
}

Vec3 unit(const Vec3& v) { return (1.0 / norm(v)) * v; }

// Two unit vectors orthogonal to u and to each other.
std::array<Vec3, 2> basis_around(const Vec3& u) {
  const Vec3 helper = std::abs(u[1]) < 0.9 ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
  const Vec3 e1 = unit(cross(u, helper));
  return {e1, cross(u, e1)};
}

std::vector<Vec3> fibonacci_directions(std::size_t n) {
  std::vector<Vec3> out(n);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double t = golden * static_cast<double>(i);
    out[i] = {r * std::cos(t), y, r * std::sin(t)};
  }
  return out;
}

std::size_t count_for(double area, double density) {
  return static_cast<std::size_t>(std::ceil(area * density));
}

bool strictly_inside_union(const ProceduralShape& shape, const Vec3& p) {
  for (const auto& prim : shape.primitives)
    if (prim.implicit(p) < -1e-9) return true;
  return false;
}

Vec3 random_direction(Rng& rng) {
  for (;;) {
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(v);
    if (n > 1e-12) return (1.0 / n) * v;
  }
}

Vec3 random_surface_point(const Primitive& prim, Rng& rng) {
  switch (prim.kind) {
    case PrimitiveKind::Sphere:
      return prim.center + prim.radii[0] * random_direction(rng);
    case PrimitiveKind::Ellipsoid: {
      const Vec3 d = random_direction(rng);
      const Vec3 local{d[0] * prim.radii[0], d[1] * prim.radii[1], d[2] * prim.radii[2]};
      return prim.center + rotate_y(local, prim.yaw);
    }
    case PrimitiveKind::Capsule: {
      const double r = prim.radii[0];
      const Vec3 axis = prim.end - prim.center;
      const double len = norm(axis);
      const double side = 2.0 * kPi * r * len;
      const double caps = 4.0 * kPi * r * r;
      if (len > 0.0 && rng.uniform() * (side + caps) < side) {
        const Vec3 u = (1.0 / len) * axis;
        const auto [e1, e2] = basis_around(u);
        const double t = rng.uniform() * len;
        const double a = rng.uniform() * 2.0 * kPi;
        return prim.center + t * u + r * (std::cos(a) * e1 + std::sin(a) * e2);
      }
      Vec3 d = random_direction(rng);
      // Half the caps' area lies on each end; pick the end on d's side.
      if (len > 0.0 && dot(d, axis) > 0.0) return prim.end + r * d;
      return prim.center + r * d;
    }
  }
  return prim.center;
}

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }
Vec3 json_vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json shape_json(const ProceduralShape& s) {
  json prims = json::array();
  for (const auto& p : s.primitives)
    prims.push_back({{"kind", kind_name(p.kind)},
                     {"center", vec_json(p.center)},
                     {"end", vec_json(p.end)},
                     {"radii", vec_json(p.radii)},
                     {"yaw", p.yaw},
                     {"color", vec_json(p.color)}});
  return {{"name", s.name}, {"primitives", prims}};
}

ProceduralShape json_shape(const json& j) {
  ProceduralShape s;
  s.name = j.at("name").get<std::string>();
  for (const auto& p : j.at("primitives")) {
    Primitive prim;
    prim.kind = kind_from_name(p.at("kind").get<std::string>());
    prim.center = json_vec(p.at("center"));
    prim.end = json_vec(p.at("end"));
    prim.radii = json_vec(p.at("radii"));
    prim.yaw = p.at("yaw").get<double>();
    prim.color = json_vec(p.at("color"));
    s.primitives.push_back(prim);
  }
  s.validate();
  return s;
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t id) {
  return seed ^ (0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(id) + 1));
}

}  // namespace

const char* kind_name(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::Sphere: return "sphere";
    case PrimitiveKind::Ellipsoid: return "ellipsoid";
    case PrimitiveKind::Capsule: return "capsule";
  }
  return "?";
}

PrimitiveKind kind_from_name(const std::string& name) {
  if (name == "sphere") return PrimitiveKind::Sphere;
  if (name == "ellipsoid") return PrimitiveKind::Ellipsoid;
  if (name == "capsule") return PrimitiveKind::Capsule;
  throw ContractError("unknown primitive kind '" + name + "'");
}

double Primitive::implicit(const Vec3& p) const {
  switch (kind) {
    case PrimitiveKind::Sphere:
      return norm(p - center) - radii[0];
    case PrimitiveKind::Ellipsoid: {
      const Vec3 q = rotate_y(p - center, -yaw);
      const double s = (q[0] / radii[0]) * (q[0] / radii[0]) + (q[1] / radii[1]) * (q[1] / radii[1]) +
                       (q[2] / radii[2]) * (q[2] / radii[2]);
      return std::sqrt(s) - 1.0;
    }
    case PrimitiveKind::Capsule:
      return segment_distance(p, center, end) - radii[0];
  }
  return 1.0;
}

std::array<Vec3, 2> Primitive::bounds() const {
  switch (kind) {
    case PrimitiveKind::Sphere: {
      const Vec3 r{radii[0], radii[0], radii[0]};
      return {center - r, center + r};
    }
    case PrimitiveKind::Ellipsoid: {
      const double m = std::max({radii[0], radii[1], radii[2]});
      // x/z extents rotate with yaw; y is unaffected
      const Vec3 r{m, radii[1], m};
      return {center - r, center + r};
    }
    case PrimitiveKind::Capsule: {
      const Vec3 r{radii[0], radii[0], radii[0]};
      Vec3 lo, hi;
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(center[a], end[a]) - r[a];
        hi[a] = std::max(center[a], end[a]) + r[a];
      }
      return {lo, hi};
    }
  }
  return {center, center};
}

double Primitive::surface_area() const {
  switch (kind) {
    case PrimitiveKind::Sphere:
      return 4.0 * kPi * radii[0] * radii[0];
    case PrimitiveKind::Ellipsoid: {
      constexpr double p = 1.6075;  // Knud Thomsen approximation
      const double a = std::pow(radii[0], p), b = std::pow(radii[1], p), c = std::pow(radii[2], p);
      return 4.0 * kPi * std::pow((a * b + a * c + b * c) / 3.0, 1.0 / p);
    }
    case PrimitiveKind::Capsule: {
      const double r = radii[0];
      return 4.0 * kPi * r * r + 2.0 * kPi * r * norm(end - center);
    }
  }
  return 0.0;
}

void ProceduralShape::validate() const {
  IFORGE_REQUIRE(!primitives.empty(), "shape '" + name + "' has no primitives");
  for (const auto& p : primitives) {
    for (int a = 0; a < 3; ++a) IFORGE_REQUIRE(p.radii[a] > 0.0, "shape '" + name + "' has a non-positive radius");
    const auto [lo, hi] = p.bounds();
    for (int a = 0; a < 3; ++a)
      IFORGE_REQUIRE(lo[a] >= -kBoxLimit && hi[a] <= kBoxLimit,
                     "shape '" + name + "' leaves the [-0.9, 0.9] box");
    for (double c : p.color) IFORGE_REQUIRE(c >= 0.0 && c <= 1.0, "shape '" + name + "' color out of range");
  }
}

ProceduralShape ProceduralShape::sphere(double radius, const Vec3& color, const std::string& name) {
  ProceduralShape s;
  s.name = name;
  Primitive p;
  p.kind = PrimitiveKind::Sphere;
  p.radii = {radius, radius, radius};
  p.color = color;
  s.primitives.push_back(p);
  s.validate();
  return s;
}

int analytic_occupancy(const ProceduralShape& shape, const Vec3& point) {
  for (const auto& prim : shape.primitives)
    if (prim.implicit(point) <= 0.0) return 1;
  return 0;
}

std::vector<ProceduralShape> bird_catalog(std::size_t count, std::uint64_t seed) {
  std::vector<ProceduralShape> out;
  for (std::size_t id = 0; id < count; ++id) {
    Rng rng(sample_seed(seed, id));
    auto color = [&] { return Vec3{rng.uniform(0.1, 0.95), rng.uniform(0.1, 0.95), rng.uniform(0.1, 0.95)}; };
    const Vec3 body_color = color();
    const Vec3 head_color = color();

    std::vector<Primitive> local;
    Primitive body;
    body.kind = PrimitiveKind::Ellipsoid;
    body.radii = {rng.uniform(0.36, 0.5), rng.uniform(0.22, 0.32), rng.uniform(0.2, 0.3)};
    body.yaw = 0.0;
    body.color = body_color;
    local.push_back(body);

    Primitive head;
    head.kind = PrimitiveKind::Sphere;
    const double hr = rng.uniform(0.14, 0.22);
    head.radii = {hr, hr, hr};
    head.center = {body.radii[0] * rng.uniform(0.75, 0.95), body.radii[1] * rng.uniform(0.6, 1.0), 0.0};
    head.color = head_color;
    local.push_back(head);

    // 0..3 optional parts: beak, tail, wings (a mirrored pair counts as one)
    const int extras = static_cast<int>(rng.index(4));
    if (extras >= 1) {
      Primitive beak;
      beak.kind = PrimitiveKind::Capsule;
      const double br = rng.uniform(0.035, 0.055);
      beak.radii = {br, br, br};
      beak.center = head.center + Vec3{hr * 0.7, -hr * 0.1, 0.0};
      beak.end = beak.center + Vec3{rng.uniform(0.1, 0.17), rng.uniform(-0.06, 0.02), 0.0};
      beak.color = {rng.uniform(0.85, 0.95), rng.uniform(0.45, 0.75), 0.1};
      local.push_back(beak);
    }
    if (extras >= 2) {
      Primitive tail;
      tail.kind = PrimitiveKind::Ellipsoid;
      tail.radii = {rng.uniform(0.16, 0.24), rng.uniform(0.05, 0.08), rng.uniform(0.1, 0.15)};
      tail.center = {-body.radii[0] * rng.uniform(0.9, 1.1), body.radii[1] * rng.uniform(0.1, 0.4), 0.0};
      tail.color = 0.6 * body_color;
      local.push_back(tail);
    }
    if (extras >= 3 && local.size() < 5) {
      Primitive wing;
      wing.kind = PrimitiveKind::Ellipsoid;
      wing.radii = {rng.uniform(0.24, 0.32), rng.uniform(0.05, 0.08), rng.uniform(0.1, 0.14)};
      wing.center = {-0.05, body.radii[1] * 0.4, body.radii[2] * 0.9};
      wing.yaw = rng.uniform(0.1, 0.3);
      wing.color = color();
      local.push_back(wing);
    }

    const double yaw = rng.uniform(-0.6, 0.6);
    double scale = rng.uniform(0.9, 1.15);
    ProceduralShape shape;
    shape.name = "bird_" + sample_stem(id);
    for (int attempt = 0; attempt < 50; ++attempt) {
      shape.primitives.clear();
      for (const auto& p : local) {
        Primitive q = p;
        q.center = scale * rotate_y(p.center, yaw);
        q.end = scale * rotate_y(p.end, yaw);
        q.radii = scale * p.radii;
        q.yaw = p.yaw + yaw;
        shape.primitives.push_back(q);
      }
      bool fits = true;
      for (const auto& p : shape.primitives) {
        const auto [lo, hi] = p.bounds();
        for (int a = 0; a < 3; ++a) fits = fits && lo[a] >= -kBoxLimit && hi[a] <= kBoxLimit;
      }
      if (fits) break;
      scale *= 0.95;
    }
    shape.validate();
    out.push_back(std::move(shape));
  }
  return out;
}

std::vector<Query> sample_queries(const ProceduralShape& shape, std::size_t n_uniform,
                                  std::size_t n_surface, double noise_sd, std::uint64_t seed) {
  IFORGE_REQUIRE(n_uniform > 0, "sample_queries needs n_uniform > 0");
  IFORGE_REQUIRE(n_surface > 0, "sample_queries needs n_surface > 0");
  IFORGE_REQUIRE(noise_sd >= 0.0, "noise_sd must be non-negative");
  shape.validate();
  Rng rng(seed);
  std::vector<Query> out;
  out.reserve(n_uniform + n_surface);
  for (std::size_t i = 0; i < n_uniform; ++i) {
    const Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    out.push_back({p, static_cast<std::uint8_t>(analytic_occupancy(shape, p))});
  }
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& prim : shape.primitives) cumulative.push_back(total += prim.surface_area());
  for (std::size_t i = 0; i < n_surface; ++i) {
    Vec3 p{0, 0, 0};
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double pick = rng.uniform() * total;
      const std::size_t k = static_cast<std::size_t>(
          std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
      p = random_surface_point(shape.primitives[std::min(k, cumulative.size() - 1)], rng);
      if (!strictly_inside_union(shape, p)) break;
    }
    p = p + Vec3{noise_sd * rng.normal(), noise_sd * rng.normal(), noise_sd * rng.normal()};
    out.push_back({p, static_cast<std::uint8_t>(analytic_occupancy(shape, p))});
  }
  return out;
}

PointCloud surface_cloud(const ProceduralShape& shape, double density) {
  IFORGE_REQUIRE(density > 0.0, "surface density must be positive");
  shape.validate();
  const double spacing = 1.0 / std::sqrt(density);
  PointCloud cloud;
  cloud.radius = kSurfaceRadiusPerSpacing * spacing;
  auto emit = [&](const Vec3& p, const Vec3& color) {
    if (strictly_inside_union(shape, p)) return;
    cloud.positions.push_back(p);
    cloud.colors.push_back(color);
  };
  for (const auto& prim : shape.primitives) {
    switch (prim.kind) {
      case PrimitiveKind::Sphere:
        for (const Vec3& d : fibonacci_directions(count_for(prim.surface_area(), density)))
          emit(prim.center + prim.radii[0] * d, prim.color);
        break;
      case PrimitiveKind::Ellipsoid: {
        // Size the lattice for the most stretched region so no patch is sparse.
        const auto& r = prim.radii;
        const double stretch = std::max({r[0] * r[1], r[0] * r[2], r[1] * r[2]});
        for (const Vec3& d : fibonacci_directions(count_for(4.0 * kPi * stretch, density)))
          emit(prim.center + rotate_y({d[0] * r[0], d[1] * r[1], d[2] * r[2]}, prim.yaw), prim.color);
        break;
      }
      case PrimitiveKind::Capsule: {
        const double r = prim.radii[0];
        const auto dirs = fibonacci_directions(count_for(4.0 * kPi * r * r, density));
        for (const Vec3& d : dirs) emit(prim.center + r * d, prim.color);
        for (const Vec3& d : dirs) emit(prim.end + r * d, prim.color);
        const Vec3 axis = prim.end - prim.center;
        const double len = norm(axis);
        if (len <= 0.0) break;
        const Vec3 u = (1.0 / len) * axis;
        const auto [e1, e2] = basis_around(u);
        const std::size_t rings = std::max<std::size_t>(1, count_for(len, 1.0 / spacing));
        const std::size_t around = std::max<std::size_t>(3, count_for(2.0 * kPi * r, 1.0 / spacing));
        for (std::size_t i = 0; i < rings; ++i) {
          const double t = (static_cast<double>(i) + 0.5) / static_cast<double>(rings) * len;
          for (std::size_t j = 0; j < around; ++j) {
            const double a = (static_cast<double>(j) + 0.5 * static_cast<double>(i % 2)) /
                             static_cast<double>(around) * 2.0 * kPi;
            // Points on the cylinder wall sit exactly at distance r.
            emit(prim.center + t * u + r * (std::cos(a) * e1 + std::sin(a) * e2), prim.color);
          }
        }
        break;
      }
    }
  }
  return cloud;
}

GroundTruthViews render_ground_truth(const ProceduralShape& shape, int image_size, double ortho_scale) {
  const PointCloud cloud = surface_cloud(shape);
  const Camera cam = camera_for_azimuth(0.0, image_size, image_size, ortho_scale);
  const auto views = render::render_fixed_views(cloud, image_size, render::splat_config_for(cloud.radius, cam),
                                                ortho_scale);
  GroundTruthViews out;
  for (int v = 0; v < 3; ++v) out.views[v] = views[v].image;
  out.input = out.views[0];
  return out;
}

TrainingSample load_real_sample(const fs::path& image_path, const fs::path& mask_path) {
  const ImageRGBA image = load_image(image_path);
  const ImageRGBA mask = load_image(mask_path);
  if (image.width != mask.width || image.height != mask.height)
    throw IoError("mask '" + mask_path.string() + "' is " + std::to_string(mask.width) + "x" +
                  std::to_string(mask.height) + " but image '" + image_path.string() + "' is " +
                  std::to_string(image.width) + "x" + std::to_string(image.height));
  TrainingSample s;
  s.name = image_path.stem().string();
  s.input = image;
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    const double m = (mask.rgb[i * 3] + mask.rgb[i * 3 + 1] + mask.rgb[i * 3 + 2]) / 3.0 * mask.alpha[i];
    const bool fg = m > 0.5;
    s.input.alpha[i] = fg ? 1.0 : 0.0;
    if (!fg)
      for (int c = 0; c < 3; ++c) s.input.rgb[i * 3 + c] = 0.0;
  }
  return s;
}

std::string sample_stem(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%03zu", id);
  return buf;
}

TrainingSample make_sample(const ProceduralShape& shape, std::size_t id, const DatasetSpec& spec) {
  const GroundTruthViews gt = render_ground_truth(shape, spec.image_size, spec.ortho_scale);
  TrainingSample s;
  s.name = shape.name;
  s.input = gt.input;
  s.views.assign(gt.views.begin(), gt.views.end());
  s.queries = sample_queries(shape, spec.n_uniform, spec.n_surface, spec.noise_sd, sample_seed(spec.seed, id));
  return s;
}

void write_queries(const std::vector<Query>& queries, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  auto put = [&](auto value) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &value, sizeof(value));
    for (std::size_t i = 0; i < sizeof(value); ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
  };
  put(static_cast<std::uint64_t>(queries.size()));
  for (const auto& q : queries) {
    for (double c : q.point) put(c);
    out.put(static_cast<char>(q.label));
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<Query> read_queries(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  auto get = [&](auto& value) {
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(value); ++i) {
      const int c = in.get();
      if (c == std::char_traits<char>::eof()) throw IoError("truncated query file '" + path.string() + "'");
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    std::memcpy(&value, &bits, sizeof(value));
  };
  std::uint64_t count = 0;
  get(count);
  if (count > (1ull << 28)) throw IoError("corrupt query file '" + path.string() + "'");
  std::vector<Query> out(count);
  for (auto& q : out) {
    for (double& c : q.point) get(c);
    get(q.label);
    if (q.label > 1) throw IoError("bad label in '" + path.string() + "'");
  }
  return out;
}

namespace {

json spec_json(const DatasetSpec& spec) {
  return {{"catalog_size", spec.catalog_size}, {"seed", spec.seed},         {"image_size", spec.image_size},
          {"ortho_scale", spec.ortho_scale},   {"n_uniform", spec.n_uniform}, {"n_surface", spec.n_surface},
          {"noise_sd", spec.noise_sd},         {"heldout", spec.heldout}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace

void write_dataset(const DatasetSpec& spec, const fs::path& dir) {
  IFORGE_REQUIRE(spec.catalog_size > 0, "catalog_size must be positive");
  IFORGE_REQUIRE(spec.image_size >= 8 && spec.image_size % 4 == 0, "image_size must be a multiple of 4, >= 8");
  for (std::size_t h : spec.heldout) IFORGE_REQUIRE(h < spec.catalog_size, "held-out id outside the catalog");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  const auto shapes = bird_catalog(spec.catalog_size, spec.seed);
  json manifest = spec_json(spec);
  manifest["shapes"] = json::array();
  for (const auto& s : shapes) manifest["shapes"].push_back(shape_json(s));
  write_text(dir / "shapes.json", manifest.dump(2) + "\n");

  static constexpr const char* kViewNames[3] = {"view0", "view90", "view180"};
  for (std::size_t id = 0; id < shapes.size(); ++id) {
    const TrainingSample s = make_sample(shapes[id], id, spec);
    const std::string stem = sample_stem(id);
    const fs::path sub = dir / stem;
    fs::create_directories(sub, ec);
    if (ec) throw IoError("cannot create '" + sub.string() + "': " + ec.message());
    save_image(s.input, sub / (stem + "_input.png"));
    for (int v = 0; v < 3; ++v) save_image(s.views[v], sub / (stem + "_" + kViewNames[v] + ".png"));
    write_queries(s.queries, sub / (stem + "_queries.bin"));
  }

  if (spec.heldout.empty()) return;
  const fs::path real = dir / "real";
  fs::create_directories(real, ec);
  if (ec) throw IoError("cannot create '" + real.string() + "': " + ec.message());
  for (std::size_t id : spec.heldout) {
    const ImageRGBA input = load_image(dir / sample_stem(id) / (sample_stem(id) + "_input.png"));
    ImageRGBA photo = input;
    ImageRGBA mask(input.width, input.height);
    for (std::size_t i = 0; i < input.pixel_count(); ++i) {
      photo.alpha[i] = 1.0;
      const double m = input.alpha[i] > 0.5 ? 1.0 : 0.0;
      for (int c = 0; c < 3; ++c) mask.rgb[i * 3 + c] = m;
      mask.alpha[i] = 1.0;
    }
    save_image(photo, real / (sample_stem(id) + ".png"));
    save_image(mask, real / (sample_stem(id) + "_mask.png"));
  }
}

Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "shapes.json";
  std::ifstream in(path);
  if (!in) throw IoError("no dataset manifest at '" + path.string() + "'");
  Manifest m;
  try {
    const json j = json::parse(in);
    m.spec.catalog_size = j.at("catalog_size").get<std::size_t>();
    m.spec.seed = j.at("seed").get<std::uint64_t>();
    m.spec.image_size = j.at("image_size").get<int>();
    m.spec.ortho_scale = j.at("ortho_scale").get<double>();
    m.spec.n_uniform = j.at("n_uniform").get<std::size_t>();
    m.spec.n_surface = j.at("n_surface").get<std::size_t>();
    m.spec.noise_sd = j.at("noise_sd").get<double>();
    m.spec.heldout = j.at("heldout").get<std::vector<std::size_t>>();
    for (const auto& s : j.at("shapes")) m.shapes.push_back(json_shape(s));
  } catch (const json::exception& e) {
    throw IoError("malformed manifest '" + path.string() + "': " + e.what());
  } catch (const ContractError& e) {
    throw IoError("invalid shape in '" + path.string() + "': " + e.what());
  }
  return m;
}

TrainingSample load_sample(const fs::path& dir, std::size_t id) {
  const std::string stem = sample_stem(id);
  const fs::path sub = dir / stem;
  TrainingSample s;
  s.name = stem;
  s.input = load_image(sub / (stem + "_input.png"));
  for (const char* v : {"view0", "view90", "view180"}) s.views.push_back(load_image(sub / (stem + "_" + v + ".png")));
  s.queries = read_queries(sub / (stem + "_queries.bin"));
  return s;
}

std::vector<TrainingSample> load_real_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path p = entry.path();
    if (p.extension() != ".png") continue;
    const std::string stem = p.stem().string();
    if (stem.ends_with("_mask")) continue;
    if (fs::exists(dir / (stem + "_mask.png"))) images.push_back(p);
  }
  std::sort(images.begin(), images.end());
  std::vector<TrainingSample> out;
  for (const auto& p : images) out.push_back(load_real_sample(p, dir / (p.stem().string() + "_mask.png")));
  return out;
}

}  // namespace iforge::synth
