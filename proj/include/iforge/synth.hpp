// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
//
// Procedural training shapes with analytic occupancy, their ground-truth
// renders, occupancy query sets, and the on-disk dataset layout.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iforge/geometry.hpp"
#include "iforge/render.hpp"

namespace iforge::synth {

enum class PrimitiveKind { Sphere, Ellipsoid, Capsule };

const char* kind_name(PrimitiveKind kind);
PrimitiveKind kind_from_name(const std::string& name);

/// Sphere: center + radii[0]. Ellipsoid: center, semi-axes radii, rotated by
/// yaw about +y. Capsule: segment center..end with radius radii[0].
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Vec3 center{0, 0, 0};
  Vec3 end{0, 0, 0};
  Vec3 radii{0.5, 0.5, 0.5};
  double yaw = 0.0;
  Vec3 color{0.5, 0.5, 0.5};

  // Negative inside, zero on the surface. Exact distance for spheres and
  // capsules; for ellipsoids only the sign and zero set are meaningful.
  double implicit(const Vec3& p) const;
  std::array<Vec3, 2> bounds() const;
  double surface_area() const;
};

struct ProceduralShape {
  std::string name;
  std::vector<Primitive> primitives;

  void validate() const;  // >= 1 primitive, all inside [-0.9, 0.9]^3
  static ProceduralShape sphere(double radius, const Vec3& color, const std::string& name = "sphere");
};

/// 1 iff the point is inside the union; the boundary counts as inside.
int analytic_occupancy(const ProceduralShape& shape, const Vec3& point);

/// Deterministic catalog of bird-like shapes (body, head, beak, tail, and
/// optionally wings), 2 to 5 primitives each.
std::vector<ProceduralShape> bird_catalog(std::size_t count, std::uint64_t seed);

struct Query {
  Vec3 point;
  std::uint8_t label = 0;
};

/// n_uniform points in [-1, 1]^3 followed by n_surface surface points jittered
/// by isotropic Gaussian noise.
std::vector<Query> sample_queries(const ProceduralShape& shape, std::size_t n_uniform,
                                  std::size_t n_surface, double noise_sd, std::uint64_t seed);

/// Points per unit area of the dense ground-truth surface cloud, and splat
/// radius relative to the nominal spacing. Dense enough that interiors are
/// fully covered while rim dilation stays well under a pixel at 64x64.
inline constexpr double kSurfaceDensity = 57600.0;
inline constexpr double kSurfaceRadiusPerSpacing = 0.7;

/// Dense deterministic sampling of the union surface, colored per primitive.
PointCloud surface_cloud(const ProceduralShape& shape, double density = kSurfaceDensity);

struct GroundTruthViews {
  ImageRGBA input;               // azimuth-0 view fed to the encoder
  std::array<ImageRGBA, 3> views;  // fixed azimuths 0, 90, 180 degrees
};

GroundTruthViews render_ground_truth(const ProceduralShape& shape, int image_size,
                                     double ortho_scale = kDefaultOrthoScale);

struct TrainingSample {
  std::string name;
  ImageRGBA input;
  std::vector<ImageRGBA> views;  // empty for real samples
  std::vector<Query> queries;    // empty for real samples
};

/// Image plus binary mask. RGB outside the mask is zeroed and alpha holds the
/// binarized mask (mask > 0.5).
TrainingSample load_real_sample(const std::filesystem::path& image_path,
                                const std::filesystem::path& mask_path);

struct DatasetSpec {
  std::size_t catalog_size = 20;
  std::uint64_t seed = 7;
  int image_size = 64;
  double ortho_scale = kDefaultOrthoScale;
  std::size_t n_uniform = 1000;
  std::size_t n_surface = 3000;
  double noise_sd = 0.05;
  std::vector<std::size_t> heldout;  // catalog ids also exported as real image/mask pairs
};

TrainingSample make_sample(const ProceduralShape& shape, std::size_t id, const DatasetSpec& spec);

std::string sample_stem(std::size_t id);  // "003"

void write_queries(const std::vector<Query>& queries, const std::filesystem::path& path);
std::vector<Query> read_queries(const std::filesystem::path& path);

/// Writes shapes.json, one NNN/ directory per catalog shape and real/ pairs
/// for held-out ids.
void write_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);

struct Manifest {
  DatasetSpec spec;
  std::vector<ProceduralShape> shapes;
};

Manifest read_manifest(const std::filesystem::path& dir);
TrainingSample load_sample(const std::filesystem::path& dir, std::size_t id);

/// Real pairs in a directory: every X.png with a sibling X_mask.png, sorted.
std::vector<TrainingSample> load_real_dir(const std::filesystem::path& dir);

}  // namespace iforge::synth
