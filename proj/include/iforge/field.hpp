// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
//
// Pixel-aligned implicit field. A small convolutional encoder turns the input
// view into a feature grid at 1/4 resolution. A 3D query point is projected
// into the input view, its feature is bilinearly sampled and concatenated
// with the view-space depth, and two MLP heads map that to an occupancy
// probability and an RGB color.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "iforge/geometry.hpp"
#include "iforge/render.hpp"
#include "iforge/surface.hpp"
#include "iforge/tensor.hpp"

namespace iforge::field {

inline constexpr std::size_t kFeatureDim = 32;
inline constexpr int kFeatureStride = 4;
inline constexpr std::size_t kHidden = 64;

enum class ParamGroup { Encoder, Occupancy, Texture };

struct NamedParam {
  std::string name;
  ParamGroup group;
  ad::Tensor tensor;
};

/// All learnable weights. Encoder: 3->16 (s1), 16->16 (s2), 16->32 (s2),
/// 32->32 (s1), 3x3 kernels with relu. Heads: [33 -> 64 -> 64 -> k] with relu
/// hidden layers and sigmoid output, k = 1 (occupancy) or 3 (texture).
class FieldParams {
 public:
  static FieldParams initialize(std::uint64_t seed);

  // Stable order used by checkpoints and the optimizer.
  const std::vector<NamedParam>& params() const { return params_; }
  std::vector<NamedParam>& params() { return params_; }
  const ad::Tensor& get(const std::string& name) const;

  FieldParams clone() const;  // deep copy with fresh leaves
  void zero_grad();
  void validate() const;
  std::size_t scalar_count() const;

  static std::vector<std::pair<std::string, ad::Shape>> layout();

  static FieldParams from_tensors(std::vector<NamedParam> tensors);

 private:
  std::vector<NamedParam> params_;
};

/// Feature grid [kFeatureDim, H/4, W/4] for one input view.
struct FeatureGrid {
  ad::Tensor features;
  Camera camera;  // the input-view camera used for pixel alignment

  std::size_t rows() const { return features.dim(1); }
  std::size_t cols() const { return features.dim(2); }
};

ad::Tensor image_to_chw(const ImageRGBA& image);

/// Runs the encoder. The input camera is the canonical azimuth-0 view with the
/// image's extents. Extents must be divisible by 4.
FeatureGrid encode_image(const FieldParams& params, const ImageRGBA& image,
                         double ortho_scale = kDefaultOrthoScale);

/// Continuous feature-cell coordinate of an image-space pixel position.
std::array<double, 2> pixel_to_cell(double px, double py);

/// Bilinear feature at pixel position (px, py); zero outside the grid.
std::vector<double> sample_feature(const FeatureGrid& grid, double px, double py);

/// [N, kFeatureDim + 1] conditioning: sampled feature ++ view depth.
ad::Tensor query_features(const FeatureGrid& grid, std::span<const Vec3> points);

ad::Tensor occupancy_head(const FieldParams& params, const ad::Tensor& conditioning);  // [N]
ad::Tensor texture_head(const FieldParams& params, const ad::Tensor& conditioning);    // [N,3]

ad::Tensor predict_occupancy(const FieldParams& params, const FeatureGrid& grid,
                             std::span<const Vec3> points);
ad::Tensor predict_color(const FieldParams& params, const FeatureGrid& grid,
                         std::span<const Vec3> points);

double predict_occupancy(const FieldParams& params, const ImageRGBA& image, const Vec3& point);
Vec3 predict_color(const FieldParams& params, const ImageRGBA& image, const Vec3& point);

/// Occupancy at every lattice node of [-1, 1]^3 (no graph).
surface::ScalarGrid occupancy_grid(const FieldParams& params, const FeatureGrid& grid,
                                   int grid_res, double iso = 0.5);

/// Lattice points whose occupancy exceeds the threshold (strictly), with
/// graph-tracked colors and opacity = occupancy.
struct FieldCloud {
  PointCloud cloud;            // plain values
  render::SplatInputs inputs;  // positions constant, colors/opacity tracked
  std::vector<std::size_t> lattice_index;
};

FieldCloud extract_point_cloud(const FieldParams& params, const FeatureGrid& grid, int grid_res,
                               double threshold);
PointCloud extract_point_cloud(const FieldParams& params, const ImageRGBA& image, int grid_res,
                               double threshold);

/// Indices of lattice nodes with value strictly above the threshold, in
/// lattice order.
std::vector<std::size_t> select_lattice(const surface::ScalarGrid& occupancy, double threshold);

// Same selection from a precomputed occupancy lattice.
FieldCloud cloud_from_occupancy(const FieldParams& params, const FeatureGrid& grid,
                                const surface::ScalarGrid& occupancy, double threshold);

double lattice_splat_radius(int grid_res);

/// Marching cubes over the occupancy lattice with vertex colors from the
/// texture head.
Mesh reconstruct_mesh(const FieldParams& params, const FeatureGrid& grid, int grid_res,
                      double iso = 0.5);

// Checkpoint file: "IFORGECK" magic, u32 version, u32 tensor count, then per
// tensor: u32 name length, name bytes, u32 rank, u64 extents, f64 values.
// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const FieldParams& params, const std::filesystem::path& path);
FieldParams load_checkpoint(const std::filesystem::path& path);

}  // namespace iforge::field
