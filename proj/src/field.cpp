// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include "iforge/field.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "iforge/errors.hpp"
#include "iforge/ops.hpp"
#include "iforge/random.hpp"

namespace iforge::field {

namespace {

struct ConvSpec {
  std::size_t in, out, stride;
};
constexpr ConvSpec kEncoder[4] = {{3, 16, 1}, {16, 16, 2}, {16, 32, 2}, {32, 32, 1}};

ParamGroup group_of(const std::string& name) {
  if (name.rfind("enc", 0) == 0) return ParamGroup::Encoder;
  if (name.rfind("occ", 0) == 0) return ParamGroup::Occupancy;
  return ParamGroup::Texture;
}

std::size_t fan_in(const ad::Shape& weight_shape) {
  if (weight_shape.size() == 4) return weight_shape[1] * 9;
  return weight_shape[0];  // linear weights are [in, out]
}

}  // namespace

std::vector<std::pair<std::string, ad::Shape>> FieldParams::layout() {
  std::vector<std::pair<std::string, ad::Shape>> out;
  for (int l = 0; l < 4; ++l) {
    const auto& c = kEncoder[l];
    out.push_back({"enc" + std::to_string(l) + ".weight", {c.out, c.in, 3, 3}});
    out.push_back({"enc" + std::to_string(l) + ".bias", {c.out}});
  }
  for (const char* head : {"occ", "tex"}) {
    const std::size_t out_dim = std::string(head) == "occ" ? 1 : 3;
    const std::size_t dims[4] = {kFeatureDim + 1, kHidden, kHidden, out_dim};
    for (int l = 0; l < 3; ++l) {
      out.push_back({std::string(head) + std::to_string(l) + ".weight", {dims[l], dims[l + 1]}});
      out.push_back({std::string(head) + std::to_string(l) + ".bias", {dims[l + 1]}});
    }
  }
  return out;
}

FieldParams FieldParams::initialize(std::uint64_t seed) {
  Rng rng(seed);
  FieldParams p;
  const auto shapes = layout();
  // Bias bounds use the fan-in of the weight they belong to.
  std::size_t last_fan_in = 1;
  for (const auto& [name, shape] : shapes) {
    const bool is_weight = name.ends_with(".weight");
    if (is_weight) last_fan_in = fan_in(shape);
    const double s = 1.0 / std::sqrt(static_cast<double>(last_fan_in));
    std::vector<double> values(ad::numel(shape));
    for (auto& v : values) v = rng.uniform(-s, s);
    p.params_.push_back({name, group_of(name), ad::Tensor::from_data(shape, std::move(values), true)});
  }
  return p;
}

FieldParams FieldParams::from_tensors(std::vector<NamedParam> tensors) {
  const auto shapes = layout();
  IFORGE_REQUIRE(tensors.size() == shapes.size(), "parameter count does not match architecture");
  FieldParams p;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    IFORGE_REQUIRE(tensors[i].name == shapes[i].first,
                   "unexpected parameter '" + tensors[i].name + "', wanted '" + shapes[i].first + "'");
    IFORGE_REQUIRE(tensors[i].tensor.shape() == shapes[i].second,
                   "parameter '" + tensors[i].name + "' has shape " +
                       ad::shape_str(tensors[i].tensor.shape()));
    auto t = tensors[i].tensor.detach();
    t.set_requires_grad(true);
    p.params_.push_back({shapes[i].first, group_of(shapes[i].first), t});
  }
  p.validate();
  return p;
}

const ad::Tensor& FieldParams::get(const std::string& name) const {
  for (const auto& np : params_)
    if (np.name == name) return np.tensor;
  throw ContractError("no parameter named '" + name + "'");
}

FieldParams FieldParams::clone() const {
  FieldParams p;
  for (const auto& np : params_) {
    auto t = np.tensor.detach();
    t.set_requires_grad(true);
    p.params_.push_back({np.name, np.group, t});
  }
  return p;
}

void FieldParams::zero_grad() {
  for (auto& np : params_) np.tensor.zero_grad();
}

void FieldParams::validate() const {
  const auto shapes = layout();
  IFORGE_REQUIRE(params_.size() == shapes.size(), "parameter count does not match architecture");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    IFORGE_REQUIRE(params_[i].tensor.shape() == shapes[i].second,
                   "parameter '" + params_[i].name + "' has the wrong shape");
    for (double v : params_[i].tensor.data())
      IFORGE_REQUIRE(std::isfinite(v), "parameter '" + params_[i].name + "' is not finite");
  }
}

std::size_t FieldParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& np : params_) n += np.tensor.numel();
  return n;
}

// ---------------------------------------------------------------------------

ad::Tensor image_to_chw(const ImageRGBA& image) {
  const std::size_t h = image.height, w = image.width;
  std::vector<double> chw(3 * h * w);
  for (std::size_t i = 0; i < h * w; ++i)
    for (int c = 0; c < 3; ++c) chw[c * h * w + i] = image.rgb[i * 3 + c];
  return ad::Tensor::from_data({3, h, w}, std::move(chw));
}

FeatureGrid encode_image(const FieldParams& params, const ImageRGBA& image, double ortho_scale) {
  IFORGE_REQUIRE(image.width % kFeatureStride == 0 && image.height % kFeatureStride == 0,
                 "input image extents must be divisible by 4, got " + std::to_string(image.width) +
                     "x" + std::to_string(image.height));
  ad::Tensor x = image_to_chw(image);
  for (int l = 0; l < 4; ++l) {
    const std::string prefix = "enc" + std::to_string(l);
    x = ad::relu(ad::conv2d_3x3(x, params.get(prefix + ".weight"), params.get(prefix + ".bias"),
                                kEncoder[l].stride));
  }
  FeatureGrid grid;
  grid.features = x;
  grid.camera = camera_for_azimuth(0.0, image.width, image.height, ortho_scale);
  return grid;
}

std::array<double, 2> pixel_to_cell(double px, double py) {
  // Cell q is centered on input pixel 4q, i.e. at coordinate 4q + 0.5.
  return {(px - 0.5) / kFeatureStride, (py - 0.5) / kFeatureStride};
}

std::vector<double> sample_feature(const FeatureGrid& grid, double px, double py) {
  const std::array<double, 2> cell = pixel_to_cell(px, py);
  const ad::Tensor f = ad::bilinear_sample(grid.features, std::span(&cell, 1));
  return {f.data().begin(), f.data().end()};
}

ad::Tensor query_features(const FeatureGrid& grid, std::span<const Vec3> points) {
  IFORGE_REQUIRE(!points.empty(), "query_features with no points");
  std::vector<std::array<double, 2>> cells(points.size());
  std::vector<double> depth(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Projection pr = project(grid.camera, points[i]);
    cells[i] = pixel_to_cell(pr.x, pr.y);
    depth[i] = pr.depth;
  }
  const ad::Tensor feats = ad::bilinear_sample(grid.features, cells);
  return ad::concat_cols(feats, ad::Tensor::from_data({points.size(), 1}, std::move(depth)));
}

namespace {

ad::Tensor mlp(const FieldParams& params, const std::string& head, const ad::Tensor& x) {
  ad::Tensor h = ad::relu(ad::linear(x, params.get(head + "0.weight"), params.get(head + "0.bias")));
  h = ad::relu(ad::linear(h, params.get(head + "1.weight"), params.get(head + "1.bias")));
  return ad::sigmoid(ad::linear(h, params.get(head + "2.weight"), params.get(head + "2.bias")));
}

}  // namespace

ad::Tensor occupancy_head(const FieldParams& params, const ad::Tensor& conditioning) {
  const ad::Tensor out = mlp(params, "occ", conditioning);
  return ad::reshape(out, {out.dim(0)});
}

ad::Tensor texture_head(const FieldParams& params, const ad::Tensor& conditioning) {
  return mlp(params, "tex", conditioning);
}

ad::Tensor predict_occupancy(const FieldParams& params, const FeatureGrid& grid,
                             std::span<const Vec3> points) {
  return occupancy_head(params, query_features(grid, points));
}

ad::Tensor predict_color(const FieldParams& params, const FeatureGrid& grid,
                         std::span<const Vec3> points) {
  return texture_head(params, query_features(grid, points));
}

double predict_occupancy(const FieldParams& params, const ImageRGBA& image, const Vec3& point) {
  ad::NoGradGuard guard;
  return predict_occupancy(params, encode_image(params, image), std::span(&point, 1)).item();
}

Vec3 predict_color(const FieldParams& params, const ImageRGBA& image, const Vec3& point) {
  ad::NoGradGuard guard;
  const ad::Tensor c = predict_color(params, encode_image(params, image), std::span(&point, 1));
  return {c.at(0), c.at(1), c.at(2)};
}

surface::ScalarGrid occupancy_grid(const FieldParams& params, const FeatureGrid& grid,
                                   int grid_res, double iso) {
  IFORGE_REQUIRE(grid_res >= 2, "occupancy grid resolution must be at least 2");
  ad::NoGradGuard guard;
  surface::ScalarGrid g(grid_res, iso);
  // One z-slice per batch keeps intermediate activations small.
  std::vector<Vec3> slice(static_cast<std::size_t>(grid_res) * grid_res);
  for (int k = 0; k < grid_res; ++k) {
    for (int j = 0; j < grid_res; ++j)
      for (int i = 0; i < grid_res; ++i) slice[static_cast<std::size_t>(j) * grid_res + i] = g.node(i, j, k);
    const ad::Tensor occ = predict_occupancy(params, grid, slice);
    const auto v = occ.data();
    std::copy(v.begin(), v.end(), g.values.begin() + static_cast<std::ptrdiff_t>(g.index(0, 0, k)));
  }
  return g;
}

double lattice_splat_radius(int grid_res) {
  return render::splat_radius_for_spacing(2.0 / (grid_res - 1));
}

std::vector<std::size_t> select_lattice(const surface::ScalarGrid& occupancy, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t idx = 0; idx < occupancy.values.size(); ++idx)
    if (occupancy.values[idx] > threshold) out.push_back(idx);
  return out;
}

FieldCloud cloud_from_occupancy(const FieldParams& params, const FeatureGrid& grid,
                                const surface::ScalarGrid& occupancy, double threshold) {
  FieldCloud out;
  out.cloud.radius = lattice_splat_radius(occupancy.res);
  const auto res = static_cast<std::size_t>(occupancy.res);
  out.lattice_index = select_lattice(occupancy, threshold);
  for (std::size_t idx : out.lattice_index) {
    const int i = static_cast<int>(idx % res), j = static_cast<int>((idx / res) % res),
              k = static_cast<int>(idx / (res * res));
    out.cloud.positions.push_back(occupancy.node(i, j, k));
  }
  const std::size_t n = out.cloud.positions.size();
  if (n == 0) return out;

  const ad::Tensor cond = query_features(grid, out.cloud.positions);
  out.inputs.opacity = occupancy_head(params, cond);
  out.inputs.colors = texture_head(params, cond);
  std::vector<double> pos(n * 3);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) pos[i * 3 + c] = out.cloud.positions[i][c];
  out.inputs.positions = ad::Tensor::from_data({n, 3}, std::move(pos));
  const auto col = out.inputs.colors.data();
  out.cloud.colors.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.cloud.colors[i] = {col[i * 3], col[i * 3 + 1], col[i * 3 + 2]};
  return out;
}

FieldCloud extract_point_cloud(const FieldParams& params, const FeatureGrid& grid, int grid_res,
                               double threshold) {
  IFORGE_REQUIRE(grid_res >= 8, "point cloud extraction needs grid_res >= 8");
  return cloud_from_occupancy(params, grid, occupancy_grid(params, grid, grid_res), threshold);
}

PointCloud extract_point_cloud(const FieldParams& params, const ImageRGBA& image, int grid_res,
                               double threshold) {
  ad::NoGradGuard guard;
  return extract_point_cloud(params, encode_image(params, image), grid_res, threshold).cloud;
}

Mesh reconstruct_mesh(const FieldParams& params, const FeatureGrid& grid, int grid_res, double iso) {
  ad::NoGradGuard guard;
  Mesh mesh = surface::marching_cubes(occupancy_grid(params, grid, grid_res, iso));
  if (mesh.vertices.empty()) return mesh;
  const ad::Tensor colors = predict_color(params, grid, mesh.vertices);
  const auto c = colors.data();
  mesh.colors.resize(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) mesh.colors[i] = {c[i * 3], c[i * 3 + 1], c[i * 3 + 2]};
  return mesh;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'I', 'F', 'O', 'R', 'G', 'E', 'C', 'K'};

template <class T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint64_t bits = 0;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(std::istream& in, const std::filesystem::path& path) {
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw IoError("truncated checkpoint '" + path.string() + "'");
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const FieldParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.params().size()));
  for (const auto& np : params.params()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(np.name.size()));
    out.write(np.name.data(), static_cast<std::streamsize>(np.name.size()));
    const auto& shape = np.tensor.shape();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto e : shape) put_le<std::uint64_t>(out, e);
    for (double v : np.tensor.data()) put_le<double>(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

FieldParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file: '" + path.string() + "'");
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in '" +
                  path.string() + "'");
  const auto count = get_le<std::uint32_t>(in, path);
  if (count > 1024) throw IoError("corrupt checkpoint '" + path.string() + "'");
  std::vector<NamedParam> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = get_le<std::uint32_t>(in, path);
    if (name_len > 4096) throw IoError("corrupt checkpoint '" + path.string() + "'");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = get_le<std::uint32_t>(in, path);
    if (rank == 0 || rank > 8) throw IoError("corrupt checkpoint '" + path.string() + "'");
    ad::Shape shape(rank);
    std::size_t total = 1;
    for (auto& e : shape) {
      e = get_le<std::uint64_t>(in, path);
      if (e == 0 || e > (1u << 24)) throw IoError("corrupt checkpoint '" + path.string() + "'");
      total *= e;
    }
    if (total > (1u << 26)) throw IoError("corrupt checkpoint '" + path.string() + "'");
    std::vector<double> values(total);
    for (auto& v : values) v = get_le<double>(in, path);
    tensors.push_back({name, group_of(name), ad::Tensor::from_data(shape, std::move(values))});
  }
  try {
    return FieldParams::from_tensors(std::move(tensors));
  } catch (const ContractError& e) {
    throw IoError("checkpoint '" + path.string() + "' does not match the architecture: " + e.what());
  }
}

}  // namespace iforge::field
