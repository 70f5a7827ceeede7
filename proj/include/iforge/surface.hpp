// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <vector>

#include "iforge/geometry.hpp"

namespace iforge::surface {

/// Occupancy samples on a lattice spanning [-1, 1]^3 with `res` nodes per
/// axis. values[(k * res + j) * res + i] is the node at x_i, y_j, z_k.
struct ScalarGrid {
  int res = 2;
  std::vector<double> values;
  double iso = 0.5;

  ScalarGrid() = default;
  explicit ScalarGrid(int resolution, double iso_value = 0.5);

  double coord(int i) const { return -1.0 + 2.0 * i / (res - 1); }
  Vec3 node(int i, int j, int k) const { return {coord(i), coord(j), coord(k)}; }
  double spacing() const { return 2.0 / (res - 1); }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * res + j) * res + i;
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }

  void validate() const;
};

/// Fills a grid by evaluating `field` at every node.
ScalarGrid sample_grid(int resolution, const std::function<double(const Vec3&)>& field,
                       double iso = 0.5);

/// Table-driven marching cubes. A node is inside when value >= iso. Vertices
/// are shared per lattice edge; triangles wind so that normals point toward
/// lower values (outward for occupancy fields).
Mesh marching_cubes(const ScalarGrid& grid);

namespace serial {
Mesh marching_cubes(const ScalarGrid& grid);
}

/// Wavefront OBJ: a header comment, `v x y z [r g b]` lines, then 1-based
/// `f a b c` lines. Numbers use %.6f; LF line endings.
void export_obj(const Mesh& mesh, const std::filesystem::path& path);

}  // namespace iforge::surface
