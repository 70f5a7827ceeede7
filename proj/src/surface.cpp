// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include "iforge/surface.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include "iforge/errors.hpp"
#include "mc_tables.hpp"

namespace iforge::surface {

using detail::kCorner;
using detail::kEdge;
using detail::kTriTable;

ScalarGrid::ScalarGrid(int resolution, double iso_value)
    : res(resolution),
      values(static_cast<std::size_t>(resolution) * resolution * resolution, 0.0),
      iso(iso_value) {
  IFORGE_REQUIRE(resolution >= 2, "scalar grid needs at least 2 nodes per axis");
}

void ScalarGrid::validate() const {
  IFORGE_REQUIRE(res >= 2, "scalar grid needs at least 2 nodes per axis");
  IFORGE_REQUIRE(values.size() == static_cast<std::size_t>(res) * res * res,
                 "scalar grid value count mismatch");
  for (double v : values)
    IFORGE_REQUIRE(std::isfinite(v) && v >= 0.0 && v <= 1.0, "scalar grid value outside [0,1]");
}

ScalarGrid sample_grid(int resolution, const std::function<double(const Vec3&)>& field,
                       double iso) {
  ScalarGrid g(resolution, iso);
  for (int k = 0; k < resolution; ++k)
    for (int j = 0; j < resolution; ++j)
      for (int i = 0; i < resolution; ++i) g.values[g.index(i, j, k)] = field(g.node(i, j, k));
  return g;
}

namespace {

// A lattice edge is named by its lower node and axis.
std::uint64_t edge_key(const ScalarGrid& g, int i, int j, int k, int corner_a, int corner_b) {
  const int* a = kCorner[corner_a];
  const int* b = kCorner[corner_b];
  const int lx = i + std::min(a[0], b[0]);
  const int ly = j + std::min(a[1], b[1]);
  const int lz = k + std::min(a[2], b[2]);
  const int axis = (a[0] != b[0]) ? 0 : (a[1] != b[1]) ? 1 : 2;
  return g.index(lx, ly, lz) * 3 + static_cast<std::uint64_t>(axis);
}

Vec3 edge_vertex(const ScalarGrid& g, std::uint64_t key) {
  const auto node = static_cast<std::size_t>(key / 3);
  const int axis = static_cast<int>(key % 3);
  const int i = static_cast<int>(node % g.res);
  const int j = static_cast<int>((node / g.res) % g.res);
  const int k = static_cast<int>(node / (static_cast<std::size_t>(g.res) * g.res));
  const int di = axis == 0, dj = axis == 1, dk = axis == 2;
  const double va = g.at(i, j, k), vb = g.at(i + di, j + dj, k + dk);
  const double t = (g.iso - va) / (vb - va);
  const Vec3 pa = g.node(i, j, k), pb = g.node(i + di, j + dj, k + dk);
  return pa + t * (pb - pa);
}

// Appends the triangles of cell (i, j, k) as edge-key triples.
void polygonize_cell(const ScalarGrid& g, int i, int j, int k,
                     std::vector<std::array<std::uint64_t, 3>>& out) {
  int cube = 0;
  for (int c = 0; c < 8; ++c)
    if (g.at(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]) < g.iso) cube |= 1 << c;
  if (cube == 0 || cube == 255) return;
  const std::int8_t* row = kTriTable[cube];
  for (int t = 0; t < 16 && row[t] >= 0; t += 3) {
    std::array<std::uint64_t, 3> tri{};
    for (int v = 0; v < 3; ++v) {
      const int e = row[t + v];
      tri[v] = edge_key(g, i, j, k, kEdge[e][0], kEdge[e][1]);
    }
    // Table order already faces the low-valued (outside) side because our
    // inside test is value >= iso.
    out.push_back(tri);
  }
}

// Assigns vertex ids in order of first use so the mesh only depends on the
// triangle sequence.
Mesh assemble(const ScalarGrid& g, const std::vector<std::array<std::uint64_t, 3>>& tris) {
  Mesh mesh;
  constexpr std::uint32_t kUnset = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> vertex_of(static_cast<std::size_t>(g.res) * g.res * g.res * 3, kUnset);
  mesh.triangles.reserve(tris.size());
  for (const auto& tri : tris) {
    std::array<std::uint32_t, 3> ids{};
    for (int v = 0; v < 3; ++v) {
      auto& slot = vertex_of[tri[v]];
      if (slot == kUnset) {
        slot = static_cast<std::uint32_t>(mesh.vertices.size());
        mesh.vertices.push_back(edge_vertex(g, tri[v]));
      }
      ids[v] = slot;
    }
    mesh.triangles.push_back(ids);
  }
  return mesh;
}

}  // namespace

namespace serial {

Mesh marching_cubes(const ScalarGrid& grid) {
  grid.validate();
  std::vector<std::array<std::uint64_t, 3>> tris;
  for (int k = 0; k + 1 < grid.res; ++k)
    for (int j = 0; j + 1 < grid.res; ++j)
      for (int i = 0; i + 1 < grid.res; ++i) polygonize_cell(grid, i, j, k, tris);
  return assemble(grid, tris);
}

}  // namespace serial

Mesh marching_cubes(const ScalarGrid& grid) {
  grid.validate();
  const int slabs = grid.res - 1;
  std::vector<std::vector<std::array<std::uint64_t, 3>>> per_slab(slabs);
#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < slabs; ++k)
    for (int j = 0; j + 1 < grid.res; ++j)
      for (int i = 0; i + 1 < grid.res; ++i) polygonize_cell(grid, i, j, k, per_slab[k]);
  std::vector<std::array<std::uint64_t, 3>> tris;
  for (auto& s : per_slab) tris.insert(tris.end(), s.begin(), s.end());
  return assemble(grid, tris);
}

void export_obj(const Mesh& mesh, const std::filesystem::path& path) {
  mesh.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write OBJ '" + path.string() + "'");
  out << "# implicit_forge mesh: " << mesh.vertices.size() << " vertices, "
      << mesh.triangles.size() << " triangles\n";
  char buf[160];
  const bool colored = !mesh.colors.empty();
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    if (colored) {
      const Vec3& c = mesh.colors[i];
      std::snprintf(buf, sizeof(buf), "v %.6f %.6f %.6f %.6f %.6f %.6f\n", v[0], v[1], v[2], c[0],
                    c[1], c[2]);
    } else {
      std::snprintf(buf, sizeof(buf), "v %.6f %.6f %.6f\n", v[0], v[1], v[2]);
    }
    out << buf;
  }
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw IoError("failed writing OBJ '" + path.string() + "'");
}

}  // namespace iforge::surface
