// SPDX-License-Identifier: Apache-2.0

#include "gsdf/extraction.hpp"

#include "gsdf/mc_tables.hpp"

#include <algorithm>
#include <cmath>

namespace gsdf {

namespace {

std::vector<VoxelKey> sorted_keys(const GradientSdfVolume& vol) {
  std::vector<VoxelKey> keys;
  keys.reserve(vol.size());
  for (const auto& [key, voxel] : vol.voxels()) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

bool within(const Vec3& offset, double bound) {
  return offset.cwiseAbs().maxCoeff() <= bound;
}

std::optional<Vec3> color_of(const VoxelColorMap* colors, const VoxelKey& key) {
  if (colors == nullptr) return std::nullopt;
  const auto it = colors->find(key);
  if (it == colors->end()) return std::nullopt;
  return it->second;
}

}  // namespace

SurfelCloud extract_surfels(const GradientSdfVolume& vol, const VoxelColorMap* colors) {
  SurfelCloud cloud;
  const double half = 0.5 * vol.voxel_size();
  for (const VoxelKey& key : sorted_keys(vol)) {
    const GradVoxel& voxel = vol.voxels().at(key);
    if (!(voxel.weight > 0.0f)) continue;
    const auto g = normalized_gradient(voxel);
    if (!g) continue;
    const Vec3 offset = static_cast<double>(voxel.dist) * *g;
    if (!within(offset, half)) continue;
    cloud.push_back({vol.center(key) - offset, -*g, color_of(colors, key)});
  }
  return cloud;
}

SurfelCloud extract_surfels_upsampled(const GradientSdfVolume& vol, const VoxelColorMap* colors) {
  SurfelCloud cloud;
  const double quarter = 0.25 * vol.voxel_size();
  for (const VoxelKey& key : sorted_keys(vol)) {
    const GradVoxel& voxel = vol.voxels().at(key);
    if (!(voxel.weight > 0.0f)) continue;
    const auto g = normalized_gradient(voxel);
    if (!g) continue;
    const Vec3 center = vol.center(key);
    const auto color = color_of(colors, key);
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 o(corner & 1 ? quarter : -quarter, corner & 2 ? quarter : -quarter,
                   corner & 4 ? quarter : -quarter);
      const double d = static_cast<double>(voxel.dist) + o.dot(*g);
      const Vec3 offset = d * *g;
      if (!within(offset, quarter)) continue;
      cloud.push_back({center + o - offset, -*g, color});
    }
  }
  return cloud;
}

namespace {

struct Corner {
  double dist = 0.0;
  bool valid = false;
};

// Edge identified by its lower grid endpoint and axis; axis kAtCorner marks a
// vertex sitting exactly on a grid point with psi = 0.
constexpr int kAtCorner = 3;

struct EdgeKey {
  VoxelKey origin;
  int axis = 0;
  bool operator==(const EdgeKey&) const = default;
};

struct EdgeKeyHash {
  std::size_t operator()(const EdgeKey& e) const noexcept {
    return VoxelKeyHash{}(e.origin) ^ (static_cast<std::size_t>(e.axis) * 2654435761u);
  }
};

}  // namespace

TriangleMesh layered_marching_cubes(const GradientSdfVolume& vol, double weight_min,
                                    MarchingCubesStats* stats) {
  TriangleMesh mesh;
  MarchingCubesStats local;
  if (vol.empty()) {
    if (stats) *stats = local;
    return mesh;
  }

  VoxelKey lo = vol.voxels().begin()->first;
  VoxelKey hi = lo;
  for (const auto& [key, voxel] : vol.voxels()) {
    lo = {std::min(lo.x, key.x), std::min(lo.y, key.y), std::min(lo.z, key.z)};
    hi = {std::max(hi.x, key.x), std::max(hi.y, key.y), std::max(hi.z, key.z)};
  }
  const int nx = hi.x - lo.x + 1;
  const int ny = hi.y - lo.y + 1;
  const auto cells = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  local.layer_cells = cells;

  auto fill_layer = [&](std::vector<Corner>& layer, std::int32_t z) {
    layer.assign(cells, Corner{});
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const GradVoxel* v = vol.find({lo.x + x, lo.y + y, z});
        if (v != nullptr && v->weight >= weight_min) {
          layer[static_cast<std::size_t>(y) * nx + x] = {static_cast<double>(v->dist), true};
        }
      }
    }
  };

  std::array<std::vector<Corner>, 2> layers;
  fill_layer(layers[0], lo.z);
  local.peak_buffered_cells = cells;
  std::unordered_map<EdgeKey, std::uint32_t, EdgeKeyHash> edge_vertices;
  const double vs = vol.voxel_size();

  for (std::int32_t z = lo.z; z < hi.z; ++z) {
    fill_layer(layers[1], z + 1);
    local.peak_buffered_cells = std::max(local.peak_buffered_cells, 2 * cells);

    for (int y = 0; y + 1 < ny; ++y) {
      for (int x = 0; x + 1 < nx; ++x) {
        ++local.cubes_visited;
        std::array<Corner, 8> c;
        bool complete = true;
        int cube_index = 0;
        for (int i = 0; i < 8 && complete; ++i) {
          const auto& off = mc::kCornerOffsets[static_cast<std::size_t>(i)];
          c[static_cast<std::size_t>(i)] =
              layers[static_cast<std::size_t>(off[2])][static_cast<std::size_t>(y + off[1]) * nx + x + off[0]];
          complete = c[static_cast<std::size_t>(i)].valid;
          if (c[static_cast<std::size_t>(i)].dist < 0.0) cube_index |= 1 << i;
        }
        if (!complete) continue;
        const int edges = mc::kEdgeTable[static_cast<std::size_t>(cube_index)];
        if (edges == 0) continue;

        std::array<std::uint32_t, 12> vertex_of_edge{};
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          const auto& ends = mc::kEdgeCorners[static_cast<std::size_t>(e)];
          const auto& oa = mc::kCornerOffsets[static_cast<std::size_t>(ends[0])];
          const auto& ob = mc::kCornerOffsets[static_cast<std::size_t>(ends[1])];
          const VoxelKey ka{lo.x + x + oa[0], lo.y + y + oa[1], z + oa[2]};
          const VoxelKey kb{lo.x + x + ob[0], lo.y + y + ob[1], z + ob[2]};
          // Orient every edge from its lower to its upper endpoint so both
          // cubes sharing it compute bit-identical positions.
          const bool forward = ka < kb;
          const VoxelKey k0 = forward ? ka : kb;
          const VoxelKey k1 = forward ? kb : ka;
          const double d0 = c[static_cast<std::size_t>(forward ? ends[0] : ends[1])].dist;
          const double d1 = c[static_cast<std::size_t>(forward ? ends[1] : ends[0])].dist;
          // A zero at an endpoint puts the vertex on that grid point, where
          // every edge meeting there must produce the same vertex.
          EdgeKey ek{k0, k1.x != k0.x ? 0 : (k1.y != k0.y ? 1 : 2)};
          if (d0 == 0.0) ek = {k0, kAtCorner};
          if (d1 == 0.0) ek = {k1, kAtCorner};
          const auto it = edge_vertices.find(ek);
          if (it != edge_vertices.end()) {
            vertex_of_edge[static_cast<std::size_t>(e)] = it->second;
            continue;
          }
          const Vec3 p0 = key_to_world(k0, vs);
          const Vec3 p1 = key_to_world(k1, vs);
          const auto index = static_cast<std::uint32_t>(mesh.vertices.size());
          mesh.vertices.push_back(ek.axis == kAtCorner ? key_to_world(ek.origin, vs)
                                                       : Vec3(p0 + d0 / (d0 - d1) * (p1 - p0)));
          edge_vertices.emplace(ek, index);
          vertex_of_edge[static_cast<std::size_t>(e)] = index;
        }

        const auto& tri = mc::kTriTable[static_cast<std::size_t>(cube_index)];
        for (std::size_t t = 0; tri[t] != -1; t += 3) {
          // Table order is counter-clockwise seen from the negative corners,
          // which are free space.
          const std::array<std::uint32_t, 3> f = {vertex_of_edge[static_cast<std::size_t>(tri[t])],
                                                  vertex_of_edge[static_cast<std::size_t>(tri[t + 1])],
                                                  vertex_of_edge[static_cast<std::size_t>(tri[t + 2])]};
          if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
          const Vec3& a = mesh.vertices[f[0]];
          const double area2 = (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a).norm();
          if (area2 <= 2e-12) continue;
          mesh.triangles.push_back(f);
        }
      }
    }

    // Edges at or below layer z can no longer be shared.
    std::erase_if(edge_vertices, [z](const auto& kv) { return kv.first.origin.z <= z; });
    std::swap(layers[0], layers[1]);
  }
  if (stats) *stats = local;
  return mesh;
}

}  // namespace gsdf
