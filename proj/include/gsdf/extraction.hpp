// SPDX-License-Identifier: Apache-2.0
//
// Explicit geometry from the implicit volume: oriented surfels at the closest
// surface points of near-surface voxels, and triangle meshes from a marching
// cubes sweep that keeps only two z-layers of the bounding box in memory.

#pragma once

#include "gsdf/geometry.hpp"
#include "gsdf/volume.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

namespace gsdf {

struct Surfel {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();  // unit, pointing out of the object
  std::optional<Vec3> color;    // rgb in [0, 1]
};

using SurfelCloud = std::vector<Surfel>;
using VoxelColorMap = std::unordered_map<VoxelKey, Vec3, VoxelKeyHash>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Vec3> colors;  // empty or one per vertex
};

/// One surfel v - psi * g with normal -g per observed voxel whose offset
/// psi * g has every component within voxel_size / 2. Surfels are emitted in
/// key order; colors are attached for voxels present in `colors`.
SurfelCloud extract_surfels(const GradientSdfVolume& vol, const VoxelColorMap* colors = nullptr);

/// Splits every voxel into 2 x 2 x 2 subvoxels of half size, extrapolates the
/// distance to each subvoxel center s with d = psi + (s - v)^T g and emits
/// s - d * g where every component of d * g is within voxel_size / 4.
SurfelCloud extract_surfels_upsampled(const GradientSdfVolume& vol,
                                      const VoxelColorMap* colors = nullptr);

inline constexpr double kDefaultMcWeightMin = 1e-3;

struct MarchingCubesStats {
  std::size_t layer_cells = 0;  // cells per z-layer of the bounding box
  std::size_t peak_buffered_cells = 0;
  std::size_t cubes_visited = 0;
};

/// Marching cubes over the key bounding box, one pair of z-layers at a time.
/// Cubes with a corner that is missing or has weight below weight_min are
/// skipped. Vertices on shared edges are merged, a grid point holding psi = 0
/// exactly yields one vertex for all its edges, degenerate triangles are
/// dropped and faces are wound counter-clockwise seen from free space.
TriangleMesh layered_marching_cubes(const GradientSdfVolume& vol,
                                    double weight_min = kDefaultMcWeightMin,
                                    MarchingCubesStats* stats = nullptr);

}  // namespace gsdf
